//! Declassification capabilities.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::text::LabelParseError;
use super::{Frequency, UserTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CapabilityKind {
    /// Removes the user's content tag and any timing tag for the user.
    Content,
    /// Removes the user's timing tag when its rate is at most `limit`.
    Timing(Frequency),
}

/// Authority to remove one user's tags from a label before a flow.
///
/// Text form: `A-` for content, `A-:1/5` for timing at rate `1/5`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Capability {
    pub user: UserTag,
    pub kind: CapabilityKind,
}

impl Capability {
    pub fn content(user: impl Into<UserTag>) -> Self {
        Capability { user: user.into(), kind: CapabilityKind::Content }
    }

    pub fn timing(user: impl Into<UserTag>, limit: Frequency) -> Self {
        Capability { user: user.into(), kind: CapabilityKind::Timing(limit) }
    }

    /// The highest timing rate this capability can declassify. A content
    /// capability and a timing capability at `inf` both have strength `inf`.
    pub fn strength(&self) -> Frequency {
        match self.kind {
            CapabilityKind::Content => Frequency::Infinity,
            CapabilityKind::Timing(f) => f,
        }
    }

    /// Strength comparison; `Timing(inf)` and `Content` are equally strong.
    pub fn at_least_as_strong_as(&self, other: &Capability) -> bool {
        self.user == other.user && self.strength() >= other.strength()
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            CapabilityKind::Content => write!(f, "{}-", self.user),
            CapabilityKind::Timing(limit) => write!(f, "{}-:{}", self.user, limit),
        }
    }
}

impl FromStr for Capability {
    type Err = LabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let dash = s.find('-').ok_or_else(|| LabelParseError::new(s.len(), "capability must contain '-'"))?;
        let user = UserTag::new(&s[..dash]).map_err(|e| LabelParseError::new(0, e.to_string()))?;
        let rest = &s[dash + 1..];
        if rest.is_empty() {
            return Ok(Capability::content(user));
        }
        let Some(freq) = rest.strip_prefix(':') else {
            return Err(LabelParseError::new(dash + 1, "expected ':' after '-'"));
        };
        let limit: Frequency =
            freq.parse().map_err(|e: LabelParseError| LabelParseError::new(dash + 2 + e.pos, e.msg))?;
        Ok(Capability::timing(user, limit))
    }
}

impl Serialize for Capability {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Capability {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// A set of capabilities with redundant entries collapsed.
///
/// Only the strongest capability per user is kept; a content capability
/// (equivalently, timing at `inf`) subsumes every timing capability for the
/// same user.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CapabilitySet {
    strongest: BTreeMap<UserTag, Frequency>,
}

impl CapabilitySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cap: Capability) {
        let strength = cap.strength();
        self.strongest.entry(cap.user).and_modify(|s| *s = (*s).max(strength)).or_insert(strength);
    }

    /// Strongest rate held for `user`, if any.
    pub fn strength_for(&self, user: &UserTag) -> Option<Frequency> {
        self.strongest.get(user).copied()
    }

    pub fn can_remove_content(&self, user: &UserTag) -> bool {
        self.strength_for(user) == Some(Frequency::Infinity)
    }

    pub fn can_remove_timing(&self, user: &UserTag, rate: Frequency) -> bool {
        self.strength_for(user).is_some_and(|s| s >= rate)
    }

    pub fn is_empty(&self) -> bool {
        self.strongest.is_empty()
    }

    pub fn len(&self) -> usize {
        self.strongest.len()
    }

    /// Normalized members: content capabilities are reported as [`CapabilityKind::Content`].
    pub fn iter(&self) -> impl Iterator<Item = Capability> + '_ {
        self.strongest.iter().map(|(user, s)| match s {
            Frequency::Infinity => Capability::content(user.clone()),
            f => Capability::timing(user.clone(), *f),
        })
    }
}

impl FromIterator<Capability> for CapabilitySet {
    fn from_iter<I: IntoIterator<Item = Capability>>(iter: I) -> Self {
        let mut set = CapabilitySet::new();
        for cap in iter {
            set.insert(cap);
        }
        set
    }
}

impl fmt::Display for CapabilitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let caps: Vec<String> = self.iter().map(|c| c.to_string()).collect();
        write!(f, "[{}]", caps.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn redundancy_removal() {
        let f = Frequency::new(1, 5).unwrap();
        let set: CapabilitySet =
            [Capability::timing("B", f), Capability::content("B"), Capability::timing("B", Frequency::integer(3))]
                .into_iter()
                .collect();
        assert_eq!(set.len(), 1);
        assert_eq!(set.iter().next().unwrap(), Capability::content("B"));
    }

    #[test]
    fn strength_order() {
        let weak = Capability::timing("B", Frequency::integer(1));
        let strong = Capability::timing("B", Frequency::integer(2));
        let top = Capability::timing("B", Frequency::Infinity);
        assert!(strong.at_least_as_strong_as(&weak));
        assert!(!weak.at_least_as_strong_as(&strong));
        assert!(top.at_least_as_strong_as(&Capability::content("B")));
        assert!(Capability::content("B").at_least_as_strong_as(&top));
        assert!(!Capability::content("A").at_least_as_strong_as(&weak));
    }

    #[test]
    fn text_round_trip() {
        for s in ["A-", "B-:1/5", "C-:inf", "D-:0"] {
            assert_eq!(s.parse::<Capability>().unwrap().to_string(), s);
        }
        assert!("A".parse::<Capability>().is_err());
        assert!("-".parse::<Capability>().is_err());
        assert!("A-1".parse::<Capability>().is_err());
        assert_eq!("B-:2/4".parse::<Capability>().unwrap_err().pos, 3);
    }
}
