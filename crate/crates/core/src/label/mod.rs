//! Timing-aware information flow labels.
//!
//! A [`Label`] pairs a set of content tags (whose data the bits of an object
//! may contain) with a map of timing tags (whose data the timing of events on
//! the object may carry, and at what rate). Labels form a lattice under
//! [`Label::flows_to`] and [`Label::join`]; capabilities remove tags, and a
//! pacer lowers timing rates to its own release frequency.
//!
//! Everything here is pure and operates on values.

mod capability;
mod frequency;
mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use capability::{Capability, CapabilityKind, CapabilitySet};
pub use frequency::Frequency;
pub use text::{canonical_text, parse_label, LabelParseError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("invalid user id {0:?}: must be non-empty ASCII alphanumerics or '_'")]
    InvalidUser(String),
    #[error("a pacer needs a finite release frequency")]
    InfinitePacer,
}

/// Identifies a user, such as Alice (`A`) or Bob (`B`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserTag(String);

impl UserTag {
    pub fn new(id: &str) -> Result<Self, LabelError> {
        if id.is_empty() || !id.bytes().all(Self::is_id_byte) {
            return Err(LabelError::InvalidUser(id.to_string()));
        }
        Ok(UserTag(id.to_string()))
    }

    pub(crate) fn new_unchecked(id: &str) -> Self {
        UserTag(id.to_string())
    }

    pub(crate) fn is_id_byte(b: u8) -> bool {
        b.is_ascii_alphanumeric() || b == b'_'
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Panics on an invalid id; meant for literals in code and tests.
impl From<&str> for UserTag {
    fn from(id: &str) -> Self {
        UserTag::new(id).expect("invalid user id literal")
    }
}

impl fmt::Display for UserTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for UserTag {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UserTag::new(s)
    }
}

impl Serialize for UserTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for UserTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        UserTag::new(&String::deserialize(deserializer)?).map_err(serde::de::Error::custom)
    }
}

/// A `{content/timing}` label.
///
/// `timing` maps each user to the single highest rate at which that user's
/// information may leak through event timing on the labelled object.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Label {
    pub content: BTreeSet<UserTag>,
    pub timing: BTreeMap<UserTag, Frequency>,
}

impl Label {
    /// `{-/-}`
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a label; duplicate timing entries for one user keep the maximum rate.
    pub fn new<C, T, U>(content: C, timing: T) -> Self
    where
        C: IntoIterator<Item = U>,
        T: IntoIterator<Item = (U, Frequency)>,
        U: Into<UserTag>,
    {
        let mut label = Label { content: content.into_iter().map(Into::into).collect(), timing: BTreeMap::new() };
        for (user, f) in timing {
            label.add_timing(user.into(), f);
        }
        label
    }

    /// `{U/U:inf}`: what a gateway stamps on a request owned by `user`.
    pub fn owned_by(user: &UserTag) -> Self {
        Label::new([user.clone()], [(user.clone(), Frequency::Infinity)])
    }

    /// Adds or raises a timing tag.
    pub fn add_timing(&mut self, user: UserTag, f: Frequency) {
        self.timing.entry(user).and_modify(|g| *g = (*g).max(f)).or_insert(f);
    }

    pub fn is_empty(&self) -> bool {
        self.content.is_empty() && self.timing.is_empty()
    }

    /// The flow order: `self` may flow to `other` with no capabilities.
    pub fn flows_to(&self, other: &Label) -> bool {
        self.content.is_subset(&other.content)
            && self.timing.iter().all(|(user, f)| other.timing.get(user).is_some_and(|g| g >= f))
    }

    /// Least upper bound: union of content, per-user maximum of timing rates.
    pub fn join(&self, other: &Label) -> Label {
        let mut out = self.clone();
        out.content.extend(other.content.iter().cloned());
        for (user, f) in &other.timing {
            out.add_timing(user.clone(), *f);
        }
        out
    }

    /// Removes every tag the capabilities allow, using all of them.
    pub fn declassify(&self, caps: &CapabilitySet) -> Label {
        Label {
            content: self.content.iter().filter(|u| !caps.can_remove_content(u)).cloned().collect(),
            timing: self
                .timing
                .iter()
                .filter(|(u, f)| !caps.can_remove_timing(u, **f))
                .map(|(u, f)| (u.clone(), *f))
                .collect(),
        }
    }

    /// Uses a single capability.
    pub fn declassify_with(&self, cap: &Capability) -> Label {
        self.declassify(&CapabilitySet::from_iter([cap.clone()]))
    }

    /// Caps every timing rate at the pacer's release frequency; content is untouched.
    pub fn pace_downgrade(&self, pacer: Frequency) -> Result<Label, LabelError> {
        if !pacer.is_finite() {
            return Err(LabelError::InfinitePacer);
        }
        Ok(Label {
            content: self.content.clone(),
            timing: self.timing.iter().map(|(u, f)| (u.clone(), (*f).min(pacer))).collect(),
        })
    }

    /// Turns content taint into unbounded timing taint and drops the content
    /// part. This is what a timing-only interaction passes on to its receiver.
    pub fn lift_to_timing(&self) -> Label {
        let mut out = Label { content: BTreeSet::new(), timing: self.timing.clone() };
        for user in &self.content {
            out.add_timing(user.clone(), Frequency::Infinity);
        }
        out
    }

    /// The users whose content tag lacks a matching `inf` timing tag. A
    /// running process must have none.
    pub fn process_invariant_violations(&self) -> Vec<UserTag> {
        self.content.iter().filter(|u| self.timing.get(*u) != Some(&Frequency::Infinity)).cloned().collect()
    }

    /// Tags of `self` not dominated by `other`, as a label.
    pub fn excess_over(&self, other: &Label) -> Label {
        Label {
            content: self.content.difference(&other.content).cloned().collect(),
            timing: self
                .timing
                .iter()
                .filter(|(u, f)| other.timing.get(*u).is_none_or(|g| g < *f))
                .map(|(u, f)| (u.clone(), *f))
                .collect(),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&canonical_text(self))
    }
}

impl FromStr for Label {
    type Err = LabelParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_label(s)
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&canonical_text(self))
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        parse_label(&String::deserialize(deserializer)?).map_err(serde::de::Error::custom)
    }
}
