//! Canonical text grammar for labels.
//!
//! ```text
//! label   = "{" content "/" timing "}"
//! content = "-" | user ("," user)*            users strictly ascending
//! timing  = "-" | user ":" freq ("," ...)*    users strictly ascending
//! freq    = "inf" | integer | num "/" den     lowest terms, den > 1
//! ```
//!
//! The parser accepts exactly the strings produced by [`canonical_text`], so
//! the mapping is a bijection between labels and their text form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_rational::Ratio;
use thiserror::Error;

use super::{Frequency, Label, UserTag};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("label parse error at byte {pos}: {msg}")]
pub struct LabelParseError {
    pub pos: usize,
    pub msg: String,
}

impl LabelParseError {
    pub(crate) fn new(pos: usize, msg: impl Into<String>) -> Self {
        LabelParseError { pos, msg: msg.into() }
    }
}

pub fn canonical_text(label: &Label) -> String {
    let mut out = String::from("{");
    if label.content.is_empty() {
        out.push('-');
    } else {
        let users: Vec<&str> = label.content.iter().map(UserTag::as_str).collect();
        out.push_str(&users.join(","));
    }
    out.push('/');
    if label.timing.is_empty() {
        out.push('-');
    } else {
        for (i, (user, freq)) in label.timing.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{user}:{freq}");
        }
    }
    out.push('}');
    out
}

pub fn parse_label(s: &str) -> Result<Label, LabelParseError> {
    let mut p = Cursor { s, pos: 0 };
    p.expect(b'{')?;

    let mut content = BTreeSet::new();
    if !p.eat(b'-') {
        let mut prev: Option<UserTag> = None;
        loop {
            let at = p.pos;
            let user = p.user()?;
            if prev.as_ref().is_some_and(|q| q >= &user) {
                return Err(LabelParseError::new(at, "content tags must be strictly ascending"));
            }
            prev = Some(user.clone());
            content.insert(user);
            if !p.eat(b',') {
                break;
            }
        }
    }
    p.expect(b'/')?;

    let mut timing = BTreeMap::new();
    if !p.eat(b'-') {
        let mut prev: Option<UserTag> = None;
        loop {
            let at = p.pos;
            let user = p.user()?;
            if prev.as_ref().is_some_and(|q| q >= &user) {
                return Err(LabelParseError::new(at, "timing tags must be strictly ascending"));
            }
            prev = Some(user.clone());
            p.expect(b':')?;
            let (freq, end) = parse_frequency_at(s, p.pos)?;
            p.pos = end;
            timing.insert(user, freq);
            if !p.eat(b',') {
                break;
            }
        }
    }
    p.expect(b'}')?;
    if p.pos != s.len() {
        return Err(LabelParseError::new(p.pos, "trailing characters after label"));
    }
    Ok(Label { content, timing })
}

/// Parses a canonical frequency starting at byte `start`; returns the value
/// and the byte offset just past it.
pub(crate) fn parse_frequency_at(s: &str, start: usize) -> Result<(Frequency, usize), LabelParseError> {
    let rest = &s[start..];
    if rest.starts_with("inf") {
        return Ok((Frequency::Infinity, start + 3));
    }
    let (num, after_num) = parse_decimal(s, start)?;
    if s.as_bytes().get(after_num) != Some(&b'/') {
        return Ok((Frequency::integer(num), after_num));
    }
    let (den, end) = parse_decimal(s, after_num + 1)?;
    if den == 0 {
        return Err(LabelParseError::new(after_num + 1, "zero denominator"));
    }
    let reduced = Ratio::new(num, den);
    if den == 1 || *reduced.numer() != num || *reduced.denom() != den {
        return Err(LabelParseError::new(start, format!("{num}/{den} is not in lowest terms")));
    }
    Ok((Frequency::Finite(reduced), end))
}

fn parse_decimal(s: &str, start: usize) -> Result<(u64, usize), LabelParseError> {
    let bytes = s.as_bytes();
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(LabelParseError::new(start, "expected a frequency"));
    }
    if end - start > 1 && bytes[start] == b'0' {
        return Err(LabelParseError::new(start, "leading zero in number"));
    }
    let value = s[start..end].parse::<u64>().map_err(|_| LabelParseError::new(start, "number out of range"))?;
    Ok((value, end))
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<u8> {
        self.s.as_bytes().get(self.pos).copied()
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, b: u8) -> Result<(), LabelParseError> {
        if self.eat(b) {
            Ok(())
        } else {
            let found = match self.peek() {
                Some(c) => format!("'{}'", c as char),
                None => "end of input".to_string(),
            };
            Err(LabelParseError::new(self.pos, format!("expected '{}', found {found}", b as char)))
        }
    }

    fn user(&mut self) -> Result<UserTag, LabelParseError> {
        let start = self.pos;
        while self.peek().is_some_and(UserTag::is_id_byte) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(LabelParseError::new(start, "expected a user id"));
        }
        Ok(UserTag::new_unchecked(&self.s[start..self.pos]))
    }
}
