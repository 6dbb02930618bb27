use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::EntityError;
use crate::label::{Label, UserTag};
use crate::monitor::Channel;

/// A string of bits, written as `0`/`1` characters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString(pub Vec<bool>);

impl BitString {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    /// Packs the bits MSB-first, prefixed by the bit count so that trailing
    /// zeros are significant.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = (self.0.len() as u64).to_le_bytes().to_vec();
        for chunk in self.0.chunks(8) {
            let mut byte = 0u8;
            for (i, bit) in chunk.iter().enumerate() {
                if *bit {
                    byte |= 0x80 >> i;
                }
            }
            out.push(byte);
        }
        out
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(format!("bit strings may only contain 0 and 1, found {other:?}")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(BitString)
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        BitString(iter.into_iter().collect())
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// `owner#n`: the n-th job submitted at the owner's gateway.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JobId {
    pub owner: UserTag,
    pub index: u64,
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.owner, self.index)
    }
}

/// What a customer hands to a gateway.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub owner: UserTag,
    pub work: u32,
    pub payload_bits: BitString,
}

/// A customer's job as a process on a compute core.
///
/// The job's explicit state advances one step per executed slice and depends
/// only on its payload and how many slices it has had, never on when those
/// slices ran.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub id: JobId,
    pub work_left: u32,
    pub payload_bits: BitString,
    pub label: Label,
    /// Whether the hosting core reports this job's demand to a scheduler.
    pub demand_visible: bool,
    slices_done: u32,
    state: [u8; 32],
}

impl Job {
    pub fn new(id: JobId, work: u32, payload_bits: BitString, label: Label) -> Result<Self, EntityError> {
        if work == 0 {
            return Err(EntityError::ZeroWork(id.to_string()));
        }
        let bad = label.process_invariant_violations();
        if !bad.is_empty() {
            return Err(EntityError::ProcessLabel { job: id.to_string(), label });
        }
        let mut h = Sha256::new();
        h.update(b"tifc-job");
        h.update(payload_bits.to_bytes());
        let state = h.finalize().into();
        Ok(Job { id, work_left: work, payload_bits, label, demand_visible: false, slices_done: 0, state })
    }

    pub fn owner(&self) -> &UserTag {
        &self.id.owner
    }

    pub fn is_done(&self) -> bool {
        self.work_left == 0
    }

    pub fn slices_done(&self) -> u32 {
        self.slices_done
    }

    /// Executes one timeslice of deterministic computation.
    pub(crate) fn step(&mut self) {
        debug_assert!(self.work_left > 0);
        let mut h = Sha256::new();
        h.update(self.state);
        h.update(self.slices_done.to_le_bytes());
        self.state = h.finalize().into();
        self.slices_done += 1;
        self.work_left -= 1;
    }

    /// Hex digest of the job's final state; `None` until the job completes.
    pub fn result_payload(&self) -> Option<String> {
        self.is_done().then(|| hex::encode(&self.state[..8]))
    }

    /// What the job would output after exactly `work` slices on `payload`,
    /// computed without any scheduler.
    pub fn reference_result(payload: &BitString, work: u32) -> String {
        let owner = UserTag::from("ref");
        let mut job =
            Job::new(JobId { owner: owner.clone(), index: 0 }, work, payload.clone(), Label::owned_by(&owner))
                .expect("reference job is well formed");
        while !job.is_done() {
            job.step();
        }
        job.result_payload().expect("done")
    }
}

/// A labelled message between entities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub id: String,
    pub payload: String,
    pub label: Label,
    pub channel: Channel,
}

impl Message {
    pub fn result_of(job: &Job) -> Option<Message> {
        Some(Message {
            id: job.id.to_string(),
            payload: job.result_payload()?,
            label: job.label.clone(),
            channel: Channel::Content,
        })
    }

    /// A scheduler control message naming the user to run. It carries no
    /// payload into any job's state.
    pub fn control(who: &UserTag, label: Label) -> Message {
        Message { id: format!("run:{who}"), payload: who.to_string(), label, channel: Channel::TimingOnly }
    }
}
