use std::collections::{BTreeMap, VecDeque};

use super::{EntityError, Job, JobId, Message};
use crate::kernel::EntityId;
use crate::label::{Label, UserTag};
use crate::monitor::{apply_receive, Channel};

/// Per-user "has queued or running work" flags, as seen by a scheduler.
pub type Demand = BTreeMap<UserTag, bool>;

/// Demand information together with the label it carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandReport {
    pub demand: Demand,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SliceOutcome {
    /// The named slot had nothing to run.
    Idle,
    Ran {
        job: JobId,
        label: Label,
        work_left: u32,
        /// Set when this slice finished the job.
        result: Option<Message>,
    },
}

/// A label update applied to a job.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relabel {
    pub job: JobId,
    pub from: Label,
    pub to: Label,
}

/// A compute core with one isolated slot per customer.
///
/// Each slot is a FIFO of that customer's jobs; only the head runs. Slots
/// never share state, so a job's computation sees nothing of other slots.
#[derive(Debug, Clone)]
pub struct ComputeCore {
    pub id: EntityId,
    slots: BTreeMap<UserTag, VecDeque<Job>>,
    current: Option<UserTag>,
    hosted: Label,
}

impl ComputeCore {
    pub fn new(id: EntityId, users: impl IntoIterator<Item = UserTag>) -> Self {
        ComputeCore {
            id,
            slots: users.into_iter().map(|u| (u, VecDeque::new())).collect(),
            current: None,
            hosted: Label::empty(),
        }
    }

    pub fn users(&self) -> impl Iterator<Item = &UserTag> {
        self.slots.keys()
    }

    /// The user whose job ran in the latest slice, if it was not idle.
    pub fn current(&self) -> Option<&UserTag> {
        self.current.as_ref()
    }

    pub fn admit(&mut self, job: Job) -> Result<(), EntityError> {
        let slot = self
            .slots
            .get_mut(job.owner())
            .ok_or_else(|| EntityError::UnknownSlot { core: self.id.to_string(), user: job.owner().to_string() })?;
        self.hosted = self.hosted.join(&job.label);
        slot.push_back(job);
        Ok(())
    }

    pub fn has_work(&self, user: &UserTag) -> bool {
        self.slots.get(user).is_some_and(|q| !q.is_empty())
    }

    pub fn demand(&self) -> Demand {
        self.slots.iter().map(|(u, q)| (u.clone(), !q.is_empty())).collect()
    }

    /// Demand together with the join of every label this core has hosted,
    /// since whether a slot is busy depends on all of them.
    pub fn demand_report(&self) -> DemandReport {
        DemandReport { demand: self.demand(), label: self.hosted.clone() }
    }

    pub fn jobs(&self) -> impl Iterator<Item = &Job> {
        self.slots.values().flatten()
    }

    /// Applies a timing-only control message to every job on the core.
    pub fn receive_control(&mut self, control: &Message) -> Result<Vec<Relabel>, EntityError> {
        let mut changes = Vec::new();
        for job in self.slots.values_mut().flatten() {
            let to = apply_receive(&job.label, &control.label, Channel::TimingOnly);
            if to != job.label {
                if !to.process_invariant_violations().is_empty() {
                    return Err(EntityError::ProcessLabel { job: job.id.to_string(), label: to });
                }
                changes.push(Relabel { job: job.id.clone(), from: job.label.clone(), to: to.clone() });
                job.label = to;
            }
        }
        for change in &changes {
            self.hosted = self.hosted.join(&change.to);
        }
        Ok(changes)
    }

    /// Runs one timeslice of `who`'s head job. A completed job leaves the
    /// core and its result message is returned.
    pub fn run_slice(&mut self, who: &UserTag) -> Result<SliceOutcome, EntityError> {
        let slot = self
            .slots
            .get_mut(who)
            .ok_or_else(|| EntityError::UnknownSlot { core: self.id.to_string(), user: who.to_string() })?;
        let Some(job) = slot.front_mut() else {
            self.current = None;
            return Ok(SliceOutcome::Idle);
        };
        job.step();
        self.current = Some(who.clone());
        let (id, label, work_left) = (job.id.clone(), job.label.clone(), job.work_left);
        let result = if job.is_done() {
            let done = slot.pop_front().expect("head exists");
            Message::result_of(&done)
        } else {
            None
        };
        Ok(SliceOutcome::Ran { job: id, label, work_left, result })
    }
}
