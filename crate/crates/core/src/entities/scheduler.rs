use serde::{Deserialize, Serialize};

use super::{DemandReport, EntityError, Message};
use crate::kernel::SimTime;
use crate::label::{CapabilitySet, Label, UserTag};
use crate::monitor::check_send;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerKind {
    /// Slice `t` goes to `rotation[t mod len]`, whatever anyone's demand.
    Reservation { rotation: Vec<UserTag> },
    /// Work-conserving round robin over users that currently have demand.
    DemandDriven { order: Vec<UserTag> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedulerPolicy {
    pub kind: SchedulerKind,
    pub label: Label,
}

impl SchedulerPolicy {
    /// A reservation scheduler carries the empty label, so it can affect
    /// jobs' timing without tainting them.
    pub fn reservation(rotation: Vec<UserTag>) -> Self {
        SchedulerPolicy { kind: SchedulerKind::Reservation { rotation }, label: Label::empty() }
    }

    /// A demand-driven scheduler carries every customer's content and
    /// timing tags so that demand information may flow into it.
    pub fn demand_driven(order: Vec<UserTag>) -> Self {
        let label = order.iter().fold(Label::empty(), |acc, u| acc.join(&Label::owned_by(u)));
        SchedulerPolicy { kind: SchedulerKind::DemandDriven { order }, label }
    }

    pub fn from_kind(kind: SchedulerKind) -> Self {
        match kind {
            SchedulerKind::Reservation { rotation } => Self::reservation(rotation),
            SchedulerKind::DemandDriven { order } => Self::demand_driven(order),
        }
    }

    pub fn users(&self) -> &[UserTag] {
        match &self.kind {
            SchedulerKind::Reservation { rotation } => rotation,
            SchedulerKind::DemandDriven { order } => order,
        }
    }

    pub fn wants_demand(&self) -> bool {
        matches!(self.kind, SchedulerKind::DemandDriven { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Run { who: UserTag, control: Message },
    Idle,
}

impl Decision {
    pub fn who(&self) -> Option<&UserTag> {
        match self {
            Decision::Run { who, .. } => Some(who),
            Decision::Idle => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    pub policy: SchedulerPolicy,
    last_served: Option<usize>,
}

impl Scheduler {
    pub fn new(policy: SchedulerPolicy) -> Result<Self, EntityError> {
        if policy.users().is_empty() {
            return Err(EntityError::EmptySchedule);
        }
        Ok(Scheduler { policy, last_served: None })
    }

    /// Chooses who runs in slice `t`.
    ///
    /// A reservation scheduler must never be handed demand: the demand
    /// report's label cannot flow into its empty label, so passing one is
    /// reported as a violation. A demand-driven scheduler scans its order
    /// starting just after the user it served last and picks the first one
    /// with demand; with no demand it idles.
    pub fn decide(&mut self, t: SimTime, demand: Option<&DemandReport>) -> Result<Decision, EntityError> {
        let label = self.policy.label.clone();
        match &self.policy.kind {
            SchedulerKind::Reservation { rotation } => {
                if let Some(report) = demand {
                    let decision = check_send(&report.label, &CapabilitySet::new(), &label);
                    return Err(EntityError::DemandToReservation { residual: decision.residual });
                }
                let who = rotation[(t.ticks() % rotation.len() as u64) as usize].clone();
                Ok(Decision::Run { control: Message::control(&who, label), who })
            }
            SchedulerKind::DemandDriven { order } => {
                let Some(report) = demand else { return Ok(Decision::Idle) };
                let n = order.len();
                let start = self.last_served.map_or(0, |i| i + 1);
                let pick =
                    (0..n).map(|k| (start + k) % n).find(|&i| report.demand.get(&order[i]).copied().unwrap_or(false));
                match pick {
                    Some(i) => {
                        self.last_served = Some(i);
                        let who = order[i].clone();
                        Ok(Decision::Run { control: Message::control(&who, label), who })
                    }
                    None => Ok(Decision::Idle),
                }
            }
        }
    }
}
