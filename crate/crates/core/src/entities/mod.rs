//! The simulated cloud: jobs, compute cores, schedulers, pacers and gateways.
//!
//! Each entity is a plain state machine. [`cloud`] wires them to the kernel.

pub mod cloud;
mod compute;
mod gateway;
mod job;
mod pacer;
mod scheduler;

use thiserror::Error;

pub use cloud::{Cloud, CloudBuilder, Signal, Simulation};
pub use compute::{ComputeCore, Demand, DemandReport, Relabel, SliceOutcome};
pub use gateway::Gateway;
pub use job::{BitString, Job, JobId, Message, Request};
pub use pacer::Pacer;
pub use scheduler::{Decision, Scheduler, SchedulerKind, SchedulerPolicy};

use crate::label::{Frequency, Label};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntityError {
    #[error("job {0} has no work")]
    ZeroWork(String),
    #[error("job {job} would run with label {label}, which lacks an inf timing tag for a content tag")]
    ProcessLabel { job: String, label: Label },
    #[error("core {core} has no slot for user {user}")]
    UnknownSlot { core: String, user: String },
    #[error("gateway for {gateway} refused a request owned by {owner}")]
    CrossCustomer { gateway: String, owner: String },
    #[error("demand delivered to a reservation scheduler; blocked tags {residual}")]
    DemandToReservation { residual: Label },
    #[error("a scheduler needs at least one user")]
    EmptySchedule,
    #[error("pacer frequency {0} is not 1/n for a whole number of ticks n")]
    PacerFrequency(Frequency),
    #[error("pacer phase must be at least 1")]
    PacerPhase,
    #[error("t={t} is not a tick of a pacer with phase {phase} and period {period}")]
    OffTick { t: u64, phase: u64, period: u64 },
    #[error("invalid topology: {0}")]
    Topology(String),
}
