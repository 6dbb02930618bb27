//! Deterministic discrete-event simulation of timing information flow
//! control in a multi-tenant cloud.
//!
//! - [`label`]: content/timing labels, capabilities and the pacing downgrade.
//! - [`kernel`]: virtual-time event engine and trace records.
//! - [`entities`]: gateways, compute cores, schedulers and pacers.
//! - [`monitor`]: the flow check and receive-side tainting.
//! - [`scenario`]: the dedicated, reservation and statistical-multiplexing
//!   topologies, paired runs and label assertions.
//! - [`leakage`]: covert-channel measurement against the pacer bound.

pub mod cli;
pub mod entities;
pub mod kernel;
pub mod label;
pub mod leakage;
pub mod monitor;
pub mod scenario;
