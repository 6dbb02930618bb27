//! The three case-study topologies and paired short/long experiments.
//!
//! A [`ScenarioConfig`] describes users, cores, the scheduler, pacers,
//! capability grants and a job list. It serializes to JSON and classifies as
//! one of the three paper topologies or as custom. [`run_paired`] runs a
//! config twice, once with the second user's jobs short and once long, and
//! diffs what the first user can observe.

mod chart;
mod paired;

use std::collections::BTreeSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chart::render_chart;
pub use paired::{
    assert_labels, default_expectations, gateway_denials, observer_deliveries, run_paired, Check, DiffEntry,
    LabelCheck, LabelExpectation, PairedRunReport, Selector,
};

use crate::entities::{BitString, Cloud, EntityError, Request, SchedulerKind, SchedulerPolicy, Simulation};
use crate::kernel::{SimError, SimTime, TraceRecord};
use crate::label::{Capability, CapabilityKind, Frequency, UserTag};
use crate::monitor::MonitorMode;

/// Work of Bob's short job in the desk-scale scenarios, in slices.
pub const BOB_SHORT: u32 = 2;
/// Work of Bob's long job.
pub const BOB_LONG: u32 = 7;
/// Pacer period of the desk-scale scenarios, in ticks.
pub const PACER_PERIOD: u64 = 5;
pub const HORIZON: u64 = 200;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Entity(#[from] EntityError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl ScenarioError {
    pub fn is_monitor_fatal(&self) -> bool {
        matches!(self, ScenarioError::Sim(SimError::MonitorFatal { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorePlacement {
    /// One core per user.
    Private,
    /// One core shared by all users, driven by a scheduler.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Dedicated,
    Reservation,
    StatMux,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacerConfig {
    pub f: Frequency,
    /// First tick; defaults to one period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<u64>,
}

impl PacerConfig {
    pub fn period(&self) -> Option<u64> {
        self.f.unit_period()
    }

    pub fn phase_or_default(&self) -> Option<u64> {
        self.phase.or(self.period())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grant {
    /// The user whose gateway holds the capability.
    pub holder: UserTag,
    pub capability: Capability,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub owner: UserTag,
    pub work: u32,
    /// Generated from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<BitString>,
    pub submit_at: u64,
}

fn default_ticks_per_second() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub users: Vec<UserTag>,
    pub cores: CorePlacement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheduler: Option<SchedulerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pacer: Option<PacerConfig>,
    #[serde(default)]
    pub grants: Vec<Grant>,
    pub jobs: Vec<JobSpec>,
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub monitor: MonitorMode,
    /// How many ticks make one second when reporting rates in bits per second.
    #[serde(default = "default_ticks_per_second")]
    pub ticks_per_second: u64,
    /// Bound on trace records kept in memory; the streamed trace is complete.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_retain: Option<usize>,
    /// Extra label checks on top of the topology's defaults.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expectations: Vec<LabelExpectation>,
}

/// Knobs for [`build_scenario`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioParams {
    /// Pacer frequency; required for statistical multiplexing.
    pub pacer: Option<Frequency>,
    pub bob_work: u32,
    pub horizon: u64,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams { pacer: Frequency::per_period(PACER_PERIOD), bob_work: BOB_SHORT, horizon: HORIZON, seed: 0 }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical JSON: fixed field order, pretty printed.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialize")
    }

    pub fn observer(&self) -> Option<&UserTag> {
        self.users.first()
    }

    pub fn varied(&self) -> Option<&UserTag> {
        self.users.get(1)
    }

    pub fn validate(&self) -> Result<TopologyKind, ScenarioError> {
        let err = |m: String| Err(ScenarioError::Config(m));
        if self.users.is_empty() {
            return err("at least one user is required".into());
        }
        let users: BTreeSet<&UserTag> = self.users.iter().collect();
        if users.len() != self.users.len() {
            return err("duplicate user".into());
        }
        if self.horizon == 0 {
            return err("horizon must be positive".into());
        }
        if self.ticks_per_second == 0 {
            return err("ticks_per_second must be positive".into());
        }
        for job in &self.jobs {
            if !users.contains(&job.owner) {
                return err(format!("job owner {} is not a configured user", job.owner));
            }
            if job.work == 0 {
                return err(format!("job for {} at t={} has zero work", job.owner, job.submit_at));
            }
        }
        for grant in &self.grants {
            if !users.contains(&grant.holder) {
                return err(format!("grant holder {} is not a configured user", grant.holder));
            }
        }
        match (self.cores, &self.scheduler) {
            (CorePlacement::Private, Some(_)) => return err("private cores take no scheduler".into()),
            (CorePlacement::Shared, None) => return err("a shared core needs a scheduler".into()),
            _ => {}
        }
        if let Some(pacer) = &self.pacer {
            if pacer.period().is_none() {
                return err(format!("pacer frequency {} must be 1/n for a whole number of ticks n", pacer.f));
            }
            if pacer.phase == Some(0) {
                return err("pacer phase must be at least 1".into());
            }
        }
        self.build_cloud().map_err(|e| ScenarioError::Config(e.to_string()))?;
        Ok(self.classify())
    }

    /// Which paper topology this config is, if any.
    pub fn classify(&self) -> TopologyKind {
        let no_grants = self.grants.is_empty();
        match (self.cores, &self.scheduler, &self.pacer) {
            (CorePlacement::Private, None, None) if no_grants => TopologyKind::Dedicated,
            (CorePlacement::Shared, Some(SchedulerKind::Reservation { .. }), None) if no_grants => {
                TopologyKind::Reservation
            }
            (CorePlacement::Shared, Some(SchedulerKind::DemandDriven { .. }), Some(p))
                if self.grants_are_cross_timing(p.f) =>
            {
                TopologyKind::StatMux
            }
            _ => TopologyKind::Custom,
        }
    }

    /// Every gateway holds exactly a timing capability at `f` for every other user.
    fn grants_are_cross_timing(&self, f: Frequency) -> bool {
        let mut want: BTreeSet<(UserTag, UserTag)> = BTreeSet::new();
        for holder in &self.users {
            for other in self.users.iter().filter(|u| *u != holder) {
                want.insert((holder.clone(), other.clone()));
            }
        }
        let mut have = BTreeSet::new();
        for g in &self.grants {
            if g.capability.kind != CapabilityKind::Timing(f) {
                return false;
            }
            have.insert((g.holder.clone(), g.capability.user.clone()));
        }
        have == want && self.grants.len() == want.len()
    }

    pub fn build_cloud(&self) -> Result<Cloud, EntityError> {
        let mut b = Cloud::builder().monitor_mode(self.monitor);
        for u in &self.users {
            b = b.user(u.clone());
        }
        for g in &self.grants {
            b = b.grant(g.holder.clone(), g.capability.clone());
        }
        if let Some(kind) = &self.scheduler {
            b = b.shared_core(SchedulerPolicy::from_kind(kind.clone()));
        }
        if let Some(p) = &self.pacer {
            b = b.pacer(p.f, p.phase);
        }
        b.build()
    }

    /// The payload each job runs on, filling absent ones from the seed.
    pub fn payloads(&self) -> Vec<BitString> {
        self.jobs
            .iter()
            .enumerate()
            .map(|(i, job)| match &job.payload {
                Some(bits) => bits.clone(),
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ i as u64);
                    (0..16).map(|_| rng.gen::<bool>()).collect()
                }
            })
            .collect()
    }

    pub fn simulation(&self) -> Result<Simulation, ScenarioError> {
        self.validate()?;
        let mut sim = Simulation::new(self.build_cloud()?)?;
        if let Some(limit) = self.trace_retain {
            sim.kernel_mut().retain_at_most(limit);
        }
        for (job, payload_bits) in self.jobs.iter().zip(self.payloads()) {
            sim.submit(SimTime(job.submit_at), Request { owner: job.owner.clone(), work: job.work, payload_bits })?;
        }
        Ok(sim)
    }

    /// Runs to the horizon and returns the retained trace.
    pub fn run(&self) -> Result<Vec<TraceRecord>, ScenarioError> {
        let mut sim = self.simulation()?;
        sim.run_until(SimTime(self.horizon))?;
        Ok(sim.trace())
    }

    /// Runs to the horizon, streaming JSON lines to `sink` as they are produced.
    pub fn run_streaming(&self, sink: Box<dyn Write + Send>) -> Result<Vec<TraceRecord>, ScenarioError> {
        let mut sim = self.simulation()?;
        sim.kernel_mut().stream_to(sink);
        sim.run_until(SimTime(self.horizon))?;
        Ok(sim.trace())
    }

    /// Sets the work of every job owned by `user`.
    pub fn with_work_for(&self, user: &UserTag, work: u32) -> ScenarioConfig {
        let mut cfg = self.clone();
        for job in cfg.jobs.iter_mut().filter(|j| &j.owner == user) {
            job.work = work;
        }
        cfg
    }
}

/// Builds one of the three paper topologies with users `A` (Alice) and `B` (Bob).
///
/// Alice submits two jobs (3 slices at t=0, 2 slices at t=6); Bob submits one
/// job of `params.bob_work` slices at t=0.
pub fn build_scenario(kind: TopologyKind, params: &ScenarioParams) -> Result<ScenarioConfig, ScenarioError> {
    let a = UserTag::from("A");
    let b = UserTag::from("B");
    let users = vec![a.clone(), b.clone()];
    let jobs = vec![
        JobSpec { owner: a.clone(), work: 3, payload: Some("1011001110001111".parse().expect("bits")), submit_at: 0 },
        JobSpec { owner: a.clone(), work: 2, payload: Some("0100110001110000".parse().expect("bits")), submit_at: 6 },
        JobSpec {
            owner: b.clone(),
            work: params.bob_work,
            payload: Some("1110000011110000".parse().expect("bits")),
            submit_at: 0,
        },
    ];
    let mut cfg = ScenarioConfig {
        name: String::new(),
        users: users.clone(),
        cores: CorePlacement::Private,
        scheduler: None,
        pacer: None,
        grants: Vec::new(),
        jobs,
        horizon: params.horizon,
        seed: params.seed,
        monitor: MonitorMode::RecordAndDrop,
        ticks_per_second: 1,
        trace_retain: None,
        expectations: Vec::new(),
    };
    match kind {
        TopologyKind::Dedicated => cfg.name = "dedicated".into(),
        TopologyKind::Reservation => {
            cfg.name = "reservation".into();
            cfg.cores = CorePlacement::Shared;
            cfg.scheduler = Some(SchedulerKind::Reservation { rotation: users });
        }
        TopologyKind::StatMux => {
            let f = params
                .pacer
                .ok_or_else(|| ScenarioError::Config("statistical multiplexing needs a pacer frequency".into()))?;
            cfg.name = "statmux".into();
            cfg.cores = CorePlacement::Shared;
            cfg.scheduler = Some(SchedulerKind::DemandDriven { order: users.clone() });
            cfg.pacer = Some(PacerConfig { f, phase: None });
            cfg.grants = vec![
                Grant { holder: a.clone(), capability: Capability::timing(b.clone(), f) },
                Grant { holder: b, capability: Capability::timing(a, f) },
            ];
        }
        TopologyKind::Custom => {
            return Err(ScenarioError::Config("custom topologies are written by hand, not built".into()));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}
