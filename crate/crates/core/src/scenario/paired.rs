use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ScenarioConfig, ScenarioError, TopologyKind};
use crate::kernel::{EntityId, EntityKind, TraceKind, TraceRecord};
use crate::label::{Label, UserTag};

/// Picks trace records by kind, optionally entity, and a subset of detail fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selector {
    pub kind: TraceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<EntityId>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub detail: BTreeMap<String, String>,
}

impl Selector {
    pub fn matches(&self, r: &TraceRecord) -> bool {
        r.kind == self.kind
            && self.entity.as_ref().is_none_or(|e| *e == r.entity)
            && self.detail.iter().all(|(k, v)| r.detail(k) == Some(v.as_str()))
    }
}

impl std::fmt::Display for Selector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.kind)?;
        if let Some(e) = &self.entity {
            write!(f, "@{e}")?;
        }
        for (k, v) in &self.detail {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelExpectation {
    pub selector: Selector,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCheck {
    pub selector: String,
    pub expected: Label,
    pub matched: usize,
    pub pass: bool,
    pub message: String,
}

/// Every record picked by each selector must carry exactly the expected
/// label, and each selector must pick at least one record.
pub fn assert_labels(trace: &[TraceRecord], expectations: &[LabelExpectation]) -> Vec<LabelCheck> {
    expectations
        .iter()
        .map(|exp| {
            let hits: Vec<&TraceRecord> = trace.iter().filter(|r| exp.selector.matches(r)).collect();
            let wrong: Vec<String> = hits
                .iter()
                .filter(|r| r.label.as_ref() != Some(&exp.label))
                .map(|r| {
                    let got = r.label.as_ref().map_or("none".to_string(), Label::to_string);
                    format!("t={} has {got}", r.time.0)
                })
                .collect();
            let (pass, message) = if hits.is_empty() {
                (false, format!("selector {} matched no records", exp.selector))
            } else if !wrong.is_empty() {
                (false, format!("expected {}: {}", exp.label, wrong.join("; ")))
            } else {
                (true, format!("{} record(s) labelled {}", hits.len(), exp.label))
            };
            LabelCheck {
                selector: exp.selector.to_string(),
                expected: exp.label.clone(),
                matched: hits.len(),
                pass,
                message,
            }
        })
        .collect()
}

/// The labels a topology should produce on the observer's result path.
pub fn default_expectations(cfg: &ScenarioConfig) -> Vec<LabelExpectation> {
    let Some(obs) = cfg.observer() else { return Vec::new() };
    let sent = Selector {
        kind: TraceKind::MsgSend,
        entity: None,
        detail: [("owner".to_string(), obs.to_string())].into_iter().collect(),
    };
    let recv = Selector { kind: TraceKind::MsgRecv, entity: Some(EntityId::client(obs)), detail: BTreeMap::new() };
    match cfg.classify() {
        TopologyKind::Dedicated | TopologyKind::Reservation => vec![
            LabelExpectation { selector: sent, label: Label::owned_by(obs) },
            LabelExpectation { selector: recv, label: Label::owned_by(obs) },
        ],
        TopologyKind::StatMux => {
            let f = cfg.pacer.as_ref().expect("statmux has a pacer").f;
            let mut tainted = Label::owned_by(obs);
            for u in &cfg.users {
                tainted.add_timing(u.clone(), crate::label::Frequency::Infinity);
            }
            let paced = tainted.pace_downgrade(f).expect("finite pacer");
            let released =
                Selector { kind: TraceKind::PacerRelease, entity: Some(EntityId::pacer(obs)), detail: BTreeMap::new() };
            vec![
                LabelExpectation { selector: sent, label: tainted },
                LabelExpectation { selector: released, label: paced.clone() },
                LabelExpectation { selector: recv, label: paced },
            ]
        }
        TopologyKind::Custom => Vec::new(),
    }
}

/// Deliveries to `user`'s client: what that customer can observe.
pub fn observer_deliveries<'a>(trace: &'a [TraceRecord], user: &UserTag) -> Vec<&'a TraceRecord> {
    let client = EntityId::client(user);
    trace.iter().filter(|r| r.kind == TraceKind::MsgRecv && r.entity == client).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub index: usize,
    pub short: Option<TraceRecord>,
    pub long: Option<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairedRunReport {
    pub scenario: String,
    pub topology: TopologyKind,
    pub observer: UserTag,
    pub varied: UserTag,
    pub short: u32,
    pub long: u32,
    pub trace_short: Vec<TraceRecord>,
    pub trace_long: Vec<TraceRecord>,
    /// Observer deliveries that differ between the two runs.
    pub alice_diff: Vec<DiffEntry>,
    pub label_assertions: Vec<LabelCheck>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl PairedRunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// A short text summary, one line per check.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "scenario {} ({:?}), {} short={} long={}\n",
            self.scenario, self.topology, self.varied, self.short, self.long
        );
        for c in &self.checks {
            out.push_str(&format!("[{}] {}: {}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.message));
        }
        let half = self.label_assertions.len() / 2;
        for (i, l) in self.label_assertions.iter().enumerate() {
            let run = if i < half { "short" } else { "long" };
            out.push_str(&format!(
                "[{}] labels({run}) {}: {}\n",
                if l.pass { "PASS" } else { "FAIL" },
                l.selector,
                l.message
            ));
        }
        out.push_str(if self.pass { "overall: PASS\n" } else { "overall: FAIL\n" });
        out
    }
}

fn diff_deliveries(short: &[&TraceRecord], long: &[&TraceRecord]) -> Vec<DiffEntry> {
    (0..short.len().max(long.len()))
        .filter_map(|i| {
            let (s, l) = (short.get(i), long.get(i));
            let same = match (s, l) {
                (Some(a), Some(b)) => a.to_json_line() == b.to_json_line(),
                _ => false,
            };
            (!same).then(|| DiffEntry { index: i, short: s.map(|r| (*r).clone()), long: l.map(|r| (*r).clone()) })
        })
        .collect()
}

/// Runs `cfg` twice, with the second user's jobs set to `short` and then
/// `long` slices, and compares what the first user observes.
///
/// Checks: for dedicated and reservation topologies the observer's deliveries
/// must be identical; every observer job must be delivered in both runs; with
/// pacers, every observer delivery must fall on a pacer tick; and every
/// label expectation must hold in both traces.
pub fn run_paired(cfg: &ScenarioConfig, short: u32, long: u32) -> Result<PairedRunReport, ScenarioError> {
    if short == long {
        return Err(ScenarioError::Config("short and long work must differ".into()));
    }
    if short == 0 || long == 0 {
        return Err(ScenarioError::Config("job work must be positive".into()));
    }
    let topology = cfg.validate()?;
    let (Some(observer), Some(varied)) = (cfg.observer().cloned(), cfg.varied().cloned()) else {
        return Err(ScenarioError::Config("paired runs need at least two users".into()));
    };
    if !cfg.jobs.iter().any(|j| j.owner == varied) {
        return Err(ScenarioError::Config(format!("user {varied} has no jobs to vary")));
    }

    let trace_short = cfg.with_work_for(&varied, short).run()?;
    let trace_long = cfg.with_work_for(&varied, long).run()?;
    let seen_short = observer_deliveries(&trace_short, &observer);
    let seen_long = observer_deliveries(&trace_long, &observer);
    let alice_diff = diff_deliveries(&seen_short, &seen_long);

    let mut checks = Vec::new();
    let isolated = matches!(topology, TopologyKind::Dedicated | TopologyKind::Reservation);
    checks.push(Check {
        name: "observer_isolation".into(),
        pass: !isolated || alice_diff.is_empty(),
        message: if alice_diff.is_empty() {
            "observer deliveries identical".into()
        } else if isolated {
            format!("{} observer deliveries differ", alice_diff.len())
        } else {
            format!("{} observer deliveries differ (allowed for {topology:?})", alice_diff.len())
        },
    });

    let expected_jobs = cfg.jobs.iter().filter(|j| j.owner == observer).count();
    let delivered = (seen_short.len(), seen_long.len());
    checks.push(Check {
        name: "observer_delivered".into(),
        pass: delivered.0 == expected_jobs && delivered.1 == expected_jobs,
        message: format!("{expected_jobs} jobs; delivered {} (short) and {} (long)", delivered.0, delivered.1),
    });

    if let Some(p) = &cfg.pacer {
        let (period, phase) = (p.period().expect("validated"), p.phase_or_default().expect("validated"));
        let off: Vec<u64> = seen_short
            .iter()
            .chain(seen_long.iter())
            .map(|r| r.time.0)
            .filter(|t| *t < phase || (t - phase) % period != 0)
            .collect();
        checks.push(Check {
            name: "tick_boundaries".into(),
            pass: off.is_empty(),
            message: if off.is_empty() {
                format!("all observer deliveries at {phase} + k*{period}")
            } else {
                format!("deliveries off the pacer clock at {off:?}")
            },
        });
    }

    let mut expectations = default_expectations(cfg);
    expectations.extend(cfg.expectations.iter().cloned());
    let mut label_assertions = assert_labels(&trace_short, &expectations);
    label_assertions.extend(assert_labels(&trace_long, &expectations));

    let pass = checks.iter().all(|c| c.pass) && label_assertions.iter().all(|l| l.pass);
    Ok(PairedRunReport {
        scenario: cfg.name.clone(),
        topology,
        observer,
        varied,
        short,
        long,
        trace_short,
        trace_long,
        alice_diff,
        label_assertions,
        checks,
        pass,
    })
}

/// Denials recorded at `user`'s gateway.
pub fn gateway_denials<'a>(trace: &'a [TraceRecord], user: &UserTag) -> Vec<&'a TraceRecord> {
    trace
        .iter()
        .filter(|r| {
            r.kind == TraceKind::MonitorDeny && r.entity.kind == EntityKind::Gateway && r.entity.name == user.as_str()
        })
        .collect()
}
