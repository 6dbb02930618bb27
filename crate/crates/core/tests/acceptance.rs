//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tifc_sim::entities::SchedulerKind;
use tifc_sim::kernel::{EntityId, TraceKind, TraceRecord};
use tifc_sim::label::{Capability, CapabilitySet, Frequency, Label, UserTag};
use tifc_sim::leakage::{frequency_to_rational, measure, CovertExperiment};
use tifc_sim::monitor::{check_send, MonitorMode};
use tifc_sim::scenario::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn lattice_laws() -> Outcome {
    let mut violations = Vec::new();
    let mut check = |a: &Label, b: &Label, c: &Label| {
        if !a.flows_to(a) {
            violations.push(format!("reflexivity fails at {a}"));
        }
        if a.flows_to(b) && b.flows_to(a) && a != b {
            violations.push(format!("antisymmetry fails at {a}, {b}"));
        }
        if a.flows_to(b) && b.flows_to(c) && !a.flows_to(c) {
            violations.push(format!("transitivity fails at {a}, {b}, {c}"));
        }
        let j = a.join(b);
        if !a.flows_to(&j) || !b.flows_to(&j) {
            violations.push(format!("{a} join {b} = {j} is not an upper bound"));
        }
        if a.flows_to(c) && b.flows_to(c) && !j.flows_to(c) {
            violations.push(format!("{a} join {b} = {j} is not least (bound {c})"));
        }
    };

    let all = common::exhaustive_labels(&["A", "B"]);
    let mut triples = 0u64;
    for a in &all {
        for b in &all {
            for c in &all {
                check(a, b, c);
                triples += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let users = ["A", "B", "C"];
    let random = 10_000;
    for _ in 0..random {
        let (a, b, c) = (
            common::random_label(&mut rng, &users),
            common::random_label(&mut rng, &users),
            common::random_label(&mut rng, &users),
        );
        check(&a, &b, &c);
    }
    if violations.is_empty() {
        Ok(format!(
            "{} exhaustive labels ({triples} triples) and {random} random 3-user triples; 0 violations",
            all.len()
        ))
    } else {
        Err(format!("{} violations, first: {}", violations.len(), violations[0]))
    }
}

fn monitor_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let users = ["A", "B", "C"];
    let n = 100_000;
    let (mut allowed, mut disagreements, mut first) = (0, 0, None);
    for _ in 0..n {
        let src = common::random_label(&mut rng, &users);
        let held = common::random_caps(&mut rng, &users);
        let dst = common::random_label(&mut rng, &users);
        let caps: CapabilitySet = held.iter().cloned().collect();
        let got = check_send(&src, &caps, &dst).allowed;
        allowed += got as u32;
        if got != common::oracle_allows(&src, &held, &dst) {
            disagreements += 1;
            first.get_or_insert(format!("{src} with {caps} to {dst}"));
        }
    }
    match first {
        None => Ok(format!("{n} triples ({allowed} allowed); 0 disagreements")),
        Some(f) => Err(format!("{disagreements} disagreements, first: {f}")),
    }
}

fn capability_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let users = ["A", "B", "C"];
    let n = 10_000;
    let mut diffs = Vec::new();
    for _ in 0..n {
        let l = common::random_label(&mut rng, &users);
        for u in users {
            let timing = l.declassify_with(&Capability::timing(u, Frequency::Infinity));
            let content = l.declassify_with(&Capability::content(u));
            if timing != content {
                diffs.push(format!("{l} with {u}: {timing} vs {content}"));
            }
        }
    }
    if diffs.is_empty() {
        Ok(format!("{n} labels x 3 users; 0 differences"))
    } else {
        Err(format!("{} differences, first: {}", diffs.len(), diffs[0]))
    }
}

fn pacing() -> Outcome {
    let shared: Label = "{A/A:inf,B:inf}".parse().unwrap();
    for period in [1u64, 2, 5, 20, 64] {
        let f = Frequency::per_period(period).unwrap();
        let want = Label::new(["A"], [("A", f), ("B", f)]);
        let got = shared.pace_downgrade(f).map_err(|e| e.to_string())?;
        if got != want {
            return Err(format!("pacing at {f} gave {got}, want {want}"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let users: Vec<UserTag> = vec!["A".into(), "B".into()];
    let (mut runs, mut releases) = (0, 0);
    for period in [1u64, 3, 5, 8, 20] {
        for phase in [1, period.div_ceil(2), period] {
            for horizon in [1u64, 7, 40, 133] {
                let f = Frequency::per_period(period).unwrap();
                let jobs = (0..rng.gen_range(1..30))
                    .map(|i| JobSpec {
                        owner: users[i % 2].clone(),
                        work: rng.gen_range(1..5),
                        payload: None,
                        submit_at: rng.gen_range(0..horizon.max(2)),
                    })
                    .collect();
                let cfg = ScenarioConfig {
                    name: "burst".into(),
                    users: users.clone(),
                    cores: CorePlacement::Shared,
                    scheduler: Some(SchedulerKind::DemandDriven { order: users.clone() }),
                    pacer: Some(PacerConfig { f, phase: Some(phase) }),
                    grants: vec![
                        Grant { holder: "A".into(), capability: Capability::timing("B", f) },
                        Grant { holder: "B".into(), capability: Capability::timing("A", f) },
                    ],
                    jobs,
                    horizon,
                    seed: runs,
                    monitor: MonitorMode::RecordAndDrop,
                    ticks_per_second: 1,
                    trace_retain: None,
                    expectations: Vec::new(),
                };
                let trace = cfg.run().map_err(|e| e.to_string())?;
                runs += 1;
                for u in &users {
                    let ticks: Vec<u64> = trace
                        .iter()
                        .filter(|r| r.kind == TraceKind::PacerRelease && r.entity == EntityId::pacer(u))
                        .map(|r| r.time.0)
                        .collect();
                    releases += ticks.len();
                    let cap = horizon.div_ceil(period) as usize;
                    if ticks.len() > cap {
                        return Err(format!("{} releases > ceil({horizon}/{period}) = {cap}", ticks.len()));
                    }
                    if let Some(t) = ticks.iter().find(|t| **t < phase || (**t - phase) % period != 0) {
                        return Err(format!("release at t={t} is off the clock (phase {phase}, period {period})"));
                    }
                }
            }
        }
    }
    Ok(format!("downgrade exact at 5 frequencies; {runs} paced runs, {releases} releases, all within ceil(horizon/period) and on ticks"))
}

fn alice_lines(trace: &[TraceRecord]) -> Vec<String> {
    observer_deliveries(trace, &"A".into()).iter().map(|r| r.to_json_line()).collect()
}

fn isolation() -> Outcome {
    let p = ScenarioParams::default();
    let mut notes = Vec::new();
    for kind in [TopologyKind::Dedicated, TopologyKind::Reservation] {
        let cfg = build_scenario(kind, &p).map_err(|e| e.to_string())?;
        let r = run_paired(&cfg, BOB_SHORT, BOB_LONG).map_err(|e| e.to_string())?;
        let (s, l) = (alice_lines(&r.trace_short), alice_lines(&r.trace_long));
        if s.is_empty() || s != l {
            return Err(format!("{kind:?}: Alice's deliveries differ between Bob work {BOB_SHORT} and {BOB_LONG}"));
        }
        notes.push(format!("{kind:?} identical ({} deliveries)", s.len()));
    }

    let cfg = build_scenario(TopologyKind::StatMux, &p).map_err(|e| e.to_string())?;
    let f = cfg.pacer.as_ref().unwrap().f;
    let period = cfg.pacer.as_ref().unwrap().period().unwrap();
    let phase = cfg.pacer.as_ref().unwrap().phase_or_default().unwrap();
    let want = Label::new(["A"], [("A", f), ("B", f)]);
    let r = run_paired(&cfg, BOB_SHORT, BOB_LONG).map_err(|e| e.to_string())?;
    for trace in [&r.trace_short, &r.trace_long] {
        let seen = observer_deliveries(trace, &"A".into());
        if seen.is_empty() {
            return Err("StatMux: Alice received nothing".into());
        }
        for d in seen {
            if d.time.0 < phase || (d.time.0 - phase) % period != 0 {
                return Err(format!("StatMux: delivery at t={} is not on a pacer tick", d.time.0));
            }
            if d.label.as_ref() != Some(&want) {
                return Err(format!("StatMux: delivery labelled {:?}, want {want}", d.label));
            }
        }
    }
    notes.push(format!("StatMux deliveries on ticks, labelled {want}"));

    let mut open = cfg.clone();
    open.pacer = None;
    let trace = open.run().map_err(|e| e.to_string())?;
    let denials = gateway_denials(&trace, &"A".into()).len();
    if denials == 0 {
        return Err("pacer-removed StatMux: no MonitorDeny at gw:A".into());
    }
    notes.push(format!("no pacer: {denials} denials at gw:A"));
    Ok(notes.join("; "))
}

fn determinism() -> Outcome {
    let configs = common::interleavings();
    let mut first: Option<BTreeMap<String, String>> = None;
    let mut schedules = std::collections::BTreeSet::new();
    for cfg in &configs {
        let trace = cfg.run().map_err(|e| e.to_string())?;
        let results: BTreeMap<String, String> = trace
            .iter()
            .filter(|r| r.kind == TraceKind::JobComplete)
            .map(|r| (r.detail("job").unwrap_or("?").to_string(), r.detail("payload").unwrap_or("?").to_string()))
            .collect();
        if results.len() != cfg.jobs.len() {
            return Err(format!("{}: {} of {} jobs finished", cfg.name, results.len(), cfg.jobs.len()));
        }
        schedules.insert(
            trace
                .iter()
                .filter(|r| r.kind == TraceKind::SliceStart && r.detail("idle").is_none())
                .map(|r| (r.time.0, r.detail("job").unwrap_or("?").to_string()))
                .collect::<Vec<_>>(),
        );
        match &first {
            None => first = Some(results),
            Some(f) if *f != results => return Err(format!("{}: results differ from {}", cfg.name, configs[0].name)),
            _ => {}
        }
    }
    if schedules.len() < 5 {
        return Err(format!("only {} distinct interleavings", schedules.len()));
    }
    let results = first.unwrap();
    for (job, spec) in ["A#0", "A#1", "B#0", "B#1"].iter().zip([
        ("1011001110001111", 3),
        ("0100110001110000", 2),
        ("1110000011110000", 5),
        ("01", 1),
    ]) {
        if results[*job] != common::oracle_result(spec.0, spec.1) {
            return Err(format!("{job}: result disagrees with the reference hash chain"));
        }
    }
    Ok(format!(
        "{} distinct interleavings; all {} results bit-identical and match the reference",
        schedules.len(),
        results.len()
    ))
}

fn leakage_bound() -> Outcome {
    let exp = CovertExperiment::default();
    if exp.message_len() < 64 || exp.trials < 10 || exp.horizon < 2000 {
        return Err("experiment is smaller than required".into());
    }
    let bound: BigRational = frequency_to_rational(exp.f).unwrap();
    let paced = measure(&exp).map_err(|e| e.to_string())?;
    if let Some(t) = paced.trials.iter().find(|t| !(t.decode_error.is_none() && t.achieved_rate <= bound)) {
        return Err(format!("with pacer, seed {} achieved {} > {}", t.seed, t.achieved_rate, exp.f));
    }
    let open = measure(&exp.ablation()).map_err(|e| e.to_string())?;
    if let Some(t) = open.trials.iter().find(|t| t.achieved_rate <= bound) {
        return Err(format!("without pacer, seed {} achieved only {} <= {}", t.seed, t.achieved_rate, exp.f));
    }
    let min_open = open.trials.iter().map(|t| t.achieved_rate.clone()).min().unwrap();
    Ok(format!(
        "{} bits x {} seeds, horizon {}: paced max {:.6} <= {}; no pacer min {} > {}",
        exp.message_len(),
        exp.trials,
        exp.horizon,
        paced.max_achieved_rate,
        exp.f,
        min_open,
        exp.f
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("1 label-lattice laws", lattice_laws),
        ("2 monitor-oracle equivalence", monitor_oracle),
        ("3 capability equivalence", capability_equivalence),
        ("4 pacing downgrade", pacing),
        ("5 scenario isolation", isolation),
        ("6 determinism of computation", determinism),
        ("7 leakage bound", leakage_bound),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (name, run) in criteria {
        let t = Instant::now();
        let (tag, msg) = match run() {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("{tag} [{name}] {msg} ({:.2}s)", t.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of 7 passed in {:.2}s", 7 - failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
