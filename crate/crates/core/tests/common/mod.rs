//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use sha2::{Digest, Sha256};
use tifc_sim::entities::SchedulerKind;
use tifc_sim::label::{Capability, CapabilityKind, Frequency, Label, UserTag};
use tifc_sim::monitor::MonitorMode;
use tifc_sim::scenario::{CorePlacement, Grant, JobSpec, PacerConfig, ScenarioConfig};

/// A rate as (numerator, denominator), or `None` for infinity.
pub type Rate = Option<(u64, u64)>;

fn rate_of(f: Frequency) -> Rate {
    f.as_ratio().map(|r| (*r.numer(), *r.denom()))
}

fn rate_le(a: Rate, b: Rate) -> bool {
    match (a, b) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some((an, ad)), Some((bn, bd))) => an as u128 * bd as u128 <= bn as u128 * ad as u128,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Atom {
    Content(String),
    Timing(String, Rate),
}

fn rate_key(r: Rate) -> (u8, u64, u64) {
    match r {
        None => (1, 0, 0),
        Some((n, d)) => (0, n, d),
    }
}

/// A label as a flat set of tags, the way the flow rule is stated: a send
/// is allowed when the source's tags are a subset of the destination's.
/// A timing tag at rate f also stands for every slower tag on the same
/// user, so each label is closed downward over the rates in `universe`.
struct TagSet(BTreeSet<(u8, String, (u8, u64, u64))>);

fn closure(label: &[Atom], universe: &[Rate]) -> TagSet {
    let mut out = BTreeSet::new();
    for atom in label {
        match atom {
            Atom::Content(u) => {
                out.insert((0, u.clone(), (0, 0, 0)));
            }
            Atom::Timing(u, f) => {
                for g in universe.iter().filter(|g| rate_le(**g, *f)) {
                    out.insert((1, u.clone(), rate_key(*g)));
                }
            }
        }
    }
    TagSet(out)
}

fn atoms(label: &Label) -> Vec<Atom> {
    let mut out: Vec<Atom> = label.content.iter().map(|u| Atom::Content(u.to_string())).collect();
    out.extend(label.timing.iter().map(|(u, f)| Atom::Timing(u.to_string(), rate_of(*f))));
    out
}

/// Removes what one capability allows, atom by atom.
fn strip(atoms: Vec<Atom>, cap: &Capability) -> Vec<Atom> {
    let who = cap.user.to_string();
    atoms
        .into_iter()
        .filter(|a| match (a, &cap.kind) {
            (Atom::Content(u), CapabilityKind::Content) => *u != who,
            (Atom::Content(u), CapabilityKind::Timing(limit)) => !(*u == who && limit.as_ratio().is_none()),
            (Atom::Timing(u, _), CapabilityKind::Content) => *u != who,
            (Atom::Timing(u, f), CapabilityKind::Timing(limit)) => !(*u == who && rate_le(*f, rate_of(*limit))),
        })
        .collect()
}

/// Brute-force flow decision for `src` with `caps` to `dst`.
pub fn oracle_allows(src: &Label, caps: &[Capability], dst: &Label) -> bool {
    let mut s = atoms(src);
    for cap in caps {
        s = strip(s, cap);
    }
    let d = atoms(dst);
    let mut universe: Vec<Rate> = s
        .iter()
        .chain(d.iter())
        .filter_map(|a| match a {
            Atom::Timing(_, f) => Some(*f),
            Atom::Content(_) => None,
        })
        .collect();
    universe.sort_by_key(|r| rate_key(*r));
    universe.dedup();
    closure(&s, &universe).0.is_subset(&closure(&d, &universe).0)
}

/// Brute-force flow order: no capabilities.
pub fn oracle_leq(a: &Label, b: &Label) -> bool {
    oracle_allows(a, &[], b)
}

pub const RATES: &[(u64, u64)] = &[(0, 1), (1, 20), (1, 5), (1, 2), (1, 1), (7, 3), (5, 1)];

pub fn random_frequency(rng: &mut impl Rng) -> Frequency {
    if rng.gen_ratio(1, 5) {
        Frequency::Infinity
    } else {
        let (n, d) = RATES[rng.gen_range(0..RATES.len())];
        Frequency::new(n, d).unwrap()
    }
}

pub fn random_label(rng: &mut impl Rng, users: &[&str]) -> Label {
    let mut l = Label::empty();
    for u in users {
        if rng.gen_bool(0.4) {
            l.content.insert(UserTag::from(*u));
        }
        if rng.gen_bool(0.5) {
            l.add_timing(UserTag::from(*u), random_frequency(rng));
        }
    }
    l
}

pub fn random_caps(rng: &mut impl Rng, users: &[&str]) -> Vec<Capability> {
    (0..rng.gen_range(0..4))
        .map(|_| {
            let u = users[rng.gen_range(0..users.len())];
            if rng.gen_ratio(1, 4) {
                Capability::content(u)
            } else {
                Capability::timing(u, random_frequency(rng))
            }
        })
        .collect()
}

/// Every label over `users` with rates drawn from {0, 1, inf}.
pub fn exhaustive_labels(users: &[&str]) -> Vec<Label> {
    let rates = [None, Some(Frequency::ZERO), Some(Frequency::integer(1)), Some(Frequency::Infinity)];
    let mut out = vec![Label::empty()];
    for u in users {
        let mut next = Vec::new();
        for base in &out {
            for content in [false, true] {
                for rate in rates {
                    let mut l = base.clone();
                    if content {
                        l.content.insert(UserTag::from(*u));
                    }
                    if let Some(f) = rate {
                        l.add_timing(UserTag::from(*u), f);
                    }
                    next.push(l);
                }
            }
        }
        out = next;
    }
    out
}

/// Chained SHA-256 over the payload and slice index, recomputed from scratch.
pub fn oracle_result(payload: &str, work: u32) -> String {
    let bits: Vec<bool> = payload.chars().map(|c| c == '1').collect();
    let mut packed = (bits.len() as u64).to_le_bytes().to_vec();
    for chunk in bits.chunks(8) {
        packed.push(chunk.iter().enumerate().fold(0u8, |b, (i, bit)| if *bit { b | (0x80 >> i) } else { b }));
    }
    let mut state: Vec<u8> = Sha256::new().chain_update(b"tifc-job").chain_update(&packed).finalize().to_vec();
    for i in 0..work {
        state = Sha256::new().chain_update(&state).chain_update(i.to_le_bytes()).finalize().to_vec();
    }
    state[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn users(names: &[&str]) -> Vec<UserTag> {
    names.iter().map(|u| UserTag::from(*u)).collect()
}

fn custom(name: &str, cores: CorePlacement, scheduler: Option<SchedulerKind>, pacer: Option<u64>) -> ScenarioConfig {
    let u = users(&["A", "B"]);
    let grants = if let Some(p) = pacer {
        let f = Frequency::per_period(p).unwrap();
        vec![
            Grant { holder: u[0].clone(), capability: Capability::timing("B", f) },
            Grant { holder: u[1].clone(), capability: Capability::timing("A", f) },
        ]
    } else if matches!(scheduler, Some(SchedulerKind::DemandDriven { .. })) {
        vec![
            Grant { holder: u[0].clone(), capability: Capability::content("B") },
            Grant { holder: u[1].clone(), capability: Capability::content("A") },
        ]
    } else {
        Vec::new()
    };
    let job = |owner: &str, work: u32, payload: &str, at: u64| JobSpec {
        owner: owner.into(),
        work,
        payload: Some(payload.parse().unwrap()),
        submit_at: at,
    };
    ScenarioConfig {
        name: name.into(),
        users: u,
        cores,
        scheduler,
        pacer: pacer.map(|p| PacerConfig { f: Frequency::per_period(p).unwrap(), phase: None }),
        grants,
        jobs: vec![
            job("A", 3, "1011001110001111", 0),
            job("A", 2, "0100110001110000", 6),
            job("B", 5, "1110000011110000", 0),
            job("B", 1, "01", 2),
        ],
        horizon: 120,
        seed: 7,
        monitor: MonitorMode::RecordAndDrop,
        ticks_per_second: 1,
        trace_retain: None,
        expectations: Vec::new(),
    }
}

/// The same four jobs under seven different schedules.
pub fn interleavings() -> Vec<ScenarioConfig> {
    let rot = |names: &[&str]| SchedulerKind::Reservation { rotation: users(names) };
    let dd = |names: &[&str]| SchedulerKind::DemandDriven { order: users(names) };
    vec![
        custom("private", CorePlacement::Private, None, None),
        custom("rot-ab", CorePlacement::Shared, Some(rot(&["A", "B"])), None),
        custom("rot-ba", CorePlacement::Shared, Some(rot(&["B", "A"])), None),
        custom("rot-aab", CorePlacement::Shared, Some(rot(&["A", "A", "B"])), None),
        custom("rot-bbba", CorePlacement::Shared, Some(rot(&["B", "B", "B", "A"])), None),
        custom("dd-ab-paced", CorePlacement::Shared, Some(dd(&["A", "B"])), Some(5)),
        custom("rot-abb", CorePlacement::Shared, Some(rot(&["A", "B", "B"])), None),
    ]
}
