//! Covert-channel harness.
//!
//! Bob modulates his demand on a shared core to signal bits: one job per
//! frame, short for 0 and long for 1. Alice submits a fixed probe job at the
//! start of every frame and decodes from how late its result reaches her
//! client. The achieved rate is compared against the pacer frequency.

use std::thread;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entities::{BitString, SchedulerKind};
use crate::kernel::TraceRecord;
use crate::label::{Capability, Frequency, UserTag};
use crate::monitor::MonitorMode;
use crate::scenario::{
    observer_deliveries, CorePlacement, Grant, JobSpec, PacerConfig, ScenarioConfig, ScenarioError, TopologyKind,
};

pub const MIN_MESSAGE_BITS: usize = 64;

#[derive(Debug, Error)]
pub enum LeakageError {
    #[error("experiment error: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Bob's job length for each bit value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Encoding {
    pub zero: u32,
    pub one: u32,
}

impl Default for Encoding {
    fn default() -> Self {
        Encoding { zero: crate::scenario::BOB_SHORT, one: crate::scenario::BOB_LONG }
    }
}

impl Encoding {
    pub fn work(&self, bit: bool) -> u32 {
        if bit {
            self.one
        } else {
            self.zero
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovertExperiment {
    pub name: String,
    /// `stat_mux` or `dedicated`.
    pub topology: TopologyKind,
    /// Message to send; random per trial when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bits: Option<BitString>,
    /// Length of the random message.
    pub message_bits: usize,
    pub encoding: Encoding,
    /// Work of Alice's probe job.
    pub probe_work: u32,
    /// Ticks per signalling frame.
    pub frame_len: u64,
    /// Pacer frequency, which is also the bound under test.
    pub f: Frequency,
    /// With `false` the pacers are removed and each gateway instead holds an
    /// unbounded timing capability for the other user.
    pub pacer: bool,
    /// Pacer phase; drawn per trial from `[1, period]` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<u64>,
    pub trials: u32,
    pub seed: u64,
    pub horizon: u64,
    pub ticks_per_second: u64,
}

impl Default for CovertExperiment {
    fn default() -> Self {
        CovertExperiment {
            name: "covert".into(),
            topology: TopologyKind::StatMux,
            bits: None,
            message_bits: 128,
            encoding: Encoding::default(),
            probe_work: 4,
            frame_len: 12,
            f: Frequency::per_period(20).expect("nonzero period"),
            pacer: true,
            phase: None,
            trials: 10,
            seed: 0,
            horizon: 2000,
            ticks_per_second: 1,
        }
    }
}

impl CovertExperiment {
    pub fn from_json(text: &str) -> Result<Self, LeakageError> {
        let exp: CovertExperiment = serde_json::from_str(text).map_err(|e| LeakageError::Config(e.to_string()))?;
        exp.validate()?;
        Ok(exp)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("experiments always serialize")
    }

    /// The same experiment with the pacers removed.
    pub fn ablation(&self) -> CovertExperiment {
        CovertExperiment { pacer: false, name: format!("{}-no-pacer", self.name), ..self.clone() }
    }

    pub fn message_len(&self) -> usize {
        self.bits.as_ref().map_or(self.message_bits, |b| b.0.len())
    }

    pub fn validate(&self) -> Result<(), LeakageError> {
        let err = |m: String| Err(LeakageError::Config(m));
        if !matches!(self.topology, TopologyKind::StatMux | TopologyKind::Dedicated) {
            return err(format!("topology {:?} is not supported; use stat_mux or dedicated", self.topology));
        }
        if self.message_len() < MIN_MESSAGE_BITS {
            return err(format!("message has {} bits; at least {MIN_MESSAGE_BITS} are needed", self.message_len()));
        }
        if self.encoding.zero == self.encoding.one {
            return err("encoding lengths must differ".into());
        }
        if self.encoding.zero == 0 || self.encoding.one == 0 || self.probe_work == 0 {
            return err("job work must be positive".into());
        }
        if self.frame_len == 0 {
            return err("frame_len must be positive".into());
        }
        if self.trials == 0 {
            return err("at least one trial is required".into());
        }
        if self.ticks_per_second == 0 {
            return err("ticks_per_second must be positive".into());
        }
        let Some(period) = self.f.unit_period() else {
            return err(format!("pacer frequency {} must be 1/n for a whole number of ticks n", self.f));
        };
        if let Some(phase) = self.phase {
            if phase == 0 || phase > period {
                return err(format!("phase {phase} is outside [1, {period}]"));
            }
        }
        let span = self.message_len() as u64 * self.frame_len;
        if span > self.horizon {
            return err(format!(
                "{} frames of {} ticks do not fit in horizon {}",
                self.message_len(),
                self.frame_len,
                self.horizon
            ));
        }
        Ok(())
    }

    fn period(&self) -> u64 {
        self.f.unit_period().expect("validated")
    }

    /// Topology for one run; `jobs` holds everything both users submit.
    fn scenario(&self, seed: u64, phase: u64, jobs: Vec<JobSpec>, horizon: u64) -> ScenarioConfig {
        let (a, b) = (alice(), bob());
        let users = vec![a.clone(), b.clone()];
        let (cores, scheduler) = match self.topology {
            TopologyKind::Dedicated => (CorePlacement::Private, None),
            _ => (CorePlacement::Shared, Some(SchedulerKind::DemandDriven { order: users.clone() })),
        };
        let pacer = self.pacer.then_some(PacerConfig { f: self.f, phase: Some(phase) });
        let grants = match (self.topology, self.pacer) {
            (TopologyKind::Dedicated, _) => Vec::new(),
            (_, true) => vec![
                Grant { holder: a.clone(), capability: Capability::timing(b.clone(), self.f) },
                Grant { holder: b.clone(), capability: Capability::timing(a.clone(), self.f) },
            ],
            (_, false) => vec![
                Grant { holder: a.clone(), capability: Capability::timing(b.clone(), Frequency::Infinity) },
                Grant { holder: b, capability: Capability::timing(a, Frequency::Infinity) },
            ],
        };
        ScenarioConfig {
            name: self.name.clone(),
            users,
            cores,
            scheduler,
            pacer,
            grants,
            jobs,
            horizon,
            seed,
            monitor: MonitorMode::RecordAndDrop,
            ticks_per_second: self.ticks_per_second,
            trace_retain: None,
            expectations: Vec::new(),
        }
    }
}

fn alice() -> UserTag {
    UserTag::from("A")
}

fn bob() -> UserTag {
    UserTag::from("B")
}

/// Frame layout shared by the sender and the decoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Framing {
    /// Start of frame 0.
    pub origin: u64,
    pub frame_len: u64,
    pub frames: usize,
    pub calibration: Calibration,
}

impl Framing {
    pub fn start(&self, k: usize) -> u64 {
        self.origin + k as u64 * self.frame_len
    }

    pub fn elapsed(&self) -> u64 {
        self.frames as u64 * self.frame_len
    }
}

/// Alice's delivery latency for a lone 0 frame and a lone 1 frame; `None`
/// when no delivery was seen.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calibration {
    pub zero: Option<u64>,
    pub one: Option<u64>,
}

impl Calibration {
    /// Nearest calibrated latency wins; a tie is an erasure.
    fn classify(&self, seen: Option<u64>) -> Option<bool> {
        let dist = |cal: Option<u64>| match (cal, seen) {
            (None, None) => Some(0),
            (Some(c), Some(s)) => Some(c.abs_diff(s)),
            _ => None,
        };
        match (dist(self.zero), dist(self.one)) {
            (Some(z), Some(o)) if z < o => Some(false),
            (Some(z), Some(o)) if o < z => Some(true),
            (Some(_), None) => Some(false),
            (None, Some(_)) => Some(true),
            _ => None,
        }
    }
}

/// Bob's submission schedule: one job per frame, submitted at the frame start.
pub fn encode_demand(bits: &[bool], encoding: &Encoding, framing: &Framing) -> Vec<JobSpec> {
    bits.iter()
        .enumerate()
        .map(|(k, &bit)| JobSpec { owner: bob(), work: encoding.work(bit), payload: None, submit_at: framing.start(k) })
        .collect()
}

fn probe_jobs(work: u32, framing: &Framing) -> Vec<JobSpec> {
    (0..framing.frames).map(|k| JobSpec { owner: alice(), work, payload: None, submit_at: framing.start(k) }).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("delivery at t={tick} precedes the start t={start} of frame {frame}")]
    Misaligned { frame: usize, tick: u64, start: u64 },
    #[error("{deliveries} deliveries for {frames} frames")]
    TooManyDeliveries { deliveries: usize, frames: usize },
}

/// Per-frame decoding; `None` marks a frame the decoder cannot call.
pub type Decoded = Vec<Option<bool>>;

/// Decodes Bob's bits from the ticks at which Alice's results were delivered.
///
/// The k-th delivery answers the k-th probe. Its latency from the frame start
/// is matched against the calibration.
pub fn decode_from_releases(release_ticks: &[u64], framing: &Framing) -> Result<Decoded, DecodeError> {
    if release_ticks.len() > framing.frames {
        return Err(DecodeError::TooManyDeliveries { deliveries: release_ticks.len(), frames: framing.frames });
    }
    (0..framing.frames)
        .map(|k| {
            let start = framing.start(k);
            let latency = match release_ticks.get(k) {
                Some(&tick) if tick < start => return Err(DecodeError::Misaligned { frame: k, tick, start }),
                Some(&tick) => Some(tick - start),
                None => None,
            };
            Ok(framing.calibration.classify(latency))
        })
        .collect()
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// `correct * (1 - H2(errors / frames)) / elapsed`, exact when the error rate
/// is 0 or 1/2.
pub fn achieved_rate(correct: usize, errors: usize, elapsed: u64) -> BigRational {
    let frames = correct + errors;
    if frames == 0 || elapsed == 0 || 2 * errors == frames {
        return BigRational::zero();
    }
    let elapsed = BigRational::from_integer(BigInt::from(elapsed));
    if errors == 0 {
        return BigRational::from_integer(BigInt::from(correct)) / elapsed;
    }
    let ber = errors as f64 / frames as f64;
    let info = (correct as f64 * (1.0 - binary_entropy(ber))).max(0.0);
    BigRational::from_float(info).unwrap_or_else(BigRational::zero) / elapsed
}

/// Plug-in mutual information between sent and decoded bits, in bits per frame.
pub fn empirical_mutual_information(sent: &[bool], decoded: &[bool]) -> f64 {
    let n = sent.len().min(decoded.len());
    if n == 0 {
        return 0.0;
    }
    let mut joint = [[0usize; 2]; 2];
    for (&x, &y) in sent.iter().zip(decoded) {
        joint[x as usize][y as usize] += 1;
    }
    let nf = n as f64;
    let px = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let py = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    let mut mi = 0.0;
    for x in 0..2 {
        for y in 0..2 {
            let c = joint[x][y];
            if c > 0 {
                mi += c as f64 / nf * (c as f64 * nf / (px[x] as f64 * py[y] as f64)).log2();
            }
        }
    }
    mi.max(0.0)
}

pub fn frequency_to_rational(f: Frequency) -> Option<BigRational> {
    let r = f.as_ratio()?;
    Some(BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom())))
}

fn rational_text(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

mod rational_string {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::rational_text(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: u32,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<u64>,
    pub framing: Framing,
    pub sent: BitString,
    /// Empty when decoding failed.
    pub decoded: BitString,
    pub erasures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decode_error: Option<String>,
    pub deliveries: usize,
    pub ber: f64,
    /// Bits per tick, exact.
    #[serde(with = "rational_string")]
    pub achieved_rate: BigRational,
    pub achieved_rate_f64: f64,
    pub bits_per_second: f64,
    /// Empirical mutual information per tick, for context.
    pub mi_rate: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub name: String,
    pub topology: TopologyKind,
    pub pacer: bool,
    pub bound: Frequency,
    pub bound_bits_per_second: f64,
    pub trials: Vec<TrialReport>,
    pub mean_ber: f64,
    pub max_achieved_rate: f64,
    pub pass: bool,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    seed: u64,
    ber: f64,
    achieved_rate: f64,
    bound: String,
    pass: &'a str,
}

impl LeakageReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// One row per trial: seed, ber, achieved_rate, bound, pass.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for t in &self.trials {
            w.serialize(CsvRow {
                seed: t.seed,
                ber: t.ber,
                achieved_rate: t.achieved_rate_f64,
                bound: self.bound.to_string(),
                pass: if t.pass { "true" } else { "false" },
            })
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "leakage {} ({:?}, pacer {}), bound {} bits/tick\n",
            self.name,
            self.topology,
            if self.pacer { "on" } else { "off" },
            self.bound
        );
        for t in &self.trials {
            out.push_str(&format!(
                "[{}] seed {} ber {:.4} achieved {:.6} ({}){}\n",
                if t.pass { "PASS" } else { "FAIL" },
                t.seed,
                t.ber,
                t.achieved_rate_f64,
                rational_text(&t.achieved_rate),
                t.decode_error.as_ref().map_or(String::new(), |e| format!(" decode error: {e}"))
            ));
        }
        out.push_str(if self.pass { "overall: PASS\n" } else { "overall: FAIL\n" });
        out
    }
}

/// Alice's delivery ticks in a run.
pub fn alice_delivery_ticks(trace: &[TraceRecord]) -> Vec<u64> {
    observer_deliveries(trace, &alice()).iter().map(|r| r.time.0).collect()
}

/// Latency of Alice's probe when Bob sends the single bit `bit` from t=0.
pub fn calibrate(exp: &CovertExperiment, phase: u64, seed: u64) -> Result<Calibration, LeakageError> {
    let lone = |bit: bool| -> Result<Option<u64>, LeakageError> {
        let framing = Framing { origin: 0, frame_len: exp.frame_len, frames: 1, calibration: Calibration::default() };
        let mut jobs = probe_jobs(exp.probe_work, &framing);
        jobs.extend(encode_demand(&[bit], &exp.encoding, &framing));
        let cfg = exp.scenario(seed, phase, jobs, exp.horizon);
        Ok(alice_delivery_ticks(&cfg.run()?).first().copied())
    };
    Ok(Calibration { zero: lone(false)?, one: lone(true)? })
}

fn run_trial(exp: &CovertExperiment, trial: u32) -> Result<TrialReport, LeakageError> {
    let seed = exp.seed.wrapping_add(trial as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sent: Vec<bool> = match &exp.bits {
        Some(bits) => bits.0.clone(),
        None => (0..exp.message_bits).map(|_| rng.gen()).collect(),
    };
    let period = exp.period();
    let phase = exp.phase.unwrap_or_else(|| rng.gen_range(1..=period));

    let calibration = calibrate(exp, phase, seed)?;
    let framing = Framing { origin: 0, frame_len: exp.frame_len, frames: sent.len(), calibration };
    let mut jobs = probe_jobs(exp.probe_work, &framing);
    jobs.extend(encode_demand(&sent, &exp.encoding, &framing));
    let trace = exp.scenario(seed, phase, jobs, exp.horizon).run()?;
    let ticks = alice_delivery_ticks(&trace);

    let bound = frequency_to_rational(exp.f).expect("validated finite");
    let report = |decoded: Vec<bool>, erasures: usize, decode_error: Option<String>| {
        let errors = sent.iter().zip(&decoded).filter(|(s, d)| s != d).count();
        let valid = decode_error.is_none();
        let achieved =
            if valid { achieved_rate(sent.len() - errors, errors, framing.elapsed()) } else { BigRational::zero() };
        let achieved_f64 = achieved.to_f64().unwrap_or(0.0);
        let mi = empirical_mutual_information(&sent, &decoded) * sent.len() as f64 / framing.elapsed() as f64;
        TrialReport {
            trial,
            seed,
            phase: exp.pacer.then_some(phase),
            framing: framing.clone(),
            sent: BitString(sent.clone()),
            ber: if valid { errors as f64 / sent.len() as f64 } else { 1.0 },
            decoded: BitString(decoded),
            erasures,
            pass: valid && achieved <= bound,
            decode_error,
            deliveries: ticks.len(),
            achieved_rate: achieved,
            achieved_rate_f64: achieved_f64,
            bits_per_second: achieved_f64 * exp.ticks_per_second as f64,
            mi_rate: if valid { mi } else { 0.0 },
        }
    };
    Ok(match decode_from_releases(&ticks, &framing) {
        Ok(decoded) => {
            let erasures = decoded.iter().filter(|d| d.is_none()).count();
            let decoded = decoded.into_iter().map(|d| d.unwrap_or_else(|| rng.gen())).collect();
            report(decoded, erasures, None)
        }
        Err(e) => report(Vec::new(), 0, Some(e.to_string())),
    })
}

/// Runs every trial, in parallel, and aggregates.
pub fn measure(exp: &CovertExperiment) -> Result<LeakageReport, LeakageError> {
    exp.validate()?;
    let trials: Vec<TrialReport> = thread::scope(|s| {
        let handles: Vec<_> = (0..exp.trials).map(|i| s.spawn(move || run_trial(exp, i))).collect();
        handles.into_iter().map(|h| h.join().expect("trial thread panicked")).collect::<Result<_, _>>()
    })?;
    let n = trials.len() as f64;
    Ok(LeakageReport {
        name: exp.name.clone(),
        topology: exp.topology,
        pacer: exp.pacer,
        bound: exp.f,
        bound_bits_per_second: exp.f.to_f64() * exp.ticks_per_second as f64,
        mean_ber: trials.iter().map(|t| t.ber).sum::<f64>() / n,
        max_achieved_rate: trials.iter().map(|t| t.achieved_rate_f64).fold(0.0, f64::max),
        pass: trials.iter().all(|t| t.pass),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn framing(frames: usize, zero: Option<u64>, one: Option<u64>) -> Framing {
        Framing { origin: 0, frame_len: 12, frames, calibration: Calibration { zero, one } }
    }

    #[test]
    fn encoding_maps_bits_to_work() {
        let f = framing(2, None, None);
        assert!(encode_demand(&[], &Encoding::default(), &f).is_empty());
        let jobs = encode_demand(&[false, true], &Encoding::default(), &f);
        assert_eq!(jobs.iter().map(|j| j.work).collect::<Vec<_>>(), [2, 7]);
        assert_eq!(jobs.iter().map(|j| j.submit_at).collect::<Vec<_>>(), [0, 12]);
        assert!(jobs.iter().all(|j| j.owner.as_str() == "B"));
    }

    #[test]
    fn decoder_thresholds_latency() {
        let f = framing(3, Some(7), Some(9));
        let out = decode_from_releases(&[7, 12 + 9, 24 + 8], &f).unwrap();
        assert_eq!(out, [Some(false), Some(true), None]);
        let out = decode_from_releases(&[7], &f).unwrap();
        assert_eq!(out, [Some(false), None, None]);
    }

    #[test]
    fn decoder_rejects_misaligned_framing() {
        let f = framing(2, Some(7), Some(9));
        assert_eq!(decode_from_releases(&[7, 10], &f), Err(DecodeError::Misaligned { frame: 1, tick: 10, start: 12 }));
        assert!(matches!(decode_from_releases(&[7, 19, 30], &f), Err(DecodeError::TooManyDeliveries { .. })));
    }

    #[test]
    fn missing_calibration_decodes_silence() {
        let f = framing(2, Some(7), None);
        assert_eq!(decode_from_releases(&[7], &f).unwrap(), [Some(false), Some(true)]);
    }

    #[test]
    fn achieved_rate_edges() {
        assert_eq!(achieved_rate(12, 0, 144), BigRational::new(1.into(), 12.into()));
        assert!(achieved_rate(5, 5, 100).is_zero());
        assert!(achieved_rate(0, 0, 100).is_zero());
        let r = achieved_rate(9, 1, 100).to_f64().unwrap();
        let h: f64 = -(0.1f64 * 0.1f64.log2() + 0.9 * 0.9f64.log2());
        assert!((r - 9.0 * (1.0 - h) / 100.0).abs() < 1e-12);
    }

    #[test]
    fn mutual_information_bounds() {
        let x = [false, true, false, true];
        assert!((empirical_mutual_information(&x, &x) - 1.0).abs() < 1e-12);
        assert_eq!(empirical_mutual_information(&x, &[false; 4]), 0.0);
    }

    #[test]
    fn validation_rejects_short_messages_and_equal_encodings() {
        let exp = CovertExperiment { message_bits: 8, ..Default::default() };
        assert!(exp.validate().is_err());
        let exp = CovertExperiment { encoding: Encoding { zero: 3, one: 3 }, ..Default::default() };
        assert!(exp.validate().is_err());
        let exp = CovertExperiment { f: Frequency::new(2, 3).unwrap(), ..Default::default() };
        assert!(exp.validate().is_err());
        assert!(CovertExperiment::default().validate().is_ok());
    }

    #[test]
    fn experiment_json_round_trips() {
        let exp = CovertExperiment { phase: Some(3), ..Default::default() };
        assert_eq!(CovertExperiment::from_json(&exp.to_json()).unwrap(), exp);
        assert!(CovertExperiment::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn calibration_separates_bits_without_pacer() {
        let exp = CovertExperiment::default().ablation();
        let cal = calibrate(&exp, 1, 0).unwrap();
        assert!(cal.zero.is_some() && cal.one.is_some());
        assert_ne!(cal.zero, cal.one);
    }
}
