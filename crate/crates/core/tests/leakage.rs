use num_rational::BigRational;
use num_traits::Zero;
use tifc_sim::label::Frequency;
use tifc_sim::leakage::*;
use tifc_sim::scenario::TopologyKind;

fn bound(exp: &CovertExperiment) -> BigRational {
    frequency_to_rational(exp.f).unwrap()
}

#[test]
fn pacer_holds_the_bound() {
    let exp = CovertExperiment::default();
    let report = measure(&exp).unwrap();
    assert_eq!(report.trials.len(), 10);
    assert!(report.pass, "{}", report.summary());
    let period = exp.f.unit_period().unwrap();
    for t in &report.trials {
        assert!(t.achieved_rate <= bound(&exp));
        assert!(t.decode_error.is_none());
        // At most one release per period reaches Alice.
        assert!(t.deliveries as u64 <= exp.horizon.div_ceil(period));
    }
    let seeds: std::collections::BTreeSet<u64> = report.trials.iter().map(|t| t.seed).collect();
    assert_eq!(seeds.len(), 10);
}

#[test]
fn removing_the_pacer_opens_the_channel() {
    let exp = CovertExperiment::default().ablation();
    let report = measure(&exp).unwrap();
    assert!(!report.pass);
    for t in &report.trials {
        assert_eq!(t.ber, 0.0, "seed {}", t.seed);
        assert!(t.achieved_rate > bound(&exp));
        // One bit per 12-tick frame, decoded without error.
        assert_eq!(t.achieved_rate, BigRational::new(1.into(), 12.into()));
    }
}

#[test]
fn dedicated_cores_carry_nothing() {
    let exp = CovertExperiment { topology: TopologyKind::Dedicated, pacer: false, ..Default::default() };
    let report = measure(&exp).unwrap();
    assert!(report.pass);
    assert!((0.35..=0.65).contains(&report.mean_ber), "mean ber {}", report.mean_ber);
    assert!(report.max_achieved_rate < 0.002, "{}", report.max_achieved_rate);
    for t in &report.trials {
        // Alice's timing never moves, so every frame is a tie.
        assert_eq!(t.framing.calibration.zero, t.framing.calibration.one);
        assert_eq!(t.erasures, t.sent.len());
    }
}

#[test]
fn fixed_message_and_phase_are_honoured() {
    let bits: tifc_sim::entities::BitString = "01".repeat(32).parse().unwrap();
    let exp = CovertExperiment { bits: Some(bits.clone()), phase: Some(3), trials: 2, ..Default::default() };
    let report = measure(&exp).unwrap();
    for t in &report.trials {
        assert_eq!(t.sent, bits);
        assert_eq!(t.phase, Some(3));
    }
}

#[test]
fn reports_are_reproducible_and_serialize() {
    let exp = CovertExperiment { trials: 3, ..Default::default() };
    let a = measure(&exp).unwrap();
    let b = measure(&exp).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.to_csv(), b.to_csv());
    let back: LeakageReport = serde_json::from_str(&a.to_json()).unwrap();
    for (x, y) in back.trials.iter().zip(&a.trials) {
        assert_eq!((&x.sent, &x.decoded, &x.achieved_rate, x.pass), (&y.sent, &y.decoded, &y.achieved_rate, y.pass));
    }
    let csv = a.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("seed,ber,achieved_rate,bound,pass"));
    assert_eq!(lines.count(), 3);
    let other = measure(&CovertExperiment { seed: 99, ..exp }).unwrap();
    assert_ne!(other.to_json(), a.to_json());
}

/// Best rate over pacer phases with one frame per pacer period.
fn aligned_best(period: u64) -> BigRational {
    (1..=10.min(period))
        .map(|phase| {
            let exp = CovertExperiment {
                f: Frequency::per_period(period).unwrap(),
                frame_len: period,
                message_bits: 64,
                horizon: 65 * period,
                phase: Some(phase),
                trials: 1,
                ..Default::default()
            };
            let report = measure(&exp).unwrap();
            assert!(report.pass, "period {period} phase {phase}: {}", report.summary());
            report.trials[0].achieved_rate.clone()
        })
        .max()
        .unwrap()
}

#[test]
fn halving_the_frequency_halves_the_rate() {
    let rates: Vec<BigRational> = [20, 40, 80].into_iter().map(aligned_best).collect();
    assert!(!rates[0].is_zero(), "aligned frames should leak something");
    let two = BigRational::from_integer(2.into());
    for w in rates.windows(2) {
        assert!(&w[1] * &two <= w[0], "{} then {}", w[0], w[1]);
    }
}
