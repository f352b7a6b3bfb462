use curvereplay::modulator::ParameterSnapshot;
use curvereplay::{
    anchor_penalty, backward_transfer, calibrate, overall_performance, replay_strength, simulate, ClockConfig,
    EvalMatrix, HumanSchedule, ModelClock, ModulatorConfig, ScheduleMode,
};
use proptest::prelude::*;

fn cfg(s: usize, lambda: f64, eps: f64) -> ClockConfig<f64> {
    ClockConfig {
        warmup_len: s,
        ema_coeff: lambda,
        epsilon: eps,
        include_warmup_in_tau: false,
    }
}

fn trace_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..5.0, 30..300)
}

proptest! {
    #[test]
    fn tau_is_monotone(trace in trace_strategy(), include in any::<bool>()) {
        let mut c = ModelClock::new(ClockConfig { include_warmup_in_tau: include, ..cfg(8, 0.1, 1e-12) }).unwrap();
        let mut last = 0.0;
        for d in trace {
            c.observe_value(d).unwrap();
            prop_assert!(c.tau() >= last);
            last = c.tau();
        }
    }

    #[test]
    fn ema_stays_within_observed_range(trace in trace_strategy(), lambda in 0.01f64..=1.0) {
        let s = 10;
        let mut c = ModelClock::new(cfg(s, lambda, 0.0)).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (t, &d) in trace.iter().enumerate() {
            c.observe_value(d).unwrap();
            if t + 1 == s {
                lo = c.mu0().unwrap();
                hi = lo;
            } else if t + 1 > s {
                lo = lo.min(d);
                hi = hi.max(d);
                let slack = 1e-12 * hi;
                prop_assert!(c.mu() >= lo - slack && c.mu() <= hi + slack);
            }
        }
    }

    #[test]
    fn day_is_sum_of_warmup(trace in trace_strategy(), s in 1usize..30) {
        let mut c = ModelClock::new(cfg(s, 0.05, 1e-12)).unwrap();
        for &d in &trace {
            c.observe_value(d).unwrap();
        }
        let mut sum = 0.0;
        for &d in &trace[..s] {
            sum += d;
        }
        prop_assert_eq!(c.tau_day(), Some(sum));
        prop_assert_eq!(c.warmup_sum(), sum);
    }

    #[test]
    fn power_of_two_scaling_is_exact(trace in trace_strategy(), e in -8i32..8) {
        let c = 2f64.powi(e);
        let run = |scale: f64| {
            let mut clock = ModelClock::new(cfg(12, 0.05, 0.0)).unwrap();
            let mut ratios = Vec::new();
            for &d in &trace {
                clock.observe_value(scale * d).unwrap();
                ratios.push(clock.instability_ratio().ok());
            }
            (clock.tau(), clock.tau_day().unwrap(), clock.warmup_sum(), ratios)
        };
        let (tau, day, sum, r) = run(1.0);
        let (tau_c, day_c, sum_c, r_c) = run(c);
        prop_assert_eq!(tau_c, c * tau);
        prop_assert_eq!(day_c, c * day);
        prop_assert_eq!(sum_c, c * sum);
        prop_assert_eq!(r, r_c);
    }

    #[test]
    fn fires_at_most_once_per_threshold(trace in trace_strategy()) {
        let rows = simulate(&trace, cfg(6, 0.05, 1e-12), HumanSchedule::ebbinghaus(), ScheduleMode::ForgettingCurve, 2).unwrap();
        prop_assert!(rows.iter().filter(|r| r.fired).count() <= 6);
    }

    #[test]
    fn step_calibrated_depends_only_on_length(a in trace_strategy(), seed in 0.01f64..3.0) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, _)| seed * (1.0 + (i % 5) as f64)).collect();
        let mode = ScheduleMode::StepCalibrated { steps_per_day: 4 };
        let fired = |t: &[f64]| simulate(t, cfg(4, 0.05, 1e-12), HumanSchedule::ebbinghaus(), mode, 3)
            .unwrap()
            .into_iter()
            .map(|r| r.fired)
            .collect::<Vec<_>>();
        prop_assert_eq!(fired(&a), fired(&b));
    }

    #[test]
    fn strength_bounded_and_monotone(r1 in 0.0f64..10.0, r2 in 0.0f64..10.0, gamma in 0.0f64..5.0) {
        let m = ModulatorConfig { gamma, ..ModulatorConfig::default() };
        let (lo, hi) = (r1.min(r2), r1.max(r2));
        let b_lo = replay_strength(&m, lo).unwrap();
        let b_hi = replay_strength(&m, hi).unwrap();
        let (min, max) = m.strength_bounds();
        prop_assert!(b_lo >= min && b_hi <= max);
        prop_assert!(b_lo <= b_hi);
    }

    #[test]
    fn zero_gamma_is_fixed_strength(r in 0.0f64..100.0) {
        let m = ModulatorConfig { gamma: 0.0, ..ModulatorConfig::default() };
        prop_assert_eq!(replay_strength(&m, r).unwrap(), 1e-3);
    }

    #[test]
    fn penalty_permutation_invariant(pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..40), rot in 0usize..40) {
        let (p, a): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let k = rot % p.len();
        let mut p2 = p.clone();
        let mut a2 = a.clone();
        p2.rotate_left(k);
        a2.rotate_left(k);
        p2.reverse();
        a2.reverse();
        let x = anchor_penalty(&p, &ParameterSnapshot::new(a).unwrap()).unwrap();
        let y = anchor_penalty(&p2, &ParameterSnapshot::new(a2).unwrap()).unwrap();
        prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
    }

    #[test]
    fn bwt_ignores_intermediate_columns(vals in prop::collection::vec(0.0f64..1.0, 15), noise in prop::collection::vec(0.0f64..1.0, 15)) {
        let k = 5;
        let fill = |v: &[f64], n: Option<&[f64]>| {
            let mut m = EvalMatrix::new(k).unwrap();
            let mut idx = 0;
            for j in 1..=k {
                for i in 1..=j {
                    let intermediate = i != j && j != k;
                    let x = match n {
                        Some(n) if intermediate => n[idx],
                        _ => v[idx],
                    };
                    m.set(i, j, x).unwrap();
                    idx += 1;
                }
            }
            m
        };
        let a = fill(&vals, None);
        let b = fill(&vals, Some(&noise));
        prop_assert_eq!(backward_transfer(&a).unwrap(), backward_transfer(&b).unwrap());
        let op = overall_performance(&a).unwrap();
        let bwt = backward_transfer(&a).unwrap();
        prop_assert!((0.0..=1.0).contains(&op));
        prop_assert!((-1.0..=1.0).contains(&bwt));
    }

    #[test]
    fn constant_shift_moves_op_only(vals in prop::collection::vec(0.1f64..0.8, 10), shift in 0.0f64..0.2) {
        let k = 4;
        let build = |s: f64| {
            let mut m = EvalMatrix::new(k).unwrap();
            let mut idx = 0;
            for j in 1..=k {
                for i in 1..=j {
                    m.set(i, j, vals[idx] + s).unwrap();
                    idx += 1;
                }
            }
            m
        };
        let (a, b) = (build(0.0), build(shift));
        prop_assert!((overall_performance(&b).unwrap() - overall_performance(&a).unwrap() - shift).abs() < 1e-12);
        prop_assert!((backward_transfer(&b).unwrap() - backward_transfer(&a).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn forgetting_curve_fires_are_scale_invariant_on_integer_scaling() {
    let trace: Vec<f64> = (0..800).map(|i| 0.5 + ((i * 37) % 11) as f64 / 4.0).collect();
    let fired = |c: f64| {
        let t: Vec<f64> = trace.iter().map(|d| d * c).collect();
        simulate(
            &t,
            ClockConfig::default(),
            HumanSchedule::ebbinghaus(),
            ScheduleMode::ForgettingCurve,
            2,
        )
        .unwrap()
        .into_iter()
        .filter(|r| r.fired)
        .map(|r| r.step)
        .collect::<Vec<_>>()
    };
    assert!(!fired(1.0).is_empty());
    assert_eq!(fired(1.0), fired(4.0));
    assert_eq!(fired(1.0), fired(0.125));
}

#[test]
fn calibrate_preserves_order() {
    let s = calibrate(&HumanSchedule::new(vec![0.5, 3.0, 9.0]).unwrap(), 2.0).unwrap();
    assert_eq!(s.thresholds(), &[1.0, 6.0, 18.0]);
}
