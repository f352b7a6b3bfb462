use curvereplay::memory::Example;
use curvereplay::modulator::ParameterSnapshot;
use curvereplay::trainer::{
    generate_stream, run_replay_event, train_step, EventKind, Optimizer, ReplayParams, StreamConfig, TaskData,
};
use curvereplay::{anchor_penalty, run_sequence, Buffer, Capacity, Config, Config32, Learner, Net, RunMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Two tasks of 80 training examples, 80 epochs: 800 steps per task.
fn long_config(mode: RunMode) -> Config {
    Config {
        mode,
        epochs_per_task: 80,
        stream: StreamConfig {
            num_tasks: 2,
            samples_per_task: 100,
            input_dim: 4,
            num_classes: 3,
            ..Default::default()
        },
        hidden: vec![6],
        memory: Capacity::Count(5),
        seed: 3,
        ..Default::default()
    }
}

fn tasks(cfg: &Config) -> Vec<TaskData<f64>> {
    generate_stream(&cfg.stream, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap()
}

fn replay_steps(learner_cfg: Config, hook: fn(usize, usize, f64) -> f64) -> Vec<Vec<usize>> {
    let data = tasks(&learner_cfg);
    let mut learner = Learner::new(learner_cfg).unwrap();
    learner.set_delta_hook(Box::new(hook));
    data.iter()
        .map(|t| {
            learner
                .run_task(t)
                .unwrap()
                .replays
                .iter()
                .map(|r| r.step_in_task)
                .collect()
        })
        .collect()
}

#[test]
fn injected_constant_trace_fires_at_schedule_steps() {
    let steps = replay_steps(long_config(RunMode::Forgecurve), |_, _, _| 1.0);
    assert_eq!(steps[0], Vec::<usize>::new());
    assert_eq!(steps[1], vec![48, 72, 120, 192, 384, 744]);
}

#[test]
fn step_calibration_matches_model_clock_only_on_constant_traces() {
    // dyadic value so sums are exact
    let constant = |_: usize, _: usize, _: f64| 0.375;
    let fc = replay_steps(long_config(RunMode::Forgecurve), constant);
    let stc = replay_steps(long_config(RunMode::StepCalibrated), constant);
    assert_eq!(fc, stc);

    // decaying updates stretch model time relative to step counts
    let decaying = |_: usize, step: usize, _: f64| 1.0 / (1.0 + step as f64 / 50.0);
    let fc = replay_steps(long_config(RunMode::Forgecurve), decaying);
    let stc = replay_steps(long_config(RunMode::StepCalibrated), decaying);
    assert_ne!(fc[1], stc[1]);
    assert_eq!(stc[1], vec![48, 72, 120, 192, 384, 744]);
}

#[test]
fn anchor_is_previous_task_endpoint() {
    let mut cfg = long_config(RunMode::Forgecurve);
    cfg.epochs_per_task = 3;
    cfg.stream.num_tasks = 3;
    let data = tasks(&cfg);
    let mut learner = Learner::new(cfg).unwrap();
    let mut previous_end = learner.net().params().to_vec();
    for t in &data {
        learner.run_task(t).unwrap();
        assert_eq!(learner.anchor().values(), previous_end.as_slice());
        previous_end = learner.net().params().to_vec();
    }
}

#[test]
fn clock_only_sees_current_task_steps() {
    let mut cfg = long_config(RunMode::Forgecurve);
    cfg.epochs_per_task = 30;
    let data = tasks(&cfg);
    let mut learner = Learner::new(cfg).unwrap();
    for t in &data {
        let log = learner.run_task(t).unwrap();
        assert_eq!(log.clock_observations, log.train_steps);
        assert_eq!(learner.timer().clock().step_in_task(), log.train_steps);
    }
}

#[test]
fn replay_events_consume_reached_thresholds() {
    let out = run_sequence(&long_config(RunMode::Forgecurve)).unwrap();
    let replays = &out.tasks[1].replays;
    assert!(!replays.is_empty());
    for r in replays {
        assert!(r.tau >= r.trigger.threshold.unwrap());
    }
}

#[test]
fn end_only_replays_once_per_later_task() {
    let mut cfg = long_config(RunMode::EndOnly);
    cfg.epochs_per_task = 2;
    cfg.stream.num_tasks = 4;
    let out = run_sequence(&cfg).unwrap();
    let per_task: Vec<usize> = out.tasks.iter().map(|t| t.replay_events()).collect();
    assert_eq!(per_task, vec![0, 1, 1, 1]);
}

#[test]
fn no_replay_has_no_events() {
    let mut cfg = long_config(RunMode::NoReplay);
    cfg.epochs_per_task = 2;
    let out = run_sequence(&cfg).unwrap();
    assert!(out
        .log
        .iter()
        .all(|r| matches!(r.event, EventKind::None | EventKind::WarmupComplete)));
}

#[test]
fn seeded_runs_are_identical() {
    let mut cfg = long_config(RunMode::Forgecurve);
    cfg.epochs_per_task = 5;
    let a = run_sequence(&cfg).unwrap();
    let b = run_sequence(&cfg).unwrap();
    assert_eq!(a.matrix, b.matrix);
    assert_eq!(a.log, b.log);
    cfg.seed += 1;
    let c = run_sequence(&cfg).unwrap();
    assert_ne!(a.log, c.log);
}

#[test]
fn penalty_only_replay_follows_quadratic_descent() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let anchor_net = Net::new(&[3, 5, 2], &mut rng).unwrap();
    let anchor = ParameterSnapshot::new(anchor_net.params().to_vec()).unwrap();
    let mut net = Net::new(&[3, 5, 2], &mut rng).unwrap();
    let examples: Vec<Example<f64>> = (0..6)
        .map(|i| Example {
            features: vec![i as f64, 1.0, -1.0],
            label: i % 2,
            task_id: 1,
            index: i,
        })
        .collect();
    let mut buffer = Buffer::new(Capacity::Count(6)).unwrap();
    buffer.update(1, &examples, &mut rng).unwrap();

    let (lr, beta) = (0.05, 3e-3);
    let p0 = anchor_penalty(net.params(), &anchor).unwrap();
    let mut opt = Optimizer::new(lr, 0.0).unwrap();
    let params = ReplayParams {
        beta,
        regularize: true,
        task_term: false,
        epochs: 3,
        batch_size: 2,
        beta_base: 1e-3,
    };
    let out = run_replay_event(&mut net, &mut opt, &buffer, &anchor, &params, &mut rng).unwrap();

    // each step scales (params - anchor) by (1 - 2 lr beta)
    let shrink = 1.0 - 2.0 * lr * beta;
    let mut previous = p0;
    for (epoch, reg) in out.epoch_reg_scaled.iter().enumerate() {
        let penalty = reg / 1e-3;
        let steps = 3 * (epoch + 1) as i32;
        let oracle = p0 * shrink.powi(2 * steps);
        assert!((penalty - oracle).abs() <= 1e-10 * oracle);
        assert!(penalty < previous);
        previous = penalty;
    }
}

#[test]
fn update_norm_equals_step_times_gradient_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut net = Net::new(&[4, 6, 3], &mut rng).unwrap();
    let examples: Vec<Example<f64>> = (0..5)
        .map(|i| Example {
            features: (0..4).map(|j| ((i * 3 + j) as f64).cos()).collect(),
            label: i % 3,
            task_id: 1,
            index: i,
        })
        .collect();
    let batch: Vec<&Example<f64>> = examples.iter().collect();

    // finite-difference gradient norm
    let h = 1e-6;
    let mut fd_sq = 0.0;
    for i in 0..net.params().len() {
        let mut probe = net.clone();
        probe.params_mut()[i] += h;
        let up = probe.loss(&batch).unwrap();
        probe.params_mut()[i] -= 2.0 * h;
        let down = probe.loss(&batch).unwrap();
        fd_sq += ((up - down) / (2.0 * h)).powi(2);
    }
    let lr = 0.07;
    let mut opt = Optimizer::new(lr, 0.0).unwrap();
    let (_, delta) = train_step(&mut net, &mut opt, &batch).unwrap();
    let expected = lr * fd_sq.sqrt();
    assert!((delta.value() - expected).abs() <= 1e-4 * expected);
}

#[test]
fn single_precision_run() {
    let cfg = Config32 {
        epochs_per_task: 2,
        stream: StreamConfig {
            num_tasks: 2,
            samples_per_task: 100,
            input_dim: 5,
            num_classes: 3,
            ..Default::default()
        },
        hidden: vec![8],
        ..Default::default()
    };
    let out = run_sequence(&cfg).unwrap();
    assert!(out.matrix.get(1, 2).is_some());
}
