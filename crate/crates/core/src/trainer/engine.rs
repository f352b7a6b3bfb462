use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::data::{generate_stream, TaskData};
use super::net::TinyNet;
use super::optim::Optimizer;
use super::{MemorySampling, RunMode, TrainConfig};
use crate::clock::{compute_delta, ClockPhase, UpdateDelta};
use crate::error::{Error, Result};
use crate::memory::{Example, ReplayBuffer};
use crate::metrics::{format_float, EvalMatrix};
use crate::modulator::{accumulate_anchor_gradient, anchor_penalty, replay_loss, replay_strength, ParameterSnapshot};
use crate::scalar::Scalar;
use crate::schedule::{ReplayTimer, Trigger};

const DATA_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;
const MEMORY_STREAM: u64 = 4;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn ensure_finite_params<T: Scalar>(params: &[T]) -> Result<()> {
    match params.iter().position(|p| !p.is_finite()) {
        Some(i) => Err(Error::numeric(format!("parameter {i} became non-finite"))),
        None => Ok(()),
    }
}

/// One optimizer step on mean cross-entropy. Returns the pre-step loss and
/// the norm of the applied parameter change.
pub fn train_step<T: Scalar>(
    net: &mut TinyNet<T>,
    optimizer: &mut Optimizer<T>,
    batch: &[&Example<T>],
) -> Result<(T, UpdateDelta<T>)> {
    let before = net.params().to_vec();
    let (loss, grad) = net.loss_and_grad(batch)?;
    if !loss.is_finite() {
        return Err(Error::numeric(format!("training loss is {loss}")));
    }
    optimizer.step(net.params_mut(), &grad)?;
    ensure_finite_params(net.params())?;
    let delta = compute_delta(&before, net.params())?;
    Ok((loss, delta))
}

/// Replay objective on a memory batch: cross-entropy plus, when `beta` is
/// given, `beta * ||params - anchor||^2`. Returns `(old-task loss, total
/// loss, gradient)`.
pub fn replay_objective<T: Scalar>(
    net: &TinyNet<T>,
    batch: &[&Example<T>],
    anchor: &ParameterSnapshot<T>,
    beta: Option<T>,
) -> Result<(T, T, Vec<T>)> {
    let (task_loss, mut grad) = net.loss_and_grad(batch)?;
    let total = match beta {
        Some(beta) => {
            let penalty = anchor_penalty(net.params(), anchor)?;
            accumulate_anchor_gradient(&mut grad, net.params(), anchor, beta)?;
            replay_loss(task_loss, penalty, beta)
        }
        None => task_loss,
    };
    Ok((task_loss, total, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayParams<T> {
    /// Strength of the anchored penalty for this event.
    pub beta: T,
    /// When false the penalty term is dropped entirely.
    pub regularize: bool,
    /// When false the old-task loss is still measured but contributes no gradient.
    pub task_term: bool,
    pub epochs: usize,
    pub batch_size: usize,
    /// Scale used for the logged penalty, so it sits next to the task loss.
    pub beta_base: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome<T> {
    /// Mean old-task cross-entropy over each epoch's batches.
    pub epoch_task_loss: Vec<T>,
    /// `beta_base * penalty` at the end of each epoch.
    pub epoch_reg_scaled: Vec<T>,
    pub steps: usize,
}

/// Optimize the replay objective for `params.epochs` shuffled passes over memory.
pub fn run_replay_event<T: Scalar, R: Rng + ?Sized>(
    net: &mut TinyNet<T>,
    optimizer: &mut Optimizer<T>,
    buffer: &ReplayBuffer<T>,
    anchor: &ParameterSnapshot<T>,
    params: &ReplayParams<T>,
    rng: &mut R,
) -> Result<ReplayOutcome<T>> {
    let beta = params.regularize.then_some(params.beta);
    let mut out = ReplayOutcome {
        epoch_task_loss: Vec::with_capacity(params.epochs),
        epoch_reg_scaled: Vec::with_capacity(params.epochs),
        steps: 0,
    };
    for _ in 0..params.epochs {
        let batches = buffer.epoch_batches(params.batch_size, rng)?;
        let mut loss_sum = T::zero();
        for batch in &batches {
            let (task_loss, total, grad) = if params.task_term {
                replay_objective(net, batch, anchor, beta)?
            } else {
                let task_loss = net.loss(batch)?;
                let mut grad = vec![T::zero(); net.params().len()];
                let mut total = T::zero();
                if let Some(beta) = beta {
                    accumulate_anchor_gradient(&mut grad, net.params(), anchor, beta)?;
                    total = beta * anchor_penalty(net.params(), anchor)?;
                }
                (task_loss, total, grad)
            };
            if !total.is_finite() {
                return Err(Error::numeric(format!("replay loss is {total}")));
            }
            optimizer.step(net.params_mut(), &grad)?;
            ensure_finite_params(net.params())?;
            loss_sum = loss_sum + task_loss;
            out.steps += 1;
        }
        out.epoch_task_loss.push(loss_sum / T::from_count(batches.len()));
        out.epoch_reg_scaled
            .push(params.beta_base * anchor_penalty(net.params(), anchor)?);
    }
    Ok(out)
}

/// Fraction of examples whose argmax prediction equals the label.
pub fn evaluate<T: Scalar>(net: &TinyNet<T>, examples: &[Example<T>]) -> Result<T> {
    if examples.is_empty() {
        return Err(Error::state("cannot evaluate on an empty dataset"));
    }
    let mut correct = 0usize;
    for e in examples {
        if net.predict(&e.features)? == e.label {
            correct += 1;
        }
    }
    Ok(T::from_count(correct) / T::from_count(examples.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    None,
    WarmupComplete,
    Replay,
    Consolidation,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::None => "none",
            EventKind::WarmupComplete => "warmup_complete",
            EventKind::Replay => "replay",
            EventKind::Consolidation => "consolidation",
        }
    }
}

/// One line of the step log. Training steps and replay/consolidation events
/// each get their own row and their own `global_step`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLogRow<T> {
    pub task_index: usize,
    pub global_step: usize,
    pub step_in_task: usize,
    /// Update norm seen by the clock; empty on event rows.
    pub delta: Option<T>,
    pub tau: T,
    pub mu: T,
    pub r: Option<T>,
    pub beta: Option<T>,
    pub event: EventKind,
    pub loss_task: Option<T>,
    pub loss_reg_scaled: Option<T>,
}

pub const STEP_LOG_HEADER: &str =
    "task_index,global_step,step_in_task,delta,tau,mu,r,beta,event,loss_task,loss_reg_scaled";

pub fn write_step_log<T: Scalar, W: Write>(rows: &[StepLogRow<T>], mut w: W) -> std::io::Result<()> {
    let opt = |x: Option<T>| x.map(|v| format_float(v.as_f64())).unwrap_or_default();
    writeln!(w, "{STEP_LOG_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.task_index,
            r.global_step,
            r.step_in_task,
            opt(r.delta),
            format_float(r.tau.as_f64()),
            format_float(r.mu.as_f64()),
            opt(r.r),
            opt(r.beta),
            r.event.name(),
            opt(r.loss_task),
            opt(r.loss_reg_scaled),
        )?;
    }
    Ok(())
}

/// A replay event as seen by the per-task summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRecord<T> {
    pub step_in_task: usize,
    pub tau: T,
    pub trigger: Trigger<T>,
    pub beta: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskLog<T> {
    pub task_index: usize,
    pub train_steps: usize,
    /// Clock observations made during the task.
    pub clock_observations: usize,
    pub replays: Vec<ReplayRecord<T>>,
    pub consolidation_passes: usize,
}

impl<T> TaskLog<T> {
    pub fn replay_events(&self) -> usize {
        self.replays.len()
    }
}

/// Replaces the measured update norm seen by the clock:
/// `(task_index, step_in_task, measured) -> delta`.
pub type DeltaHook<T> = Box<dyn FnMut(usize, usize, T) -> T + Send>;

/// Owns the whole state of one run and executes tasks in order.
pub struct Learner<T: Scalar> {
    config: TrainConfig<T>,
    net: TinyNet<T>,
    optimizer: Optimizer<T>,
    buffer: ReplayBuffer<T>,
    anchor: ParameterSnapshot<T>,
    timer: ReplayTimer<T>,
    shuffle_rng: ChaCha8Rng,
    memory_rng: ChaCha8Rng,
    log: Vec<StepLogRow<T>>,
    delta_hook: Option<DeltaHook<T>>,
}

impl<T: Scalar> Learner<T> {
    pub fn new(config: TrainConfig<T>) -> Result<Self> {
        config.validate()?;
        let net = TinyNet::new(&config.layer_dims(), &mut stream_rng(config.seed, INIT_STREAM))?;
        Self::with_net(config, net)
    }

    pub fn with_net(config: TrainConfig<T>, net: TinyNet<T>) -> Result<Self> {
        config.validate()?;
        if net.dims() != config.layer_dims() {
            return Err(Error::config(format!(
                "network dims {:?} do not match configured {:?}",
                net.dims(),
                config.layer_dims()
            )));
        }
        Ok(Self {
            optimizer: Optimizer::new(config.learning_rate, config.momentum)?,
            buffer: ReplayBuffer::new(config.memory)?,
            anchor: ParameterSnapshot::new(net.params().to_vec())?,
            timer: ReplayTimer::new(config.clock, config.days.clone(), config.schedule_mode()?)?,
            shuffle_rng: stream_rng(config.seed, SHUFFLE_STREAM),
            memory_rng: stream_rng(config.seed, MEMORY_STREAM),
            log: Vec::new(),
            delta_hook: None,
            net,
            config,
        })
    }

    pub fn set_delta_hook(&mut self, hook: DeltaHook<T>) {
        self.delta_hook = Some(hook);
    }

    pub fn config(&self) -> &TrainConfig<T> {
        &self.config
    }

    pub fn net(&self) -> &TinyNet<T> {
        &self.net
    }

    pub fn buffer(&self) -> &ReplayBuffer<T> {
        &self.buffer
    }

    pub fn anchor(&self) -> &ParameterSnapshot<T> {
        &self.anchor
    }

    pub fn timer(&self) -> &ReplayTimer<T> {
        &self.timer
    }

    pub fn log(&self) -> &[StepLogRow<T>] {
        &self.log
    }

    pub fn evaluate(&self, examples: &[Example<T>]) -> Result<T> {
        evaluate(&self.net, examples)
    }

    fn push_row(&mut self, row: StepLogRow<T>) {
        self.log.push(StepLogRow {
            global_step: self.log.len() + 1,
            ..row
        });
    }

    /// Train on one task: anchor, reset the clock, run the scheduled-replay
    /// training loop, consolidate, then store exemplars of the task.
    pub fn run_task(&mut self, task: &TaskData<T>) -> Result<TaskLog<T>> {
        let k = task.task_id;
        if task.train.is_empty() {
            return Err(Error::state(format!("task {k} has no training data")));
        }
        if self.buffer.task(k).is_some() {
            log::warn!("task {k} is being trained a second time");
        }
        self.anchor = ParameterSnapshot::new(self.net.params().to_vec())?;
        self.timer.start_task(k)?;

        let mode = self.config.mode;
        let bs = self.config.batch_size;
        let mut summary = TaskLog {
            task_index: k,
            train_steps: 0,
            clock_observations: 0,
            replays: Vec::new(),
            consolidation_passes: 0,
        };

        let mut order: Vec<usize> = (0..task.train.len()).collect();
        for _ in 0..self.config.epochs_per_task {
            order.shuffle(&mut self.shuffle_rng);
            for chunk in order.chunks(bs) {
                let mut batch: Vec<&Example<T>> = chunk.iter().map(|&i| &task.train[i]).collect();
                if mode == RunMode::MixReplay && !self.buffer.is_empty() {
                    let extra = match self.config.memory_sampling {
                        MemorySampling::Pooled => self.buffer.sample_batch(bs, &mut self.memory_rng)?,
                        MemorySampling::TaskBalanced => self.buffer.sample_batch_balanced(bs, &mut self.memory_rng)?,
                    };
                    batch.extend(extra);
                }
                let (loss, measured) = train_step(&mut self.net, &mut self.optimizer, &batch)?;
                summary.train_steps += 1;

                let step = self.timer.clock().step_in_task() + 1;
                let delta = match self.delta_hook.as_mut() {
                    Some(hook) => UpdateDelta::new(hook(k, step, measured.value()))?,
                    None => measured,
                };
                let tick = self.timer.observe(delta)?;
                summary.clock_observations += 1;

                let clock = self.timer.clock();
                let r = clock.instability_ratio().ok();
                let beta = r.map(|r| replay_strength(&self.config.modulator, r)).transpose()?;
                let row = StepLogRow {
                    task_index: k,
                    global_step: 0,
                    step_in_task: clock.step_in_task(),
                    delta: Some(delta.value()),
                    tau: clock.tau(),
                    mu: clock.mu(),
                    r,
                    beta,
                    event: if tick.phase == ClockPhase::WarmupComplete {
                        EventKind::WarmupComplete
                    } else {
                        EventKind::None
                    },
                    loss_task: Some(loss),
                    loss_reg_scaled: None,
                };
                self.push_row(row);

                if let Some(trigger) = tick.trigger {
                    self.scheduled_replay(trigger, &mut summary)?;
                }
            }
        }

        let s = self.config.clock.warmup_len;
        if summary.train_steps < s {
            log::warn!(
                "task {k}: only {} training steps, warm-up of {s} never completed",
                summary.train_steps
            );
        }
        if let Some(trigger) = self.timer.finish_task() {
            self.scheduled_replay(trigger, &mut summary)?;
        }
        if mode.consolidates() && !self.buffer.is_empty() {
            let epochs = self.config.consolidation_epochs;
            if self.replay_event(EventKind::Consolidation, epochs)?.is_some() {
                summary.consolidation_passes += epochs;
            }
        }
        self.buffer.update(k, &task.train, &mut self.memory_rng)?;
        Ok(summary)
    }

    fn scheduled_replay(&mut self, trigger: Trigger<T>, summary: &mut TaskLog<T>) -> Result<()> {
        let epochs = self.config.replay_epochs;
        if let Some(beta) = self.replay_event(EventKind::Replay, epochs)? {
            let clock = self.timer.clock();
            summary.replays.push(ReplayRecord {
                step_in_task: clock.step_in_task(),
                tau: clock.tau(),
                trigger,
                beta,
            });
        }
        Ok(())
    }

    /// Runs a replay or consolidation phase; the clock does not observe its
    /// updates. The strength comes from the current instability ratio, or
    /// `beta_base` while the ratio is undefined. Returns the strength used,
    /// or `None` if memory was empty and the phase was skipped.
    fn replay_event(&mut self, kind: EventKind, epochs: usize) -> Result<Option<T>> {
        if self.buffer.is_empty() {
            log::warn!("{} skipped: memory buffer is empty", kind.name());
            return Ok(None);
        }
        let cfg = &self.config.modulator;
        let clock = self.timer.clock();
        let r = clock.instability_ratio().ok();
        let beta = match r {
            Some(r) => replay_strength(cfg, r)?,
            None => cfg.beta_base,
        };
        let regularize = self.config.mode.regularizes();
        let params = ReplayParams {
            beta,
            regularize,
            task_term: true,
            epochs,
            batch_size: self.config.batch_size,
            beta_base: cfg.beta_base,
        };
        let (step_in_task, tau, mu) = (clock.step_in_task(), clock.tau(), clock.mu());
        let outcome = run_replay_event(
            &mut self.net,
            &mut self.optimizer,
            &self.buffer,
            &self.anchor,
            &params,
            &mut self.memory_rng,
        )?;
        self.push_row(StepLogRow {
            task_index: self.timer.task_index(),
            global_step: 0,
            step_in_task,
            delta: None,
            tau,
            mu,
            r,
            beta: regularize.then_some(beta),
            event: kind,
            loss_task: outcome.epoch_task_loss.last().copied(),
            loss_reg_scaled: outcome.epoch_reg_scaled.last().copied(),
        });
        Ok(Some(beta))
    }

    /// Train on every task in order, evaluating all seen tasks after each.
    pub fn run_tasks(&mut self, tasks: &[TaskData<T>]) -> Result<(EvalMatrix<T>, Vec<TaskLog<T>>)> {
        let mut matrix = EvalMatrix::new(tasks.len())?;
        let mut logs = Vec::with_capacity(tasks.len());
        for (j, task) in tasks.iter().enumerate() {
            logs.push(self.run_task(task)?);
            for (i, seen) in tasks[..=j].iter().enumerate() {
                matrix.set(i + 1, j + 1, self.evaluate(&seen.test)?)?;
            }
        }
        Ok((matrix, logs))
    }

    pub fn into_parts(self) -> (TinyNet<T>, ReplayBuffer<T>, Vec<StepLogRow<T>>) {
        (self.net, self.buffer, self.log)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub matrix: EvalMatrix<T>,
    pub tasks: Vec<TaskLog<T>>,
    pub log: Vec<StepLogRow<T>>,
    pub buffer: ReplayBuffer<T>,
}

impl<T> RunOutput<T> {
    pub fn replay_events(&self) -> usize {
        self.tasks.iter().map(TaskLog::replay_events).sum()
    }
}

/// Generate the configured stream and train on it end to end.
pub fn run_sequence<T: Scalar>(config: &TrainConfig<T>) -> Result<RunOutput<T>> {
    config.validate()?;
    let tasks = generate_stream(&config.stream, &mut stream_rng(config.seed, DATA_STREAM))?;
    let mut learner = Learner::new(config.clone())?;
    let (matrix, task_logs) = learner.run_tasks(&tasks)?;
    let (_, buffer, log) = learner.into_parts();
    Ok(RunOutput {
        matrix,
        tasks: task_logs,
        log,
        buffer,
    })
}
