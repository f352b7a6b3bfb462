//! Replay timing.
//!
//! A [`HumanSchedule`] holds spaced-repetition intervals in days. Once the
//! clock has calibrated its virtual day, the days are mapped onto model time
//! and a [`ReplaySchedule`] fires whenever the accumulated model time reaches
//! the next threshold. Alternative modes reproduce the usual ablations:
//! uniform step intervals, reversed spacing, end-only replay and step-count
//! calibration.

use std::fmt;
use std::str::FromStr;

use crate::clock::{ClockConfig, ClockPhase, ModelClock, UpdateDelta};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const EBBINGHAUS_DAYS: [f64; 6] = [1.0, 2.0, 4.0, 7.0, 15.0, 30.0];

/// Replay intervals in human days: positive and strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanSchedule<T> {
    days: Vec<T>,
}

impl<T: Scalar> HumanSchedule<T> {
    pub fn new(days: Vec<T>) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::config("day list is empty"));
        }
        if let Some(d) = days.iter().find(|d| !(d.is_finite() && **d > T::zero())) {
            return Err(Error::config(format!("day {d} is not a positive finite value")));
        }
        if let Some(w) = days.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::config(format!(
                "days must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self { days })
    }

    /// The classic `{1, 2, 4, 7, 15, 30}` day list.
    pub fn ebbinghaus() -> Self {
        Self {
            days: EBBINGHAUS_DAYS.iter().map(|&d| T::lit(d)).collect(),
        }
    }

    pub fn days(&self) -> &[T] {
        &self.days
    }
}

impl<T: Scalar> Default for HumanSchedule<T> {
    fn default() -> Self {
        Self::ebbinghaus()
    }
}

/// Schedule variant with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    /// Thresholds `d * tau_day` on accumulated model time.
    ForgettingCurve,
    /// Fire at every positive multiple of `period` steps into the task.
    FixedIntervalSteps { period: usize },
    /// Descending day list used as spacing: thresholds are cumulative sums
    /// of the gaps `{30, 15, 7, ...}` times `tau_day`.
    Reversed,
    /// A single replay once the task's training loop has finished.
    EndOnly,
    /// Thresholds `d * steps_per_day` on the count of tracked steps.
    StepCalibrated { steps_per_day: usize },
}

impl ScheduleMode {
    pub fn kind(&self) -> ScheduleKind {
        match self {
            ScheduleMode::ForgettingCurve => ScheduleKind::ForgettingCurve,
            ScheduleMode::FixedIntervalSteps { .. } => ScheduleKind::FixedInterval,
            ScheduleMode::Reversed => ScheduleKind::Reversed,
            ScheduleMode::EndOnly => ScheduleKind::EndOnly,
            ScheduleMode::StepCalibrated { .. } => ScheduleKind::StepCalibrated,
        }
    }

    /// Modes whose thresholds depend on the calibrated virtual day.
    pub fn needs_calibration(&self) -> bool {
        matches!(self, ScheduleMode::ForgettingCurve | ScheduleMode::Reversed)
    }
}

/// Parameter-free schedule name, as written in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    ForgettingCurve,
    FixedInterval,
    Reversed,
    EndOnly,
    StepCalibrated,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 5] = [
        ScheduleKind::ForgettingCurve,
        ScheduleKind::FixedInterval,
        ScheduleKind::Reversed,
        ScheduleKind::EndOnly,
        ScheduleKind::StepCalibrated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::ForgettingCurve => "forgetting_curve",
            ScheduleKind::FixedInterval => "fixed_interval",
            ScheduleKind::Reversed => "reversed",
            ScheduleKind::EndOnly => "end_only",
            ScheduleKind::StepCalibrated => "step_calibrated",
        }
    }

    /// Attach parameters. `period` feeds fixed-interval mode and
    /// `steps_per_day` feeds step-calibrated mode; both must be positive.
    pub fn with_params(self, period: usize, steps_per_day: usize) -> Result<ScheduleMode> {
        let mode = match self {
            ScheduleKind::ForgettingCurve => ScheduleMode::ForgettingCurve,
            ScheduleKind::FixedInterval => ScheduleMode::FixedIntervalSteps { period },
            ScheduleKind::Reversed => ScheduleMode::Reversed,
            ScheduleKind::EndOnly => ScheduleMode::EndOnly,
            ScheduleKind::StepCalibrated => ScheduleMode::StepCalibrated { steps_per_day },
        };
        match mode {
            ScheduleMode::FixedIntervalSteps { period: 0 } => {
                Err(Error::calibration("fixed-interval period must be positive"))
            }
            ScheduleMode::StepCalibrated { steps_per_day: 0 } => {
                Err(Error::calibration("steps_per_day must be positive"))
            }
            m => Ok(m),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScheduleKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::config(format!(
                "unknown schedule '{s}' (expected one of: {})",
                ScheduleKind::ALL.map(|k| k.name()).join(", ")
            ))
        })
    }
}

/// Everything a schedule may look at when deciding whether to fire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PollInput<T> {
    /// Accumulated model time of the current task.
    pub tau: T,
    /// Observed updates since the task started, warm-up included.
    pub step_in_task: usize,
    /// Observed updates that contributed to `tau`.
    pub tracked_steps: usize,
    /// 1-based task index.
    pub task_index: usize,
    pub task_finished: bool,
}

/// A fired replay event.
#[derive(Debug, Clone, PartialEq)]
pub struct Trigger<T> {
    /// Index of the threshold consumed, for threshold-based modes.
    pub index: Option<usize>,
    /// Value of the consumed threshold (model time, or steps for
    /// step-calibrated mode).
    pub threshold: Option<T>,
    /// Further thresholds crossed by the same step and skipped.
    pub skipped: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplaySchedule<T> {
    mode: ScheduleMode,
    thresholds: Vec<T>,
    next_index: usize,
    last_fired_step: Option<usize>,
}

/// Map human days onto model time: thresholds `d * tau_day`.
pub fn calibrate<T: Scalar>(human: &HumanSchedule<T>, tau_day: T) -> Result<ReplaySchedule<T>> {
    make_variant(ScheduleMode::ForgettingCurve, human, Some(tau_day))
}

/// Build a schedule in any mode. `tau_day` is required by the modes for
/// which [`ScheduleMode::needs_calibration`] holds and ignored otherwise.
pub fn make_variant<T: Scalar>(
    mode: ScheduleMode,
    human: &HumanSchedule<T>,
    tau_day: Option<T>,
) -> Result<ReplaySchedule<T>> {
    let day = || -> Result<T> {
        match tau_day {
            Some(t) if t.is_finite() && t > T::zero() => Ok(t),
            Some(t) => Err(Error::calibration(format!(
                "virtual day length must be positive and finite, got {t}"
            ))),
            None => Err(Error::calibration("virtual day length is not calibrated yet")),
        }
    };
    let thresholds = match mode {
        ScheduleMode::ForgettingCurve => {
            let day = day()?;
            human.days().iter().map(|&d| d * day).collect()
        }
        ScheduleMode::Reversed => {
            let day = day()?;
            let mut acc = T::zero();
            human
                .days()
                .iter()
                .rev()
                .map(|&gap| {
                    acc = acc + gap;
                    acc * day
                })
                .collect()
        }
        ScheduleMode::StepCalibrated { steps_per_day } => {
            if steps_per_day == 0 {
                return Err(Error::calibration("steps_per_day must be positive"));
            }
            let spd = T::from_count(steps_per_day);
            human.days().iter().map(|&d| d * spd).collect()
        }
        ScheduleMode::FixedIntervalSteps { period } => {
            if period == 0 {
                return Err(Error::calibration("fixed-interval period must be positive"));
            }
            Vec::new()
        }
        ScheduleMode::EndOnly => Vec::new(),
    };
    Ok(ReplaySchedule {
        mode,
        thresholds,
        next_index: 0,
        last_fired_step: None,
    })
}

impl<T: Scalar> ReplaySchedule<T> {
    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn thresholds(&self) -> &[T] {
        &self.thresholds
    }

    /// 0-based cursor into `thresholds`; equals `thresholds().len()` once exhausted.
    pub fn next_index(&self) -> usize {
        self.next_index
    }

    pub fn is_exhausted(&self) -> bool {
        match self.mode {
            ScheduleMode::FixedIntervalSteps { .. } => false,
            ScheduleMode::EndOnly => self.last_fired_step.is_some(),
            _ => self.next_index >= self.thresholds.len(),
        }
    }

    /// Decide whether a replay event starts now. Fires at most once per
    /// `step_in_task` and never on the first task.
    pub fn poll(&mut self, input: &PollInput<T>) -> Option<Trigger<T>> {
        if input.task_index <= 1 || self.last_fired_step == Some(input.step_in_task) {
            return None;
        }
        let trigger = match self.mode {
            ScheduleMode::ForgettingCurve | ScheduleMode::Reversed => self.advance(input.tau),
            ScheduleMode::StepCalibrated { .. } => self.advance(T::from_count(input.tracked_steps)),
            ScheduleMode::FixedIntervalSteps { period } => {
                let due = !input.task_finished && input.step_in_task > 0 && input.step_in_task.is_multiple_of(period);
                due.then(|| Trigger {
                    index: None,
                    threshold: None,
                    skipped: Vec::new(),
                })
            }
            ScheduleMode::EndOnly => (input.task_finished && self.last_fired_step.is_none()).then(|| Trigger {
                index: None,
                threshold: None,
                skipped: Vec::new(),
            }),
        };
        if trigger.is_some() {
            self.last_fired_step = Some(input.step_in_task);
        }
        trigger
    }

    fn advance(&mut self, now: T) -> Option<Trigger<T>> {
        let j = self.next_index;
        let &threshold = self.thresholds.get(j)?;
        if now < threshold {
            return None;
        }
        let mut end = j + 1;
        while end < self.thresholds.len() && now >= self.thresholds[end] {
            end += 1;
        }
        self.next_index = end;
        let skipped: Vec<usize> = (j + 1..end).collect();
        if !skipped.is_empty() {
            log::debug!("replay at threshold {j} also consumed thresholds {skipped:?}");
        }
        Some(Trigger {
            index: Some(j),
            threshold: Some(threshold),
            skipped,
        })
    }
}

/// Result of feeding one update into a [`ReplayTimer`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tick<T> {
    pub phase: ClockPhase,
    pub trigger: Option<Trigger<T>>,
}

/// Clock plus schedule for one run: the "when to replay" half of the method.
///
/// Calibration-dependent schedules are built the moment warm-up completes;
/// other modes exist from the start of each task. Without a mode the timer
/// only runs the clock and never fires.
#[derive(Debug, Clone)]
pub struct ReplayTimer<T> {
    clock: ModelClock<T>,
    human: HumanSchedule<T>,
    mode: Option<ScheduleMode>,
    schedule: Option<ReplaySchedule<T>>,
    task_index: usize,
}

impl<T: Scalar> ReplayTimer<T> {
    pub fn new(clock: ClockConfig<T>, human: HumanSchedule<T>, mode: Option<ScheduleMode>) -> Result<Self> {
        Ok(Self {
            clock: ModelClock::new(clock)?,
            human,
            mode,
            schedule: None,
            task_index: 0,
        })
    }

    /// Reset the clock and schedule for task `task_index` (1-based).
    pub fn start_task(&mut self, task_index: usize) -> Result<()> {
        self.clock.reset_for_new_task();
        self.task_index = task_index;
        self.schedule = match self.mode {
            Some(m) if !m.needs_calibration() => Some(make_variant(m, &self.human, None)?),
            _ => None,
        };
        Ok(())
    }

    pub fn observe(&mut self, delta: UpdateDelta<T>) -> Result<Tick<T>> {
        let phase = self.clock.observe(delta);
        if let Some(m) = self.mode.filter(|m| m.needs_calibration()) {
            if phase == ClockPhase::WarmupComplete {
                let tau_day = self.clock.tau_day().unwrap_or_else(T::zero);
                self.schedule = Some(make_variant(m, &self.human, Some(tau_day))?);
            }
        }
        let trigger = self.poll(false);
        Ok(Tick { phase, trigger })
    }

    /// Poll once more after the task's last training step.
    pub fn finish_task(&mut self) -> Option<Trigger<T>> {
        self.poll(true)
    }

    fn poll(&mut self, task_finished: bool) -> Option<Trigger<T>> {
        let input = PollInput {
            tau: self.clock.tau(),
            step_in_task: self.clock.step_in_task(),
            tracked_steps: self.clock.tracked_steps(),
            task_index: self.task_index,
            task_finished,
        };
        self.schedule.as_mut()?.poll(&input)
    }

    pub fn clock(&self) -> &ModelClock<T> {
        &self.clock
    }

    pub fn schedule(&self) -> Option<&ReplaySchedule<T>> {
        self.schedule.as_ref()
    }

    pub fn mode(&self) -> Option<ScheduleMode> {
        self.mode
    }

    pub fn task_index(&self) -> usize {
        self.task_index
    }
}

/// One row of an offline schedule simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimStep<T> {
    /// 1-based step within the task.
    pub step: usize,
    pub delta: T,
    pub tau: T,
    pub mu: T,
    /// Instability ratio, once warm-up has completed.
    pub ratio: Option<T>,
    pub fired: bool,
}

/// Run a delta trace through a fresh clock and schedule without training.
///
/// An end-of-task poll is issued after the last step; if it fires (end-only
/// mode) the event is attached to the last row. A trace shorter than the
/// warm-up window never calibrates and never fires threshold modes.
pub fn simulate<T: Scalar>(
    trace: &[T],
    clock: ClockConfig<T>,
    human: HumanSchedule<T>,
    mode: ScheduleMode,
    task_index: usize,
) -> Result<Vec<SimStep<T>>> {
    let mut timer = ReplayTimer::new(clock, human, Some(mode))?;
    timer.start_task(task_index)?;
    let mut rows = Vec::with_capacity(trace.len());
    for &d in trace {
        let tick = timer.observe(UpdateDelta::new(d)?)?;
        let c = timer.clock();
        rows.push(SimStep {
            step: c.step_in_task(),
            delta: d,
            tau: c.tau(),
            mu: c.mu(),
            ratio: c.instability_ratio().ok(),
            fired: tick.trigger.is_some(),
        });
    }
    if timer.finish_task().is_some() {
        if let Some(last) = rows.last_mut() {
            last.fired = true;
        }
    }
    Ok(rows)
}
