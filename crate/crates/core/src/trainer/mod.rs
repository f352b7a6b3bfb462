//! Desk-scale continual-learning harness: a small classifier, plain gradient
//! descent, synthetic task streams and the full scheduled-replay loop.

mod data;
mod engine;
mod net;
mod optim;

use std::fmt;
use std::str::FromStr;

pub use data::{generate_stream, Generator, StreamConfig, TaskData};
pub use engine::{
    evaluate, replay_objective, run_replay_event, run_sequence, train_step, write_step_log, DeltaHook, EventKind,
    Learner, ReplayOutcome, ReplayParams, ReplayRecord, RunOutput, StepLogRow, TaskLog, STEP_LOG_HEADER,
};
pub use net::{param_count, TinyNet};
pub use optim::Optimizer;

use crate::clock::ClockConfig;
use crate::error::{Error, Result};
use crate::memory::Capacity;
use crate::modulator::ModulatorConfig;
use crate::scalar::Scalar;
use crate::schedule::{HumanSchedule, ScheduleKind, ScheduleMode};

/// Training regime of a run: the full method, one of its ablations, or a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunMode {
    /// Model-clock forgetting-curve schedule with intensity-aware anchoring.
    Forgecurve,
    /// Baseline: every training batch is topped up with memory samples.
    MixReplay,
    FixedInterval,
    Reversed,
    EndOnly,
    StepCalibrated,
    /// Plain sequential fine-tuning.
    NoReplay,
    /// Forgetting-curve schedule, replay loss without the anchor term.
    NoRegularizer,
}

impl RunMode {
    pub const ALL: [RunMode; 8] = [
        RunMode::Forgecurve,
        RunMode::MixReplay,
        RunMode::FixedInterval,
        RunMode::Reversed,
        RunMode::EndOnly,
        RunMode::StepCalibrated,
        RunMode::NoReplay,
        RunMode::NoRegularizer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RunMode::Forgecurve => "forgecurve",
            RunMode::MixReplay => "mix_replay",
            RunMode::FixedInterval => "fixed_interval",
            RunMode::Reversed => "reversed",
            RunMode::EndOnly => "end_only",
            RunMode::StepCalibrated => "step_calibrated",
            RunMode::NoReplay => "no_replay",
            RunMode::NoRegularizer => "no_regularizer",
        }
    }

    /// The replay schedule driving this mode, if any.
    pub fn schedule_kind(self) -> Option<ScheduleKind> {
        match self {
            RunMode::Forgecurve | RunMode::NoRegularizer => Some(ScheduleKind::ForgettingCurve),
            RunMode::FixedInterval => Some(ScheduleKind::FixedInterval),
            RunMode::Reversed => Some(ScheduleKind::Reversed),
            RunMode::EndOnly => Some(ScheduleKind::EndOnly),
            RunMode::StepCalibrated => Some(ScheduleKind::StepCalibrated),
            RunMode::MixReplay | RunMode::NoReplay => None,
        }
    }

    /// Whether replay optimizes the anchored penalty alongside the old-task loss.
    pub fn regularizes(self) -> bool {
        self.schedule_kind().is_some() && self != RunMode::NoRegularizer
    }

    /// Whether the end-of-task consolidation pass runs.
    pub fn consolidates(self) -> bool {
        self.schedule_kind().is_some()
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RunMode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::config(format!(
                "unknown mode '{s}' (expected one of: {})",
                RunMode::ALL.map(|m| m.name()).join(", ")
            ))
        })
    }
}

/// How mix-replay draws memory samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MemorySampling {
    #[default]
    Pooled,
    TaskBalanced,
}

impl FromStr for MemorySampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(MemorySampling::Pooled),
            "task_balanced" => Ok(MemorySampling::TaskBalanced),
            _ => Err(Error::config(format!(
                "unknown memory sampling '{s}' (expected pooled or task_balanced)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub mode: RunMode,
    pub epochs_per_task: usize,
    /// Epochs over memory per scheduled replay event.
    pub replay_epochs: usize,
    /// Passes over memory in the end-of-task consolidation.
    pub consolidation_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: T,
    pub momentum: T,
    pub hidden: Vec<usize>,
    pub clock: ClockConfig<T>,
    pub modulator: ModulatorConfig<T>,
    pub days: HumanSchedule<T>,
    pub fixed_interval_period: usize,
    pub steps_per_day: usize,
    pub memory: Capacity,
    pub memory_sampling: MemorySampling,
    pub stream: StreamConfig,
    pub seed: u64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            mode: RunMode::Forgecurve,
            epochs_per_task: 10,
            replay_epochs: 2,
            consolidation_epochs: 1,
            batch_size: 8,
            learning_rate: T::lit(0.05),
            momentum: T::zero(),
            hidden: vec![32],
            clock: ClockConfig::default(),
            modulator: ModulatorConfig::default(),
            days: HumanSchedule::ebbinghaus(),
            fixed_interval_period: 24,
            steps_per_day: 24,
            memory: Capacity::default(),
            memory_sampling: MemorySampling::Pooled,
            stream: StreamConfig::default(),
            seed: 0,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epochs_per_task", self.epochs_per_task),
            ("replay_epochs", self.replay_epochs),
            ("consolidation_epochs", self.consolidation_epochs),
            ("batch_size", self.batch_size),
            ("fixed_interval_period", self.fixed_interval_period),
            ("steps_per_day", self.steps_per_day),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > T::zero()) {
            return Err(Error::config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        self.clock.validate()?;
        self.modulator.validate()?;
        self.memory.validate()?;
        self.stream.validate()?;
        Ok(())
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.stream.input_dim];
        dims.extend(&self.hidden);
        dims.push(self.stream.num_classes);
        dims
    }

    pub fn schedule_mode(&self) -> Result<Option<ScheduleMode>> {
        self.mode
            .schedule_kind()
            .map(|k| k.with_params(self.fixed_interval_period, self.steps_per_day))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in RunMode::ALL {
            assert_eq!(m.name().parse::<RunMode>().unwrap(), m);
        }
        assert!("ewc".parse::<RunMode>().is_err());
    }

    #[test]
    fn mode_semantics() {
        assert!(RunMode::Forgecurve.regularizes());
        assert!(!RunMode::NoRegularizer.regularizes());
        assert!(RunMode::NoRegularizer.consolidates());
        assert!(!RunMode::MixReplay.consolidates());
        assert!(RunMode::NoReplay.schedule_kind().is_none());
    }

    #[test]
    fn defaults_validate() {
        let cfg = TrainConfig::<f64>::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.layer_dims(), vec![20, 32, 5]);
        assert_eq!(cfg.schedule_mode().unwrap(), Some(ScheduleMode::ForgettingCurve));
        assert!(TrainConfig::<f64> {
            batch_size: 0,
            ..cfg.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig::<f64> {
            learning_rate: 0.0,
            ..cfg
        }
        .validate()
        .is_err());
    }
}
