//! Model-centric clock.
//!
//! Time is measured by how far the trainable parameters travel: every applied
//! update contributes its Euclidean norm. The first `warmup_len` updates of a
//! task calibrate the length of a "virtual day" and the baseline update
//! intensity; afterwards an exponential moving average tracks the recent
//! intensity so the replay strength can react to unstable phases.

use crate::error::{ensure_same_len, Error, Result};
use crate::scalar::{l2_norm, Scalar};

/// Magnitude of one applied parameter update. Always finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct UpdateDelta<T>(T);

impl<T: Scalar> UpdateDelta<T> {
    pub fn new(value: T) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::numeric(format!("update delta {value} is not finite")));
        }
        if value < T::zero() {
            return Err(Error::numeric(format!("update delta {value} is negative")));
        }
        Ok(Self(value))
    }

    pub fn zero() -> Self {
        Self(T::zero())
    }

    #[inline]
    pub fn value(self) -> T {
        self.0
    }
}

/// Euclidean norm of `new - prev`.
pub fn compute_delta<T: Scalar>(prev: &[T], new: &[T]) -> Result<UpdateDelta<T>> {
    ensure_same_len(prev.len(), new.len())?;
    if prev.is_empty() {
        return Err(Error::Shape { expected: 1, found: 0 });
    }
    if let Some(x) = prev.iter().chain(new).find(|x| !x.is_finite()) {
        return Err(Error::numeric(format!("parameter entry {x} is not finite")));
    }
    UpdateDelta::new(l2_norm(prev.iter().zip(new).map(|(&a, &b)| b - a)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockConfig<T> {
    /// Number of warm-up updates `S` used for calibration.
    pub warmup_len: usize,
    /// EMA coefficient in `(0, 1]`.
    pub ema_coeff: T,
    /// Guard added to the baseline in the instability ratio denominator.
    pub epsilon: T,
    /// Whether warm-up updates also advance the accumulated time.
    pub include_warmup_in_tau: bool,
}

impl<T: Scalar> Default for ClockConfig<T> {
    fn default() -> Self {
        Self {
            warmup_len: 24,
            ema_coeff: T::lit(0.05),
            epsilon: T::lit(1e-12),
            include_warmup_in_tau: false,
        }
    }
}

impl<T: Scalar> ClockConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_len == 0 {
            return Err(Error::config("warmup_len must be positive"));
        }
        if !(self.ema_coeff > T::zero() && self.ema_coeff <= T::one()) {
            return Err(Error::config(format!(
                "ema_coeff must lie in (0, 1], got {}",
                self.ema_coeff
            )));
        }
        if !(self.epsilon >= T::zero() && self.epsilon.is_finite()) {
            return Err(Error::config(format!(
                "epsilon must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// What an observation did to the clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockPhase {
    WarmingUp,
    /// The observation completed warm-up; `tau_day` and `mu0` are now set.
    WarmupComplete,
    Tracking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelClock<T> {
    config: ClockConfig<T>,
    step_in_task: usize,
    warmup_sum: T,
    tau: T,
    tau_day: Option<T>,
    mu0: Option<T>,
    mu: T,
}

impl<T: Scalar> ModelClock<T> {
    pub fn new(config: ClockConfig<T>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step_in_task: 0,
            warmup_sum: T::zero(),
            tau: T::zero(),
            tau_day: None,
            mu0: None,
            mu: T::zero(),
        })
    }

    pub fn observe(&mut self, delta: UpdateDelta<T>) -> ClockPhase {
        let d = delta.value();
        self.step_in_task += 1;
        let s = self.config.warmup_len;
        if self.step_in_task <= s {
            self.warmup_sum = self.warmup_sum + d;
            if self.config.include_warmup_in_tau {
                self.tau = self.tau + d;
            }
            if self.step_in_task == s {
                let mu0 = self.warmup_sum / T::from_count(s);
                self.tau_day = Some(self.warmup_sum);
                self.mu0 = Some(mu0);
                self.mu = mu0;
                return ClockPhase::WarmupComplete;
            }
            ClockPhase::WarmingUp
        } else {
            let lambda = self.config.ema_coeff;
            self.tau = self.tau + d;
            // (1 - lambda) * mu + lambda * d, arranged so a constant trace is an exact fixed point
            self.mu = self.mu + lambda * (d - self.mu);
            ClockPhase::Tracking
        }
    }

    /// Validating shorthand for `observe(UpdateDelta::new(value)?)`.
    pub fn observe_value(&mut self, value: T) -> Result<ClockPhase> {
        Ok(self.observe(UpdateDelta::new(value)?))
    }

    /// Clears all per-task state, keeping the configuration.
    pub fn reset_for_new_task(&mut self) {
        self.step_in_task = 0;
        self.warmup_sum = T::zero();
        self.tau = T::zero();
        self.tau_day = None;
        self.mu0 = None;
        self.mu = T::zero();
    }

    /// `mu / (mu0 + epsilon)`; only defined once warm-up has completed.
    pub fn instability_ratio(&self) -> Result<T> {
        let mu0 = self.mu0.ok_or_else(|| {
            Error::state(format!(
                "instability ratio requested after {} of {} warm-up steps",
                self.step_in_task, self.config.warmup_len
            ))
        })?;
        let denom = mu0 + self.config.epsilon;
        if denom <= T::zero() {
            return Err(Error::numeric(
                "instability ratio denominator is zero (zero baseline intensity and epsilon = 0)",
            ));
        }
        Ok(self.mu / denom)
    }

    pub fn config(&self) -> &ClockConfig<T> {
        &self.config
    }

    pub fn step_in_task(&self) -> usize {
        self.step_in_task
    }

    /// Number of observations that contributed to `tau`.
    pub fn tracked_steps(&self) -> usize {
        if self.config.include_warmup_in_tau {
            self.step_in_task
        } else {
            self.step_in_task.saturating_sub(self.config.warmup_len)
        }
    }

    pub fn warmup_sum(&self) -> T {
        self.warmup_sum
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn tau_day(&self) -> Option<T> {
        self.tau_day
    }

    pub fn mu0(&self) -> Option<T> {
        self.mu0
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn is_calibrated(&self) -> bool {
        self.mu0.is_some()
    }
}
