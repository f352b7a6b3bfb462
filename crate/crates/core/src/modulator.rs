//! Intensity-aware replay strength and the anchored replay objective.

use crate::error::{ensure_same_len, Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ModulatorConfig<T> {
    pub beta_base: T,
    /// Sensitivity of the strength to the instability ratio.
    pub gamma: T,
    pub g_min: T,
    pub g_max: T,
}

impl<T: Scalar> Default for ModulatorConfig<T> {
    fn default() -> Self {
        Self {
            beta_base: T::lit(1e-3),
            gamma: T::one(),
            g_min: T::lit(0.5),
            g_max: T::lit(3.0),
        }
    }
}

impl<T: Scalar> ModulatorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.beta_base, self.gamma, self.g_min, self.g_max]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::config("modulator parameters must be finite"));
        }
        if self.beta_base <= T::zero() {
            return Err(Error::config(format!(
                "beta_base must be positive, got {}",
                self.beta_base
            )));
        }
        if self.gamma < T::zero() {
            return Err(Error::config(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if !(self.g_min > T::zero() && self.g_min <= self.g_max) {
            return Err(Error::config(format!(
                "clip bounds must satisfy 0 < g_min <= g_max, got [{}, {}]",
                self.g_min, self.g_max
            )));
        }
        Ok(())
    }

    /// Smallest and largest strength [`replay_strength`] can return.
    pub fn strength_bounds(&self) -> (T, T) {
        (self.beta_base * self.g_min, self.beta_base * self.g_max)
    }
}

/// `beta_base * clip(1 + gamma * (r - 1), g_min, g_max)`.
pub fn replay_strength<T: Scalar>(cfg: &ModulatorConfig<T>, r: T) -> Result<T> {
    if !r.is_finite() {
        return Err(Error::numeric(format!("instability ratio {r} is not finite")));
    }
    let scale = T::one() + cfg.gamma * (r - T::one());
    Ok(cfg.beta_base * scale.max(cfg.g_min).min(cfg.g_max))
}

/// Trainable parameters captured at the end of the previous task.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSnapshot<T> {
    values: Vec<T>,
}

impl<T: Scalar> ParameterSnapshot<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::numeric(format!("snapshot entry {x} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `sum_j (params_j - anchor_j)^2`.
pub fn anchor_penalty<T: Scalar>(params: &[T], anchor: &ParameterSnapshot<T>) -> Result<T> {
    ensure_same_len(anchor.len(), params.len())?;
    Ok(params
        .iter()
        .zip(anchor.values())
        .fold(T::zero(), |acc, (&p, &a)| acc + (p - a) * (p - a)))
}

/// Adds `2 * beta * (params - anchor)` into `grad`.
pub fn accumulate_anchor_gradient<T: Scalar>(
    grad: &mut [T],
    params: &[T],
    anchor: &ParameterSnapshot<T>,
    beta: T,
) -> Result<()> {
    ensure_same_len(anchor.len(), params.len())?;
    ensure_same_len(params.len(), grad.len())?;
    let two_beta = beta + beta;
    for ((g, &p), &a) in grad.iter_mut().zip(params).zip(anchor.values()) {
        *g = *g + two_beta * (p - a);
    }
    Ok(())
}

/// Old-task loss plus the anchored penalty.
pub fn replay_loss<T: Scalar>(task_loss_old: T, penalty: T, beta: T) -> T {
    task_loss_old + beta * penalty
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_ratio_gives_base_strength() {
        for gamma in [0.0, 0.5, 1.0, 7.0] {
            let cfg = ModulatorConfig {
                gamma,
                ..Default::default()
            };
            assert_eq!(replay_strength(&cfg, 1.0).unwrap(), 1e-3);
        }
    }

    #[test]
    fn clipping_at_both_ends() {
        let cfg = ModulatorConfig::<f64>::default();
        assert_relative_eq!(replay_strength(&cfg, 5.0).unwrap(), 3e-3, max_relative = 1e-15);
        assert_relative_eq!(replay_strength(&cfg, 0.0).unwrap(), 5e-4, max_relative = 1e-15);
        assert_relative_eq!(replay_strength(&cfg, 2.0).unwrap(), 2e-3, max_relative = 1e-15);
        assert!(replay_strength(&cfg, f64::NAN).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = ModulatorConfig::<f64>::default();
        assert!(ok.validate().is_ok());
        assert!(ModulatorConfig {
            beta_base: 0.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(ModulatorConfig {
            gamma: -1.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(ModulatorConfig {
            g_min: 0.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(ModulatorConfig {
            g_min: 4.0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert_eq!(ok.strength_bounds(), (5e-4, 3e-3));
    }

    #[test]
    fn penalty_cases() {
        let anchor = ParameterSnapshot::new(vec![1.0, -1.0]).unwrap();
        assert_eq!(anchor_penalty(&[1.0, -1.0], &anchor).unwrap(), 0.0);
        assert_eq!(anchor_penalty(&[2.0, 1.0], &anchor).unwrap(), 5.0);
        assert!(matches!(anchor_penalty(&[1.0], &anchor), Err(Error::Shape { .. })));
        assert!(ParameterSnapshot::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn penalty_matches_sum_of_squares_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let p: Vec<f64> = (0..50).map(|_| rng.random_range(-3.0..3.0)).collect();
        let a: Vec<f64> = (0..50).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut oracle = 0.0;
        for i in 0..50 {
            oracle += (p[i] - a[i]).powi(2);
        }
        let got = anchor_penalty(&p, &ParameterSnapshot::new(a).unwrap()).unwrap();
        assert_relative_eq!(got, oracle, max_relative = 1e-12);
    }

    #[test]
    fn replay_loss_arithmetic() {
        assert_eq!(replay_loss(0.7, 0.0, 1e-3), 0.7);
        assert_relative_eq!(replay_loss(0.7, 100.0, 1e-3), 0.8, max_relative = 1e-15);
    }

    #[test]
    fn anchor_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let anchor = ParameterSnapshot::new((0..20).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let beta = 2.5e-3;
        let mut grad = vec![0.0; 20];
        accumulate_anchor_gradient(&mut grad, &p, &anchor, beta).unwrap();
        let h = 1e-5;
        for i in 0..20 {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (beta * anchor_penalty(&plus, &anchor).unwrap() - beta * anchor_penalty(&minus, &anchor).unwrap())
                / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-4 * grad[i].abs().max(1e-8));
        }
    }
}
