use crate::error::{ensure_same_len, Error, Result};
use crate::scalar::Scalar;

/// Gradient descent with optional heavy-ball momentum.
///
/// With `momentum == 0` the update is exactly `-lr * grad`.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer<T> {
    learning_rate: T,
    momentum: T,
    velocity: Vec<T>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(learning_rate: T, momentum: T) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate >= T::zero()) {
            return Err(Error::config(format!(
                "learning rate must be finite and non-negative, got {learning_rate}"
            )));
        }
        if !(momentum >= T::zero() && momentum < T::one()) {
            return Err(Error::config(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Self {
            learning_rate,
            momentum,
            velocity: Vec::new(),
        })
    }

    pub fn learning_rate(&self) -> T {
        self.learning_rate
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) -> Result<()> {
        ensure_same_len(params.len(), grad.len())?;
        let lr = self.learning_rate;
        if self.momentum == T::zero() {
            for (p, &g) in params.iter_mut().zip(grad) {
                *p = *p - lr * g;
            }
            return Ok(());
        }
        if self.velocity.len() != params.len() {
            self.velocity = vec![T::zero(); params.len()];
        }
        for ((p, v), &g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.momentum * *v + g;
            *p = *p - lr * *v;
        }
        Ok(())
    }
}
