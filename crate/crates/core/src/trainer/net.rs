use rand::Rng;

use crate::error::{ensure_same_len, Error, Result};
use crate::memory::Example;
use crate::scalar::Scalar;

/// Small fully connected classifier: tanh hidden layers, softmax output,
/// mean cross-entropy loss.
///
/// Parameters live in one flat vector. Each layer contributes its weight
/// matrix (`fan_out x fan_in`, row-major) followed by its bias vector, in
/// layer order; this is the order used for update norms and anchoring.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyNet<T> {
    dims: Vec<usize>,
    params: Vec<T>,
}

pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::config(format!(
            "layer dims must have at least two positive entries, got {dims:?}"
        )));
    }
    if dims[dims.len() - 1] < 2 {
        return Err(Error::config("classifier needs at least two output classes"));
    }
    Ok(())
}

impl<T: Scalar> TinyNet<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        check_dims(dims)?;
        let mut params = Vec::with_capacity(param_count(dims));
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| T::lit(rng.random_range(-bound..bound))));
            params.extend((0..fan_out).map(|_| T::zero()));
        }
        Ok(Self {
            dims: dims.to_vec(),
            params,
        })
    }

    pub fn from_params(dims: &[usize], params: Vec<T>) -> Result<Self> {
        check_dims(dims)?;
        ensure_same_len(param_count(dims), params.len())?;
        Ok(Self {
            dims: dims.to_vec(),
            params,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_classes(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        ensure_same_len(self.params.len(), params.len())?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Activations of every layer; the last entry holds the output logits.
    fn activations(&self, x: &[T]) -> Vec<Vec<T>> {
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        let layers = self.dims.len() - 1;
        for (l, w) in self.dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &self.params[off..off + fan_in * fan_out];
            let bias = &self.params[off + fan_in * fan_out..off + (fan_in + 1) * fan_out];
            off += (fan_in + 1) * fan_out;
            let input = &acts[l];
            let out: Vec<T> = (0..fan_out)
                .map(|o| {
                    let row = &weights[o * fan_in..(o + 1) * fan_in];
                    let z = row.iter().zip(input).fold(bias[o], |acc, (&w, &a)| acc + w * a);
                    if l + 1 < layers {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    fn check_input(&self, e: &Example<T>) -> Result<()> {
        ensure_same_len(self.dims[0], e.features.len())?;
        if e.label >= self.num_classes() {
            return Err(Error::state(format!(
                "label {} out of range for {} classes",
                e.label,
                self.num_classes()
            )));
        }
        Ok(())
    }

    /// Class probabilities for one input.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        ensure_same_len(self.dims[0], x.len())?;
        let logits = self.activations(x).pop().unwrap_or_default();
        Ok(softmax(&logits))
    }

    pub fn predict(&self, x: &[T]) -> Result<usize> {
        ensure_same_len(self.dims[0], x.len())?;
        let logits = self.activations(x).pop().unwrap_or_default();
        Ok(argmax(&logits))
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, batch: &[&Example<T>]) -> Result<T> {
        if batch.is_empty() {
            return Err(Error::state("empty batch"));
        }
        let mut total = T::zero();
        for e in batch {
            self.check_input(e)?;
            let logits = self.activations(&e.features).pop().unwrap_or_default();
            total = total + (log_sum_exp(&logits) - logits[e.label]);
        }
        Ok(total / T::from_count(batch.len()))
    }

    /// Mean cross-entropy and its gradient with respect to the flat parameters.
    pub fn loss_and_grad(&self, batch: &[&Example<T>]) -> Result<(T, Vec<T>)> {
        if batch.is_empty() {
            return Err(Error::state("empty batch"));
        }
        let n = T::from_count(batch.len());
        let mut grad = vec![T::zero(); self.params.len()];
        let mut total = T::zero();
        let layers = self.dims.len() - 1;
        let offsets: Vec<usize> = self
            .dims
            .windows(2)
            .scan(0, |off, w| {
                let start = *off;
                *off += (w[0] + 1) * w[1];
                Some(start)
            })
            .collect();

        for e in batch {
            self.check_input(e)?;
            let acts = self.activations(&e.features);
            let logits = &acts[layers];
            let lse = log_sum_exp(logits);
            total = total + (lse - logits[e.label]);

            // d loss / d logits = softmax - onehot, averaged over the batch
            let mut dz: Vec<T> = logits.iter().map(|&z| (z - lse).exp() / n).collect();
            dz[e.label] = dz[e.label] - T::one() / n;

            for l in (0..layers).rev() {
                let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
                let off = offsets[l];
                let input = &acts[l];
                for o in 0..fan_out {
                    let g = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
                    for (gi, &a) in g.iter_mut().zip(input) {
                        *gi = *gi + dz[o] * a;
                    }
                    let b = off + fan_in * fan_out + o;
                    grad[b] = grad[b] + dz[o];
                }
                if l > 0 {
                    let weights = &self.params[off..off + fan_in * fan_out];
                    dz = (0..fan_in)
                        .map(|i| {
                            let back = (0..fan_out).fold(T::zero(), |acc, o| acc + weights[o * fan_in + i] * dz[o]);
                            back * (T::one() - input[i] * input[i])
                        })
                        .collect();
                }
            }
        }
        Ok((total / n, grad))
    }
}

fn log_sum_exp<T: Scalar>(z: &[T]) -> T {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    m + z.iter().map(|&v| (v - m).exp()).sum::<T>().ln()
}

fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let lse = log_sum_exp(z);
    z.iter().map(|&v| (v - lse).exp()).collect()
}

/// First index of the maximum; ties resolve to the lowest class.
fn argmax<T: Scalar>(z: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ex(features: Vec<f64>, label: usize) -> Example<f64> {
        Example {
            features,
            label,
            task_id: 1,
            index: 0,
        }
    }

    #[test]
    fn parameter_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = TinyNet::<f64>::new(&[10, 32, 5], &mut rng).unwrap();
        assert_eq!(net.params().len(), 11 * 32 + 33 * 5);
        assert_eq!(param_count(&[4, 8, 3]), 67);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = TinyNet::<f64>::new(&[3, 6, 4], &mut rng).unwrap();
        let p = net.forward(&[100.0, -3.0, 0.5]).unwrap();
        assert!(p.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(TinyNet::<f64>::new(&[3], &mut rng).is_err());
        assert!(TinyNet::<f64>::new(&[3, 0, 2], &mut rng).is_err());
        assert!(TinyNet::<f64>::from_params(&[2, 2], vec![0.0; 5]).is_err());
        let net = TinyNet::<f64>::new(&[2, 2], &mut rng).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(net.loss(&[&ex(vec![1.0, 2.0], 5)]).is_err());
        assert!(net.loss(&[]).is_err());
    }

    #[test]
    fn zero_net_has_uniform_loss() {
        let net = TinyNet::from_params(&[2, 3], vec![0.0; 9]).unwrap();
        let e = ex(vec![1.0, -1.0], 2);
        assert!((net.loss(&[&e]).unwrap() - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = TinyNet::<f64>::new(&[4, 5, 3], &mut rng).unwrap();
        let batch: Vec<Example<f64>> = (0..6)
            .map(|i| ex((0..4).map(|j| ((i * 4 + j) as f64 * 0.37).sin()).collect(), i % 3))
            .collect();
        let refs: Vec<&Example<f64>> = batch.iter().collect();
        let (loss, grad) = net.loss_and_grad(&refs).unwrap();
        assert!((loss - net.loss(&refs).unwrap()).abs() < 1e-15);
        let h = 1e-6;
        for (i, &g) in grad.iter().enumerate() {
            let mut p = net.clone();
            p.params_mut()[i] += h;
            let up = p.loss(&refs).unwrap();
            p.params_mut()[i] -= 2.0 * h;
            let down = p.loss(&refs).unwrap();
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g).abs() <= 1e-6, "param {i}: {fd} vs {g}");
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
