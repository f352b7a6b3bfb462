//! Synthetic task sequences.
//!
//! Every task shares one Gaussian-mixture classification problem (fixed
//! class means, isotropic noise). Tasks differ by an input transform: a
//! coordinate permutation or a rotation of coordinate pairs. The label space
//! is shared, so later tasks overwrite what earlier ones taught.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::memory::Example;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    PermutedFeatures,
    RotatedGaussians,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::PermutedFeatures => "permuted_features",
            Generator::RotatedGaussians => "rotated_gaussians",
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permuted_features" => Ok(Generator::PermutedFeatures),
            "rotated_gaussians" => Ok(Generator::RotatedGaussians),
            _ => Err(Error::config(format!(
                "unknown generator '{s}' (expected permuted_features or rotated_gaussians)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamConfig {
    pub num_tasks: usize,
    /// Examples generated per task, before the train/test split.
    pub samples_per_task: usize,
    pub num_classes: usize,
    pub input_dim: usize,
    pub generator: Generator,
    /// Fraction of each task held out for evaluation.
    pub test_fraction: f64,
    /// Standard deviation of the class means around the origin.
    pub class_spread: f64,
    /// Standard deviation of the per-example noise.
    pub noise: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            num_tasks: 5,
            samples_per_task: 500,
            num_classes: 5,
            input_dim: 20,
            generator: Generator::PermutedFeatures,
            test_fraction: 0.2,
            class_spread: 1.0,
            noise: 1.0,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_tasks == 0 {
            return Err(Error::config("num_tasks must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("num_classes must be at least 2"));
        }
        if self.input_dim < 2 {
            return Err(Error::config("input_dim must be at least 2"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("test_fraction must lie in (0, 1)"));
        }
        let (train, test) = self.split_sizes();
        if test == 0 || train < self.num_classes {
            return Err(Error::config(format!(
                "samples_per_task {} leaves too few examples for a {}-class train/test split",
                self.samples_per_task, self.num_classes
            )));
        }
        if !(self.class_spread > 0.0 && self.noise >= 0.0) {
            return Err(Error::config("class_spread must be positive and noise non-negative"));
        }
        if self.generator == Generator::PermutedFeatures && !enough_permutations(self.input_dim, self.num_tasks) {
            return Err(Error::config(format!(
                "input_dim {} has fewer distinct permutations than {} tasks",
                self.input_dim, self.num_tasks
            )));
        }
        Ok(())
    }

    /// `(train, test)` example counts per task.
    pub fn split_sizes(&self) -> (usize, usize) {
        let test = (self.samples_per_task as f64 * self.test_fraction).round() as usize;
        (self.samples_per_task.saturating_sub(test), test)
    }
}

fn enough_permutations(dim: usize, tasks: usize) -> bool {
    let mut f: usize = 1;
    for i in 2..=dim {
        f = f.saturating_mul(i);
        if f >= tasks {
            return true;
        }
    }
    f >= tasks
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskData<T> {
    /// 1-based task index.
    pub task_id: usize,
    pub train: Vec<Example<T>>,
    pub test: Vec<Example<T>>,
}

type Transform = Box<dyn Fn(&[f64]) -> Vec<f64>>;

/// Generate all tasks of a stream. Labels cycle through every class, so each
/// task is class-balanced up to one example.
pub fn generate_stream<T: Scalar, R: Rng + ?Sized>(cfg: &StreamConfig, rng: &mut R) -> Result<Vec<TaskData<T>>> {
    cfg.validate()?;
    let d = cfg.input_dim;
    let means: Vec<Vec<f64>> = (0..cfg.num_classes)
        .map(|_| {
            (0..d)
                .map(|_| cfg.class_spread * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();

    let mut perms: Vec<Vec<usize>> = Vec::new();
    let (n_train, _) = cfg.split_sizes();
    let mut tasks = Vec::with_capacity(cfg.num_tasks);
    for k in 1..=cfg.num_tasks {
        let transform: Transform = match cfg.generator {
            Generator::PermutedFeatures => {
                let perm = if k == 1 {
                    (0..d).collect()
                } else {
                    loop {
                        let mut p: Vec<usize> = (0..d).collect();
                        p.shuffle(rng);
                        if !perms.contains(&p) {
                            break p;
                        }
                    }
                };
                perms.push(perm.clone());
                Box::new(move |x: &[f64]| perm.iter().map(|&i| x[i]).collect())
            }
            Generator::RotatedGaussians => {
                let angle = (k - 1) as f64 * PI / cfg.num_tasks as f64;
                let (s, c) = angle.sin_cos();
                Box::new(move |x: &[f64]| {
                    let mut y = x.to_vec();
                    for pair in y.chunks_exact_mut(2) {
                        let (a, b) = (pair[0], pair[1]);
                        pair[0] = c * a - s * b;
                        pair[1] = s * a + c * b;
                    }
                    y
                })
            }
        };

        let mut samples: Vec<(Vec<f64>, usize)> = (0..cfg.samples_per_task)
            .map(|i| {
                let label = i % cfg.num_classes;
                let x: Vec<f64> = means[label]
                    .iter()
                    .map(|&m| m + cfg.noise * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                (transform(&x), label)
            })
            .collect();
        samples.shuffle(rng);

        let mut train = Vec::with_capacity(n_train);
        let mut test = Vec::with_capacity(cfg.samples_per_task - n_train);
        for (i, (x, label)) in samples.into_iter().enumerate() {
            let (split, index) = if i < n_train {
                (&mut train, i)
            } else {
                (&mut test, i - n_train)
            };
            split.push(Example {
                features: x.into_iter().map(T::lit).collect(),
                label,
                task_id: k,
                index,
            });
        }
        tasks.push(TaskData {
            task_id: k,
            train,
            test,
        });
    }
    Ok(tasks)
}
