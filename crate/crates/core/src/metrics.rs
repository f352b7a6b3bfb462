//! Continual-learning metrics over the task-by-task accuracy matrix.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Accuracy `a[i][j]` on task `i` after training on task `j`, for `1 <= i <= j <= K`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMatrix<T> {
    k: usize,
    entries: Vec<Option<T>>,
}

impl<T: Scalar> EvalMatrix<T> {
    pub fn new(num_tasks: usize) -> Result<Self> {
        if num_tasks == 0 {
            return Err(Error::config("evaluation matrix needs at least one task"));
        }
        Ok(Self {
            k: num_tasks,
            entries: vec![None; num_tasks * num_tasks],
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.k
    }

    fn slot(&self, i: usize, j: usize) -> Result<usize> {
        if i == 0 || j == 0 || i > j || j > self.k {
            return Err(Error::state(format!(
                "entry ({i},{j}) outside 1 <= i <= j <= {}",
                self.k
            )));
        }
        Ok((i - 1) * self.k + (j - 1))
    }

    /// Set `a[i][j]` (1-based).
    pub fn set(&mut self, i: usize, j: usize, accuracy: T) -> Result<()> {
        if !(accuracy.is_finite() && accuracy >= T::zero() && accuracy <= T::one()) {
            return Err(Error::numeric(format!("accuracy {accuracy} is outside [0, 1]")));
        }
        let s = self.slot(i, j)?;
        self.entries[s] = Some(accuracy);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<T> {
        self.slot(i, j).ok().and_then(|s| self.entries[s])
    }

    fn require(&self, i: usize, j: usize) -> Result<T> {
        self.get(i, j)
            .ok_or_else(|| Error::state(format!("missing entry ({i},{j})")))
    }

    /// Defined entries as `(i, j, accuracy)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (1..=self.k).flat_map(move |i| (i..=self.k).filter_map(move |j| self.get(i, j).map(|a| (i, j, a))))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,j,accuracy")?;
        for (i, j, a) in self.entries() {
            writeln!(w, "{i},{j},{}", format_float(a.as_f64()))?;
        }
        Ok(())
    }

    /// Parse the `i,j,accuracy` format. The task count is the largest index seen.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        let mut saw_header = false;
        for (n, line) in r.lines().enumerate() {
            let line_no = n + 1;
            let line = line.map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if !saw_header {
                if line != "i,j,accuracy" {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected header 'i,j,accuracy', found '{line}'"),
                    });
                }
                saw_header = true;
                continue;
            }
            let bad = |message: String| Error::Parse { line: line_no, message };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            let i: usize = fields[0]
                .parse()
                .map_err(|_| bad(format!("bad row index '{}'", fields[0])))?;
            let j: usize = fields[1]
                .parse()
                .map_err(|_| bad(format!("bad column index '{}'", fields[1])))?;
            let a: f64 = fields[2]
                .parse()
                .map_err(|_| bad(format!("bad accuracy '{}'", fields[2])))?;
            rows.push((line_no, i, j, a));
        }
        if !saw_header {
            return Err(Error::Parse {
                line: 1,
                message: "empty matrix file".into(),
            });
        }
        let k = rows.iter().map(|&(_, i, j, _)| i.max(j)).max().unwrap_or(0);
        let mut m = Self::new(k).map_err(|_| Error::Parse {
            line: 2,
            message: "no entries".into(),
        })?;
        for (line, i, j, a) in rows {
            m.set(i, j, T::lit(a)).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        }
        Ok(m)
    }
}

/// Overall performance: mean accuracy over all tasks after the last one.
pub fn overall_performance<T: Scalar>(m: &EvalMatrix<T>) -> Result<T> {
    let k = m.num_tasks();
    let mut sum = T::zero();
    for i in 1..=k {
        sum = sum + m.require(i, k)?;
    }
    Ok(sum / T::from_count(k))
}

/// Backward transfer: mean of `a[i][K] - a[i][i]` over the first `K - 1` tasks.
pub fn backward_transfer<T: Scalar>(m: &EvalMatrix<T>) -> Result<T> {
    let k = m.num_tasks();
    if k < 2 {
        return Err(Error::UndefinedMetric(
            "backward transfer needs at least two tasks".into(),
        ));
    }
    let mut sum = T::zero();
    for i in 1..k {
        sum = sum + (m.require(i, k)? - m.require(i, i)?);
    }
    Ok(sum / T::from_count(k - 1))
}

/// Mean and sample standard deviation (`n - 1` denominator). The deviation is
/// NaN for fewer than two values.
pub fn mean_and_sample_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Lossless 17-significant-digit rendering used in every CSV artifact.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}
