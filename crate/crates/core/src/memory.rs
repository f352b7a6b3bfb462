//! Per-task exemplar memory.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};

/// One labelled example of a task.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub features: Vec<T>,
    pub label: usize,
    /// 1-based task the example belongs to.
    pub task_id: usize,
    /// Position of the example in its task's training split.
    pub index: usize,
}

/// Per-task capacity: an absolute count or a fraction of the task's data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Capacity {
    Count(usize),
    /// Resolved as `floor(fraction * len)`, at least 1.
    Fraction(f64),
}

impl Capacity {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Capacity::Count(0) => Err(Error::config("memory capacity must be positive")),
            Capacity::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                Err(Error::config(format!("memory fraction must lie in (0, 1], got {f}")))
            }
            _ => Ok(()),
        }
    }

    pub fn resolve(&self, dataset_len: usize) -> usize {
        let cap = match *self {
            Capacity::Count(n) => n,
            Capacity::Fraction(f) => ((f * dataset_len as f64).floor() as usize).max(1),
        };
        cap.min(dataset_len)
    }
}

impl Default for Capacity {
    fn default() -> Self {
        Capacity::Fraction(0.02)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer<T> {
    per_task: BTreeMap<usize, Vec<Example<T>>>,
    capacity: Capacity,
}

impl<T: Clone> ReplayBuffer<T> {
    pub fn new(capacity: Capacity) -> Result<Self> {
        capacity.validate()?;
        Ok(Self {
            per_task: BTreeMap::new(),
            capacity,
        })
    }

    pub fn capacity(&self) -> Capacity {
        self.capacity
    }

    /// Store `min(capacity, |dataset|)` examples of `task_id`, drawn uniformly
    /// without replacement. Returns `true` if an existing entry for the task
    /// was overwritten.
    pub fn update<R: Rng + ?Sized>(&mut self, task_id: usize, dataset: &[Example<T>], rng: &mut R) -> Result<bool> {
        if dataset.is_empty() {
            return Err(Error::state(format!("task {task_id} has no examples to store")));
        }
        if let Some(bad) = dataset.iter().find(|e| e.task_id != task_id) {
            return Err(Error::state(format!(
                "example from task {} offered to the store of task {task_id}",
                bad.task_id
            )));
        }
        let keep = self.capacity.resolve(dataset.len());
        let mut picked = index::sample(rng, dataset.len(), keep).into_vec();
        picked.sort_unstable();
        let stored: Vec<Example<T>> = picked.into_iter().map(|i| dataset[i].clone()).collect();
        let replaced = self.per_task.insert(task_id, stored).is_some();
        if replaced {
            log::warn!("memory for task {task_id} was overwritten; each task should be stored once");
        }
        Ok(replaced)
    }

    pub fn task(&self, task_id: usize) -> Option<&[Example<T>]> {
        self.per_task.get(&task_id).map(Vec::as_slice)
    }

    pub fn task_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_task.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.per_task.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All stored examples, ordered by task then by stored position.
    pub fn iter(&self) -> impl Iterator<Item = &Example<T>> + '_ {
        self.per_task.values().flatten()
    }

    fn nth(&self, mut i: usize) -> &Example<T> {
        for v in self.per_task.values() {
            if i < v.len() {
                return &v[i];
            }
            i -= v.len();
        }
        unreachable!("index within buffer length")
    }

    /// Draw `batch_size` examples uniformly with replacement over the pooled memory.
    pub fn sample_batch<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<&Example<T>>> {
        let n = self.len();
        if n == 0 {
            return Err(Error::state("cannot sample from an empty memory buffer"));
        }
        Ok((0..batch_size).map(|_| self.nth(rng.random_range(0..n))).collect())
    }

    /// Task-balanced variant: pick a stored task uniformly, then an example of it.
    pub fn sample_batch_balanced<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<&Example<T>>> {
        let tasks: Vec<&Vec<Example<T>>> = self.per_task.values().filter(|v| !v.is_empty()).collect();
        if tasks.is_empty() {
            return Err(Error::state("cannot sample from an empty memory buffer"));
        }
        Ok((0..batch_size)
            .map(|_| {
                let t = tasks[rng.random_range(0..tasks.len())];
                &t[rng.random_range(0..t.len())]
            })
            .collect())
    }

    /// One shuffled pass over every stored example, chunked into batches.
    pub fn epoch_batches<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<Vec<&Example<T>>>> {
        if batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        let mut all: Vec<&Example<T>> = self.iter().collect();
        if all.is_empty() {
            return Err(Error::state("cannot iterate an empty memory buffer"));
        }
        all.shuffle(rng);
        Ok(all.chunks(batch_size).map(<[_]>::to_vec).collect())
    }

    /// Audit dump: `task_id,example_index,label`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "task_id,example_index,label")?;
        for e in self.iter() {
            writeln!(w, "{},{},{}", e.task_id, e.index, e.label)?;
        }
        Ok(())
    }
}
