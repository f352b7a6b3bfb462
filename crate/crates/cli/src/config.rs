//! Flat TOML run configuration and `--set` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use curvereplay::memory::Capacity;
use curvereplay::schedule::EBBINGHAUS_DAYS;
use curvereplay::trainer::{Generator, MemorySampling, StreamConfig};
use curvereplay::{ClockConfig, Config, HumanSchedule, ModulatorConfig, RunMode};

/// Integer capacities are per-task counts, floats are fractions of the task's data.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MemoryCapacity {
    Count(i64),
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: String,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,

    pub epochs_per_task: usize,
    pub replay_epochs: usize,
    pub consolidation_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub hidden: Vec<usize>,

    pub warmup_len: usize,
    pub ema_coeff: f64,
    pub epsilon: f64,
    pub include_warmup_in_tau: bool,

    pub beta_base: f64,
    pub gamma: f64,
    pub g_min: f64,
    pub g_max: f64,

    pub days: Vec<f64>,
    pub fixed_interval_period: usize,
    pub steps_per_day: usize,

    pub memory_capacity: MemoryCapacity,
    pub memory_sampling: String,

    pub num_tasks: usize,
    pub samples_per_task: usize,
    pub num_classes: usize,
    pub input_dim: usize,
    pub generator: String,
    pub test_fraction: f64,
    pub class_spread: f64,
    pub noise: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = Config::default();
        let s = &t.stream;
        Self {
            mode: t.mode.name().to_string(),
            out_dir: PathBuf::from("runs"),
            seeds: vec![0],
            epochs_per_task: t.epochs_per_task,
            replay_epochs: t.replay_epochs,
            consolidation_epochs: t.consolidation_epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            hidden: t.hidden.clone(),
            warmup_len: t.clock.warmup_len,
            ema_coeff: t.clock.ema_coeff,
            epsilon: t.clock.epsilon,
            include_warmup_in_tau: t.clock.include_warmup_in_tau,
            beta_base: t.modulator.beta_base,
            gamma: t.modulator.gamma,
            g_min: t.modulator.g_min,
            g_max: t.modulator.g_max,
            days: EBBINGHAUS_DAYS.to_vec(),
            fixed_interval_period: t.fixed_interval_period,
            steps_per_day: t.steps_per_day,
            memory_capacity: MemoryCapacity::Fraction(0.02),
            memory_sampling: "pooled".to_string(),
            num_tasks: s.num_tasks,
            samples_per_task: s.samples_per_task,
            num_classes: s.num_classes,
            input_dim: s.input_dim,
            generator: s.generator.name().to_string(),
            test_fraction: s.test_fraction,
            class_spread: s.class_spread,
            noise: s.noise,
        }
    }
}

impl RunConfig {
    /// Read `path` (or start from defaults), apply `key=value` overrides, then validate.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (key, value) = parse_override(o)?;
            table.insert(key, value);
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| anyhow!("invalid config: {e}"))?;
        cfg.train_config(cfg.seeds.first().copied().unwrap_or(0))?;
        if cfg.seeds.is_empty() {
            bail!("invalid config: seeds must not be empty");
        }
        Ok(cfg)
    }

    pub fn run_mode(&self) -> Result<RunMode> {
        self.mode.parse().map_err(|e| anyhow!("invalid config: mode: {e}"))
    }

    pub fn human_schedule(&self) -> Result<HumanSchedule<f64>> {
        HumanSchedule::new(self.days.clone()).map_err(|e| anyhow!("invalid config: days: {e}"))
    }

    pub fn clock_config(&self) -> ClockConfig<f64> {
        ClockConfig {
            warmup_len: self.warmup_len,
            ema_coeff: self.ema_coeff,
            epsilon: self.epsilon,
            include_warmup_in_tau: self.include_warmup_in_tau,
        }
    }

    /// The core training configuration for one seed.
    pub fn train_config(&self, seed: u64) -> Result<Config> {
        let memory = match self.memory_capacity {
            MemoryCapacity::Count(n) if n > 0 => Capacity::Count(n as usize),
            MemoryCapacity::Count(n) => bail!("invalid config: memory_capacity: count must be positive, got {n}"),
            MemoryCapacity::Fraction(f) => Capacity::Fraction(f),
        };
        let memory_sampling: MemorySampling = self
            .memory_sampling
            .parse()
            .map_err(|e| anyhow!("invalid config: memory_sampling: {e}"))?;
        let generator: Generator = self
            .generator
            .parse()
            .map_err(|e| anyhow!("invalid config: generator: {e}"))?;
        let cfg = Config {
            mode: self.run_mode()?,
            epochs_per_task: self.epochs_per_task,
            replay_epochs: self.replay_epochs,
            consolidation_epochs: self.consolidation_epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            hidden: self.hidden.clone(),
            clock: self.clock_config(),
            modulator: ModulatorConfig {
                beta_base: self.beta_base,
                gamma: self.gamma,
                g_min: self.g_min,
                g_max: self.g_max,
            },
            days: self.human_schedule()?,
            fixed_interval_period: self.fixed_interval_period,
            steps_per_day: self.steps_per_day,
            memory,
            memory_sampling,
            stream: StreamConfig {
                num_tasks: self.num_tasks,
                samples_per_task: self.samples_per_task,
                num_classes: self.num_classes,
                input_dim: self.input_dim,
                generator,
                test_fraction: self.test_fraction,
                class_spread: self.class_spread,
                noise: self.noise,
            },
            seed,
        };
        cfg.validate().map_err(|e| anyhow!("invalid config: {e}"))?;
        Ok(cfg)
    }
}

/// `key=value` with the value read as a TOML literal, falling back to a bare string.
pub fn parse_override(s: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("override '{s}' is not of the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        bail!("override '{s}' has an empty key");
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_core() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        let t = cfg.train_config(0).unwrap();
        assert_eq!(t, Config::default());
    }

    #[test]
    fn overrides_are_typed() {
        let cfg = RunConfig::load(
            None,
            &[
                "mode=end_only".into(),
                "hidden=[4, 4]".into(),
                "memory_capacity=12".into(),
                "learning_rate=0.1".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.mode, "end_only");
        assert_eq!(cfg.hidden, vec![4, 4]);
        assert_eq!(cfg.memory_capacity, MemoryCapacity::Count(12));
        assert_eq!(cfg.train_config(1).unwrap().memory, Capacity::Count(12));

        let frac = RunConfig::load(None, &["memory_capacity=0.1".into()]).unwrap();
        assert_eq!(frac.train_config(1).unwrap().memory, Capacity::Fraction(0.1));
    }

    #[test]
    fn field_level_errors() {
        let err = RunConfig::load(None, &["bogus=1".into()]).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        let err = RunConfig::load(None, &["mode=ewc".into()]).unwrap_err().to_string();
        assert!(err.contains("mode"), "{err}");
        let err = RunConfig::load(None, &["batch_size=0".into()]).unwrap_err().to_string();
        assert!(err.contains("batch_size"), "{err}");
        assert!(RunConfig::load(None, &["seeds=[]".into()]).is_err());
        assert!(parse_override("novalue").is_err());
    }
}
