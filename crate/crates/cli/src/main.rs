use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use curvereplay::{RunMode, ScheduleKind};
use curvereplay_cli::commands::{cmd_compare, cmd_metrics, cmd_run, cmd_simulate_schedule};
use curvereplay_cli::RunConfig;

#[derive(Parser)]
#[command(
    name = "curvereplay",
    version,
    about = "Forgetting-curve scheduled replay experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat TOML run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set learning_rate=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Replaces the configured seed list.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref(), &self.set)?;
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write step logs, matrices and a summary.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        mode: Option<RunMode>,
    },
    /// Replay a `step,delta` trace through the clock and schedule alone.
    SimulateSchedule {
        /// Trace CSV; `-` reads stdin.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, default_value = "forgetting_curve")]
        schedule: ScheduleKind,
        /// Task position; schedules never fire on the first task.
        #[arg(long, default_value_t = 2)]
        task_index: usize,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print OP and BWT of an `i,j,accuracy` matrix CSV.
    Metrics { matrix: PathBuf },
    /// Run a mode x seed grid in parallel and write `compare.csv`.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Modes to compare (repeatable or comma separated); defaults to all.
        #[arg(long, value_delimiter = ',')]
        mode: Vec<RunMode>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Run { cfg, mode } => {
            let mut cfg = cfg.load()?;
            if let Some(m) = mode {
                cfg.mode = m.name().to_string();
            }
            let runs = cmd_run(&cfg)?;
            for r in &runs {
                let per_task: Vec<String> = r.replays_per_task.iter().map(|n| n.to_string()).collect();
                println!(
                    "{} seed {}: OP {:.4} BWT {:.4} replay events per task [{}]",
                    r.mode,
                    r.seed,
                    r.op,
                    r.bwt,
                    per_task.join(", ")
                );
            }
            println!("summary: {}", cfg.out_dir.join(&cfg.mode).join("summary.csv").display());
            Ok(true)
        }
        Command::SimulateSchedule {
            trace,
            config,
            set,
            schedule,
            task_index,
            out,
        } => {
            let cfg = RunConfig::load(config.as_deref(), &set)?;
            let input: Box<dyn io::Read> = if trace.as_os_str() == "-" {
                Box::new(io::stdin().lock())
            } else {
                Box::new(File::open(&trace).with_context(|| format!("opening {}", trace.display()))?)
            };
            let output: Box<dyn Write> = match &out {
                Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
                None => Box::new(io::stdout().lock()),
            };
            let mut output = BufWriter::new(output);
            let fired = cmd_simulate_schedule(&cfg, schedule, task_index, input, &mut output)?;
            output.flush()?;
            log::info!("{fired} replay events");
            Ok(true)
        }
        Command::Metrics { matrix } => {
            let (op, bwt) = cmd_metrics(&matrix)?;
            println!("OP: {op:.4}");
            println!("BWT: {bwt:.4}");
            Ok(true)
        }
        Command::Compare { cfg, mode } => {
            let cfg = cfg.load()?;
            let modes = if mode.is_empty() { RunMode::ALL.to_vec() } else { mode };
            let cells = cmd_compare(&cfg, &modes)?;
            let mut ok = true;
            for c in &cells {
                if let Err(e) = &c.result {
                    eprintln!("{} seed {} failed: {e:#}", c.mode, c.seed);
                    ok = false;
                }
            }
            println!("table: {}", cfg.out_dir.join("compare.csv").display());
            Ok(ok)
        }
    }
}
