use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use curvereplay::metrics::{format_float, mean_and_sample_sd};
use curvereplay::trainer::write_step_log;
use curvereplay::{backward_transfer, overall_performance, run_sequence, simulate, Matrix, RunMode, ScheduleKind};

use crate::config::RunConfig;

/// Result of one `(mode, seed)` training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub mode: RunMode,
    pub seed: u64,
    pub op: f64,
    pub bwt: f64,
    pub replays_per_task: Vec<usize>,
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn replay_events(&self) -> usize {
        self.replays_per_task.iter().sum()
    }
}

/// Directory holding the artifacts of one run.
pub fn run_dir(out: &Path, mode: RunMode, seed: u64) -> PathBuf {
    out.join(mode.name()).join(format!("seed_{seed}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Train one seed and write `steps.csv`, `matrix.csv` and `memory.csv` under [`run_dir`].
pub fn run_one(cfg: &RunConfig, mode: RunMode, seed: u64) -> Result<RunSummary> {
    let mut train = cfg.train_config(seed)?;
    train.mode = mode;
    let start = Instant::now();
    let out = run_sequence(&train).with_context(|| format!("{mode} seed {seed}"))?;
    let wall_time_s = start.elapsed().as_secs_f64();

    let dir = run_dir(&cfg.out_dir, mode, seed);
    let mut w = create(&dir.join("steps.csv"))?;
    write_step_log(&out.log, &mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("matrix.csv"))?;
    out.matrix.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("memory.csv"))?;
    out.buffer.write_csv(&mut w)?;
    w.flush()?;

    let summary = RunSummary {
        mode,
        seed,
        op: overall_performance(&out.matrix)?,
        bwt: backward_transfer(&out.matrix).unwrap_or(f64::NAN),
        replays_per_task: out.tasks.iter().map(|t| t.replay_events()).collect(),
        wall_time_s,
    };
    log::info!(
        "{mode} seed {seed}: OP {:.4} BWT {:.4} replay events {} ({wall_time_s:.2}s)",
        summary.op,
        summary.bwt,
        summary.replay_events()
    );
    Ok(summary)
}

/// Per-seed rows followed by `mean` and `sd` rows.
pub fn write_summary<W: Write>(runs: &[RunSummary], mut w: W) -> Result<()> {
    let k = runs.first().map_or(0, |r| r.replays_per_task.len());
    let mut header = String::from("seed,op,bwt,replay_events");
    for t in 1..=k {
        header.push_str(&format!(",replay_events_task_{t}"));
    }
    writeln!(w, "{header}")?;
    for r in runs {
        let per_task: String = r.replays_per_task.iter().map(|n| format!(",{n}")).collect();
        writeln!(
            w,
            "{},{},{},{}{per_task}",
            r.seed,
            format_float(r.op),
            format_float(r.bwt),
            r.replay_events()
        )?;
    }
    let col = |f: &dyn Fn(&RunSummary) -> f64| mean_and_sample_sd(&runs.iter().map(f).collect::<Vec<_>>());
    let mut stats = vec![col(&|r| r.op), col(&|r| r.bwt), col(&|r| r.replay_events() as f64)];
    for t in 0..k {
        stats.push(col(&|r| r.replays_per_task[t] as f64));
    }
    for (label, pick) in [("mean", 0), ("sd", 1)] {
        let cells: Vec<String> = stats
            .iter()
            .map(|s| format_float(if pick == 0 { s.0 } else { s.1 }))
            .collect();
        writeln!(w, "{label},{}", cells.join(","))?;
    }
    Ok(())
}

/// `run`: every configured seed in sequence, then `<out>/<mode>/summary.csv`.
pub fn cmd_run(cfg: &RunConfig) -> Result<Vec<RunSummary>> {
    let mode = cfg.run_mode()?;
    let runs = cfg
        .seeds
        .iter()
        .map(|&s| run_one(cfg, mode, s))
        .collect::<Result<Vec<_>>>()?;
    let path = cfg.out_dir.join(mode.name()).join("summary.csv");
    let mut w = create(&path)?;
    write_summary(&runs, &mut w)?;
    w.flush()?;
    Ok(runs)
}

/// Parse a `step,delta` trace. Errors carry 1-based file line numbers.
pub fn read_trace<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers().context("line 1: reading header")?.clone();
    if header.iter().collect::<Vec<_>>() != ["step", "delta"] {
        bail!(
            "line 1: expected header 'step,delta', found '{}'",
            header.iter().collect::<Vec<_>>().join(",")
        );
    }
    let mut trace = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            anyhow::anyhow!("line {line}: {e}")
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            bail!("line {line}: expected 2 fields, found {}", rec.len());
        }
        rec[0]
            .parse::<u64>()
            .map_err(|_| anyhow::anyhow!("line {line}: bad step '{}'", &rec[0]))?;
        let d: f64 = rec[1]
            .parse()
            .map_err(|_| anyhow::anyhow!("line {line}: bad delta '{}'", &rec[1]))?;
        if !(d.is_finite() && d >= 0.0) {
            bail!("line {line}: delta must be finite and non-negative, got {d}");
        }
        trace.push(d);
    }
    Ok(trace)
}

/// `simulate-schedule`: the clock and schedule alone, emitting `step,delta,tau,mu,r,fired`.
pub fn cmd_simulate_schedule<R: Read, W: Write>(
    cfg: &RunConfig,
    kind: ScheduleKind,
    task_index: usize,
    trace: R,
    mut out: W,
) -> Result<usize> {
    let trace = read_trace(trace)?;
    let mode = kind.with_params(cfg.fixed_interval_period, cfg.steps_per_day)?;
    let rows = simulate(&trace, cfg.clock_config(), cfg.human_schedule()?, mode, task_index)?;
    writeln!(out, "step,delta,tau,mu,r,fired")?;
    for r in &rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.step,
            format_float(r.delta),
            format_float(r.tau),
            format_float(r.mu),
            r.ratio.map(format_float).unwrap_or_default(),
            u8::from(r.fired)
        )?;
    }
    Ok(rows.iter().filter(|r| r.fired).count())
}

/// `metrics`: OP and BWT of a matrix CSV.
pub fn cmd_metrics(path: &Path) -> Result<(f64, f64)> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let m = Matrix::read_csv(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?;
    let op = overall_performance(&m)?;
    let bwt = backward_transfer(&m)?;
    Ok((op, bwt))
}

pub const COMPARE_HEADER: &str = "mode,seed,op,op_sd,bwt,bwt_sd,replay_events,replay_events_sd,wall_time_s,status";

/// One cell of the comparison grid.
#[derive(Debug)]
pub struct Cell {
    pub mode: RunMode,
    pub seed: u64,
    pub result: Result<RunSummary>,
}

/// `compare`: every `(mode, seed)` cell in parallel, then one merged table
/// at `<out>/compare.csv`. Failed cells stay in the table.
pub fn cmd_compare(cfg: &RunConfig, modes: &[RunMode]) -> Result<Vec<Cell>> {
    if modes.is_empty() {
        bail!("compare needs at least one mode");
    }
    let grid: Vec<(RunMode, u64)> = modes
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let cells: Vec<Cell> = grid
        .par_iter()
        .map(|&(mode, seed)| Cell {
            mode,
            seed,
            result: run_one(cfg, mode, seed),
        })
        .collect();

    let mut w = create(&cfg.out_dir.join("compare.csv"))?;
    write_compare(&cells, modes, &mut w)?;
    w.flush()?;
    Ok(cells)
}

pub fn write_compare<W: Write>(cells: &[Cell], modes: &[RunMode], mut w: W) -> Result<()> {
    let mut csv = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(&mut w);
    csv.write_record(COMPARE_HEADER.split(','))?;
    for c in cells {
        match &c.result {
            Ok(r) => csv.write_record([
                c.mode.name().to_string(),
                c.seed.to_string(),
                format_float(r.op),
                String::new(),
                format_float(r.bwt),
                String::new(),
                r.replay_events().to_string(),
                String::new(),
                format_float(r.wall_time_s),
                "ok".to_string(),
            ])?,
            Err(e) => {
                let mut rec = vec![c.mode.name().to_string(), c.seed.to_string()];
                rec.extend(std::iter::repeat_n(String::new(), 7));
                rec.push(format!("failed: {e:#}"));
                csv.write_record(rec)?
            }
        }
    }
    for &mode in modes {
        let ok: Vec<&RunSummary> = cells
            .iter()
            .filter(|c| c.mode == mode)
            .filter_map(|c| c.result.as_ref().ok())
            .collect();
        let total = cells.iter().filter(|c| c.mode == mode).count();
        let stat = |f: fn(&RunSummary) -> f64| mean_and_sample_sd(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
        let (op, op_sd) = stat(|r| r.op);
        let (bwt, bwt_sd) = stat(|r| r.bwt);
        let (ev, ev_sd) = stat(|r| r.replay_events() as f64);
        let (wt, _) = stat(|r| r.wall_time_s);
        csv.write_record([
            mode.name().to_string(),
            "aggregate".to_string(),
            format_float(op),
            format_float(op_sd),
            format_float(bwt),
            format_float(bwt_sd),
            format_float(ev),
            format_float(ev_sd),
            format_float(wt),
            format!("{}/{total} ok", ok.len()),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
