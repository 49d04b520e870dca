//! `wfps`: command-line front end.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use wfps_core::checkpoint::read_field;
use wfps_core::config::{parse_config, RunConfig};
use wfps_core::diagnostics::{fmt17, slice, DiagnosticsRecord};
use wfps_core::evolve::{evolve, evolve_twin, CheckpointSchedule, EvolveError, Observer, TwinObserver};
use wfps_core::langevin::{
    cumulant_check, lyapunov_estimate, simulate_ensemble, trace_unstable_manifold, CumulantTable, EnsembleSpec,
    EnsembleStats, InitialCondition, LyapunovSpec, ManifoldPolyline, ManifoldSpec,
};
use wfps_core::{Field, Mode, StepPlan, TimescaleReport};

use output::{checkpoint_name, Outputs};

#[derive(Parser)]
#[command(name = "wfps", version, about = "Wigner / Fokker-Planck phase-space simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the initial state in one mode.
    Evolve(EvolveArgs),
    /// Quantum and classical runs side by side, with field distances.
    Compare(RunArgs),
    /// Structure-termination and transition times for the configured model.
    Timescales(RunArgs),
    /// Langevin ensemble statistics, optionally with a Lyapunov estimate.
    Langevin(LangevinArgs),
    /// Unstable manifold of the period-one hyperbolic point.
    Manifold(ManifoldArgs),
    /// Extract f(q, p0) from a checkpoint file.
    Slice(SliceArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file ([model] [grid] [initial] [run] sections).
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides `run.output`.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Quantum,
    Classical,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Required when the config asks for both modes.
    #[arg(long)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
struct LangevinArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Number of trajectories.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Step size; `run.dt` by default.
    #[arg(long)]
    dt: Option<f64>,
    /// End time; `run.t_end` by default.
    #[arg(long)]
    t_end: Option<f64>,
    /// Number of evenly spaced sample times in (0, t_end].
    #[arg(long, default_value_t = 10)]
    samples: usize,
    /// Start every trajectory at the first center instead of sampling the packet.
    #[arg(long)]
    point: bool,
    /// Compare cumulants with the linearized laws at the hyperbolic point.
    #[arg(long)]
    check: bool,
    /// Tolerance of --check in standard errors.
    #[arg(long, default_value_t = 3.0)]
    n_sigma: f64,
    /// Also estimate the largest Lyapunov exponent (noise off).
    #[arg(long)]
    lyapunov: bool,
}

#[derive(Args)]
struct ManifoldArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Periods to grow each branch.
    #[arg(long, default_value_t = 3)]
    periods: usize,
    /// Largest gap between consecutive vertices.
    #[arg(long, default_value_t = 1e-2)]
    resolution: f64,
    /// Seed distance from the periodic point.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 400)]
    steps_per_period: usize,
    #[arg(long, default_value_t = 2_000_000)]
    max_vertices: usize,
}

#[derive(Args)]
struct SliceArgs {
    /// Field file written by `evolve` or `compare`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    p0: f64,
    #[arg(long, short, default_value = ".")]
    output: PathBuf,
}

struct Loaded {
    text: String,
    config: RunConfig,
    output: PathBuf,
}

fn load(args: &RunArgs) -> Result<Loaded> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let config = parse_config(&text).map_err(|e| anyhow::anyhow!("invalid config {}:\n{e}", args.config.display()))?;
    let output = args.output.clone().unwrap_or_else(|| config.run.output.clone());
    Ok(Loaded { text, config, output })
}

/// Checkpoint times from the config, always including `t_end`.
fn schedule(config: &RunConfig) -> CheckpointSchedule {
    let r = &config.run;
    let mut s = CheckpointSchedule::every(r.checkpoint_every, 0.0, r.t_end, r.diagnostics_every);
    if s.times.last().is_none_or(|&t| (t - r.t_end).abs() > 0.5 * r.dt) {
        s.times.push(r.t_end);
    }
    s
}

fn observer_error(e: anyhow::Error) -> EvolveError {
    EvolveError::Observer(format!("{e:#}"))
}

struct FileObserver<'a> {
    out: &'a mut Outputs,
    prefix: String,
    hbar: f64,
    diffusion: f64,
    rows: Vec<String>,
}

impl Observer for FileObserver<'_> {
    fn on_diagnostics(&mut self, record: &DiagnosticsRecord) -> Result<(), EvolveError> {
        self.rows.push(record.csv_row());
        Ok(())
    }

    fn on_checkpoint(&mut self, field: &Field) -> Result<(), EvolveError> {
        self.out
            .write_field(
                &checkpoint_name(&self.prefix, field.time),
                field,
                self.hbar,
                self.diffusion,
            )
            .map_err(observer_error)?;
        Ok(())
    }
}

struct TwinFileObserver<'a> {
    out: &'a mut Outputs,
    hbar: f64,
    diffusion: f64,
    quantum: Vec<String>,
    classical: Vec<String>,
    distance: Vec<String>,
}

impl TwinObserver for TwinFileObserver<'_> {
    fn on_diagnostics(&mut self, q: &DiagnosticsRecord, c: &DiagnosticsRecord) -> Result<(), EvolveError> {
        self.quantum.push(q.csv_row());
        self.classical.push(c.csv_row());
        let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
        self.distance.push(format!(
            "{},{},{},{},{}",
            fmt17(q.time),
            opt(q.l1),
            opt(q.l2),
            fmt17(q.negativity),
            fmt17(c.negativity)
        ));
        Ok(())
    }

    fn on_checkpoint(&mut self, q: &Field, c: &Field) -> Result<(), EvolveError> {
        for (prefix, f) in [("quantum", q), ("classical", c)] {
            self.out
                .write_field(&checkpoint_name(prefix, f.time), f, self.hbar, self.diffusion)
                .map_err(observer_error)?;
        }
        Ok(())
    }
}

fn run_evolve(args: &EvolveArgs) -> Result<()> {
    let l = load(&args.run)?;
    let c = &l.config;
    let mode = match (args.mode, c.run.modes.modes().as_slice()) {
        (Some(ModeArg::Quantum), _) => Mode::Quantum,
        (Some(ModeArg::Classical), _) => Mode::Classical,
        (None, [m]) => *m,
        (None, _) => bail!("the config runs both modes; pass --mode or use `compare`"),
    };
    let grid = c.grid.build();
    let initial = c.initial.build(grid.clone(), &c.model)?;
    let mut plan = StepPlan::new(grid, &c.model, mode, c.run.dt)?;
    let mut out = Outputs::create(&l.output, "evolve", Some(("config_sha256", l.text.as_bytes())))?;
    out.write("config.toml", c.to_toml().as_bytes())?;
    let mut obs = FileObserver {
        out: &mut out,
        prefix: mode.to_string(),
        hbar: c.model.hbar,
        diffusion: c.model.diffusion,
        rows: Vec::new(),
    };
    let result = evolve(&initial, c.run.t_end, &mut plan, &schedule(c), c.run.margin, &mut obs);
    let rows = std::mem::take(&mut obs.rows);
    out.write_csv(&format!("diagnostics_{mode}.csv"), DiagnosticsRecord::CSV_HEADER, &rows)?;
    let manifest = out.finish()?;
    let last = result?;
    println!("{mode} run reached t = {} ({} diagnostics rows)", last.time, rows.len());
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn run_compare(args: &RunArgs) -> Result<()> {
    let l = load(args)?;
    let c = &l.config;
    let grid = c.grid.build();
    let initial = c.initial.build(grid.clone(), &c.model)?;
    let mut pq = StepPlan::new(grid.clone(), &c.model, Mode::Quantum, c.run.dt)?;
    let mut pc = StepPlan::new(grid, &c.model, Mode::Classical, c.run.dt)?;
    let mut out = Outputs::create(&l.output, "compare", Some(("config_sha256", l.text.as_bytes())))?;
    out.write("config.toml", c.to_toml().as_bytes())?;
    let mut obs = TwinFileObserver {
        out: &mut out,
        hbar: c.model.hbar,
        diffusion: c.model.diffusion,
        quantum: Vec::new(),
        classical: Vec::new(),
        distance: Vec::new(),
    };
    let result = evolve_twin(
        &initial,
        c.run.t_end,
        &mut pq,
        &mut pc,
        &schedule(c),
        c.run.margin,
        &mut obs,
    );
    let (quantum, classical, distance) = (
        std::mem::take(&mut obs.quantum),
        std::mem::take(&mut obs.classical),
        std::mem::take(&mut obs.distance),
    );
    out.write_csv("diagnostics_quantum.csv", DiagnosticsRecord::CSV_HEADER, &quantum)?;
    out.write_csv("diagnostics_classical.csv", DiagnosticsRecord::CSV_HEADER, &classical)?;
    out.write_csv(
        "distance.csv",
        "time,l1,l2,negativity_quantum,negativity_classical",
        &distance,
    )?;
    let manifest = out.finish()?;
    let (fq, _) = result?;
    if let Some(last) = distance.last() {
        let cols: Vec<&str> = last.split(',').collect();
        println!("t = {}: L1 = {}, L2 = {}", fq.time, cols[1], cols[2]);
    }
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn run_timescales(args: &RunArgs) -> Result<()> {
    let l = load(args)?;
    let report = TimescaleReport::new(&l.config.model)?;
    println!("{report}");
    let mut out = Outputs::create(&l.output, "timescales", Some(("config_sha256", l.text.as_bytes())))?;
    out.write_csv("timescales.csv", TimescaleReport::CSV_HEADER, &[report.csv_row()])?;
    out.finish()?;
    Ok(())
}

fn cumulant_rows(table: &CumulantTable) -> Vec<String> {
    table
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                fmt17(r.time),
                r.name,
                fmt17(r.value),
                fmt17(r.target),
                fmt17(r.stderr),
                r.pass
            )
        })
        .collect()
}

fn run_langevin(args: &LangevinArgs) -> Result<()> {
    let l = load(&args.run)?;
    let c = &l.config;
    let dt = args.dt.unwrap_or(c.run.dt);
    let t_end = args.t_end.unwrap_or(c.run.t_end);
    if args.samples == 0 {
        bail!("--samples must be at least 1");
    }
    let mut spec = EnsembleSpec::new(args.n, dt, t_end, c.run.seed);
    spec.sample_times = (1..=args.samples)
        .map(|k| t_end * k as f64 / args.samples as f64)
        .collect();
    let packet = c.initial.packets().remove(0);
    spec.initial = if args.point {
        InitialCondition::Point {
            q: packet.q0,
            p: packet.p0,
        }
    } else {
        InitialCondition::Gaussian(packet)
    };
    let stats = simulate_ensemble(&c.model, &spec)?;
    let mut out = Outputs::create(&l.output, "langevin", Some(("config_sha256", l.text.as_bytes())))?;
    out.write_csv("langevin.csv", EnsembleStats::CSV_HEADER, &stats.csv_rows())?;
    println!(
        "{} trajectories, {} aborted, hyperbolic point q = {}, lambda = {}",
        stats.count, stats.aborted, stats.hyperbolic.q_eq, stats.hyperbolic.lambda_local
    );
    let mut failed = false;
    if args.check {
        let table = cumulant_check(&stats, &c.model, args.n_sigma);
        out.write_csv(
            "cumulants.csv",
            "time,name,value,target,stderr,pass",
            &cumulant_rows(&table),
        )?;
        let bad = table.rows.iter().filter(|r| !r.pass).count();
        println!(
            "cumulant check: {} of {} rows within {} standard errors{}",
            table.rows.len() - bad,
            table.rows.len(),
            args.n_sigma,
            if table.insufficient {
                " (ensemble too small)"
            } else {
                ""
            }
        );
        failed = !table.pass();
    }
    if args.lyapunov {
        let spec = LyapunovSpec {
            seed: c.run.seed,
            ..LyapunovSpec::default()
        };
        let est = lyapunov_estimate(&c.model, &spec)?;
        println!(
            "lyapunov exponent {} +- {} ({} escaped)",
            est.mean, est.stderr, est.escaped
        );
        out.write_csv(
            "lyapunov.csv",
            "mean,stderr,count,escaped",
            &[format!(
                "{},{},{},{}",
                fmt17(est.mean),
                fmt17(est.stderr),
                est.per_trajectory.len(),
                est.escaped
            )],
        )?;
    }
    let manifest = out.finish()?;
    println!("manifest: {}", manifest.display());
    if failed {
        bail!("cumulant check failed");
    }
    Ok(())
}

fn run_manifold(args: &ManifoldArgs) -> Result<()> {
    let l = load(&args.run)?;
    let model = &l.config.model;
    let spec = ManifoldSpec {
        resolution: args.resolution,
        epsilon: args.epsilon,
        steps_per_period: args.steps_per_period,
        max_vertices: args.max_vertices,
        ..ManifoldSpec::new(args.periods as f64 * model.drive_period())
    };
    let poly: ManifoldPolyline = trace_unstable_manifold(model, &spec)?;
    let fp = &poly.fixed_point;
    println!(
        "periodic point ({}, {}), multipliers {} and {}, {} vertices",
        fp.q,
        fp.p,
        fp.mu_unstable,
        fp.mu_stable,
        poly.vertices.len()
    );
    let mut out = Outputs::create(&l.output, "manifold", Some(("config_sha256", l.text.as_bytes())))?;
    out.write_csv("manifold.csv", ManifoldPolyline::CSV_HEADER, &poly.csv_rows())?;
    let manifest = out.finish()?;
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn run_slice(args: &SliceArgs) -> Result<()> {
    let bytes = fs::read(&args.checkpoint).with_context(|| format!("reading {}", args.checkpoint.display()))?;
    let cp = read_field(&args.checkpoint)?;
    let s = slice(&cp.field, args.p0)?;
    let rows: Vec<String> = s
        .points
        .iter()
        .map(|&(q, v)| format!("{},{}", fmt17(q), fmt17(v)))
        .collect();
    let stem = Path::new(&args.checkpoint)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "field".into());
    let mut out = Outputs::create(&args.output, "slice", Some(("checkpoint_sha256", &bytes)))?;
    let name = format!("{stem}_slice_p{}.csv", args.p0);
    let path = out.write_csv(&name, "q,value", &rows)?;
    out.finish()?;
    println!(
        "t = {}, p0 = {} (rows {} and {}, weight {}): {}",
        cp.field.time,
        args.p0,
        s.row,
        (s.row + 1) % cp.field.grid.np,
        s.weight,
        path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Evolve(a) => run_evolve(a),
        Command::Compare(a) => run_compare(a),
        Command::Timescales(a) => run_timescales(a),
        Command::Langevin(a) => run_langevin(a),
        Command::Manifold(a) => run_manifold(a),
        Command::Slice(a) => run_slice(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
