use clap::{Args, Parser, Subcommand};
use packflow::design::{self, DesignError};
use packflow::io::{self, IoError, MetricsError};
use packflow::sim::bench::{benchmark_solvers, BenchOptions};
use packflow::sim::{simulate, CurrentProfile, IntegratorMethod, SimError, SolverMode, Termination};
use packflow::solver::SolveError;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

/// Simulate parallel-connected battery packs, match series resistances for
/// uniform current sharing, benchmark the branch solvers and compare traces.
#[derive(Debug, Parser)]
#[command(name = "packflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a pack under a current profile and write the trace CSV.
    Simulate(SimulateArgs),
    /// Synthesize series resistances that give uniform current sharing.
    Design(DesignArgs),
    /// Time the recurrence solver against the dense solver over pack sizes.
    Bench(BenchArgs),
    /// Compare a simulated trace against a reference trace, per cell.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Pack configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Applied-current profile (CSV with columns t_s,I_A).
    #[arg(long)]
    profile: PathBuf,
    /// Output trace (CSV).
    #[arg(long)]
    out: PathBuf,
    /// Branch-current solver: analytical-no-R, analytical-with-R or dense-per-step.
    #[arg(long)]
    mode: Option<SolverMode>,
    /// Scale constant for the stabilized recurrence, in (0, 1].
    #[arg(long = "c")]
    scale_c: Option<f64>,
    /// Fixed RK4 step in seconds; replaces the configured integrator.
    #[arg(long)]
    dt: Option<f64>,
    /// Seed for sampled cell parameters; overrides the config's sampling seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DesignArgs {
    /// Pack configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Series resistance of the cell farthest from the terminals, ohms.
    /// Defaults to that cell's resistance at its initial SoC.
    #[arg(long)]
    rn: Option<f64>,
    /// Output report (JSON) with the schedule and matching residuals.
    #[arg(long)]
    out: PathBuf,
    /// Largest buildable branch resistance, ohms; larger entries trigger a warning.
    #[arg(long)]
    r_max: Option<f64>,
    /// Profile used to verify the matched pack by simulation (CSV).
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Base pack configuration (JSON); its cells are repeated to reach each size.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated pack sizes, e.g. 16,32,64.
    #[arg(long, value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    /// Timed runs per size and mode.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Output benchmark table (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Per-cell current profile (CSV); the pack current is n times this.
    /// Defaults to a constant 1C charge of the first cell.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Simulated seconds per timed run.
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Reference trace (CSV, trace schema), e.g. measured data.
    #[arg(long)]
    reference: PathBuf,
    /// Simulated trace (CSV, trace schema).
    #[arg(long)]
    simulated: PathBuf,
    /// Output table (CSV: cell,mse_A2,max_abs_error_A).
    #[arg(long)]
    out: PathBuf,
    /// Interpolate the simulated trace onto the reference time grid.
    #[arg(long)]
    resample: bool,
}

/// Error tagged with the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const EXIT_INVALID: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

impl Failure {
    fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INVALID,
            error: error.into(),
        }
    }

    fn numerical(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_NUMERICAL,
            error: error.into(),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Self::invalid(e)
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Self::invalid(e)
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) | SimError::ProfileGap { .. } => Self::invalid(e),
            SimError::Solve(SolveError::InvalidScale(_) | SolveError::DimensionMismatch(_)) => Self::invalid(e),
            _ => Self::numerical(e),
        }
    }
}

impl From<DesignError> for Failure {
    fn from(e: DesignError) -> Self {
        match e {
            DesignError::Sim(inner) => inner.into(),
            other => Self::invalid(other),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Design(args) => cmd_design(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error}");
            ExitCode::from(code)
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    let mut config = io::load_config_with_seed(&args.config, args.seed)?;
    let profile = io::load_profile(&args.profile)?;
    if let Some(mode) = args.mode {
        config.solver_mode = mode;
    }
    if let Some(c) = args.scale_c {
        config.scale_c = c;
    }
    if let Some(dt) = args.dt {
        config.integrator.method = IntegratorMethod::Rk4 { dt };
    }

    let start = Instant::now();
    let trace = simulate(&config, &profile)?;
    let wall = start.elapsed();
    io::write_trace(&trace, &args.out)?;

    println!("cells:            {}", config.n());
    println!("solver mode:      {}", config.solver_mode);
    println!("samples written:  {} ({})", trace.len(), args.out.display());
    println!("steps:            {}", trace.steps);
    println!("final SoC spread: {:.6e}", trace.final_soc_spread());
    println!("max residual:     {:.3e} A", trace.max_residual());
    println!("wall time:        {:.3} s", wall.as_secs_f64());
    println!("termination:      {}", trace.termination);
    if let Termination::SocOutOfBounds { .. } = trace.termination {
        return Err(Failure::numerical(anyhow::anyhow!(
            "SoC bounds violated: {} (partial trace written)",
            trace.termination
        )));
    }
    Ok(())
}

fn cmd_design(args: DesignArgs) -> CmdResult {
    let config = io::load_config(&args.config)?;
    let (capacities, interconnect) = design::pack_layout(&config);
    let n = config.n();
    let current: Vec<f64> = config
        .cells
        .iter()
        .zip(&config.initial_states)
        .map(|(cell, state)| cell.series_resistance_at(state.soc))
        .collect();
    let rn = args.rn.unwrap_or(current[n - 1]);
    let residuals_before = design::qr_residuals(&capacities, &current, &interconnect)?;
    let schedule = design::synthesize_uniform_r(&capacities, &interconnect, rn)?;
    let residuals_after = design::qr_residuals(&capacities, &schedule, &interconnect)?;

    let mut warnings = Vec::new();
    if let Some(r_max) = args.r_max {
        if let Some(w) = design::realizability_warning(&schedule, r_max) {
            log::warn!("{w}");
            eprintln!("warning: {w}");
            warnings.push(w);
        }
    }

    let verification = match &args.profile {
        Some(path) => {
            let profile = io::load_profile(path)?;
            let matched = design::apply_schedule(&config, &schedule)?;
            let report = design::verify_uniform_sharing(&matched, &profile)?;
            println!("max current deviation: {:.3e}", report.max_current_deviation);
            println!("max rate spread:       {:.3e}", report.max_rate_spread);
            json!({
                "profile": path.display().to_string(),
                "max_current_deviation": report.max_current_deviation,
                "max_rate_spread": report.max_rate_spread,
                "termination": report.trace.termination.to_string(),
            })
        }
        None => serde_json::Value::Null,
    };

    let report = json!({
        "n": n,
        "terminal_resistance_ohm": rn,
        "capacities_As": capacities,
        "interconnect_R": interconnect,
        "schedule_ohm": schedule,
        "residuals_before": residuals_before,
        "residuals_after": residuals_after,
        "warnings": warnings,
        "verification": verification,
    });
    write_json(&report, &args.out)?;
    let worst = residuals_after.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    println!("schedule written to {} (max residual {worst:.3e} V·s)", args.out.display());
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    let base = io::load_config(&args.config)?;
    let profile = match &args.profile {
        Some(path) => io::load_profile(path)?,
        None => CurrentProfile::constant(base.cells[0].capacity_ah()),
    };
    let threads = threads_from_env()?;
    let options = BenchOptions {
        t_end: args.t_end,
        threads,
        ..BenchOptions::default()
    };
    let table = benchmark_solvers(&base, &args.n_list, args.repeats, &profile, &options)?;
    io::write_benchmark(&table, &args.out)?;
    println!("{:>6} {:>18} {:>12} {:>14}", "n", "mode", "median_s", "per_solve_us");
    for r in &table.records {
        println!("{:>6} {:>18} {:>12.4e} {:>14.3}", r.n, r.mode, r.median_s, r.per_solve_us);
    }
    for e in &table.exponents {
        println!(
            "scaling exponent {:>18}: per solve {:.2}, full run {:.2}",
            e.mode, e.per_solve, e.full_run
        );
    }
    println!("max cross-mode difference: {:.3e}", table.max_gate_difference);
    Ok(())
}

fn threads_from_env() -> Result<Option<usize>, Failure> {
    match std::env::var("PACKFLOW_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .map(Some)
            .ok_or_else(|| Failure::invalid(anyhow::anyhow!("PACKFLOW_THREADS must be a positive integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

fn cmd_validate(args: ValidateArgs) -> CmdResult {
    let reference = io::read_trace(&args.reference)?;
    let simulated = io::read_trace(&args.simulated)?;
    let rows = io::compare_traces(&reference, &simulated, args.resample)?;
    io::write_comparison(&rows, &args.out)?;
    println!("{:>5} {:>14} {:>16}", "cell", "mse_A2", "max_abs_error_A");
    for r in &rows {
        println!("{:>5} {:>14.6e} {:>16.6e}", r.cell, r.mse, r.max_abs_error);
    }
    Ok(())
}

fn write_json(value: &serde_json::Value, path: &Path) -> CmdResult {
    let text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    std::fs::write(path, text + "\n")
        .map_err(|e| Failure::invalid(anyhow::anyhow!("cannot write {}: {e}", path.display())))
}
