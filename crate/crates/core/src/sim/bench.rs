//! Timing comparison of the recurrence solver against a dense solve at
//! every right-hand-side evaluation.

use super::{simulate, CurrentProfile, PackConfig, SimError, SolverMode};
use crate::solver::{dense_branch_currents, solve_with_interconnect, PackResistances};
use crate::cell::state_voltage;
use rayon::prelude::*;
use serde::Serialize;
use std::hint::black_box;
use std::time::{Duration, Instant};

/// Relative agreement required between modes before anything is timed.
pub const GATE_TOLERANCE: f64 = 1e-8;

/// Busbar resistance used when the base config has ideal busbars.
pub const DEFAULT_BENCH_INTERCONNECT: f64 = 1e-5;

const TIMED_MODES: [SolverMode; 2] = [SolverMode::AnalyticalWithR, SolverMode::DensePerStep];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    /// Simulated horizon of each timed run, seconds.
    pub t_end: f64,
    /// Minimum wall time spent looping a single branch solve.
    pub min_solve_time: Duration,
    /// Worker cap for the correctness gates; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            t_end: 10.0,
            min_solve_time: Duration::from_millis(20),
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub n: usize,
    pub mode: String,
    pub median_s: f64,
    pub mean_s: f64,
    pub per_solve_us: f64,
}

/// Least-squares slope of `ln t` against `ln n` for one mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingExponent {
    pub mode: String,
    pub per_solve: f64,
    pub full_run: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkTable {
    pub records: Vec<BenchRecord>,
    pub exponents: Vec<ScalingExponent>,
    /// Worst relative cross-mode difference seen by the gates.
    pub max_gate_difference: f64,
}

/// Builds an `n`-cell pack by repeating the base config's cells, initial
/// states and busbar resistances cyclically.
pub fn replicate_pack(base: &PackConfig, n: usize, mode: SolverMode) -> Result<PackConfig, SimError> {
    if n == 0 {
        return Err(SimError::InvalidConfig("benchmark packs need at least one cell".into()));
    }
    let cells = (0..n).map(|k| base.cells[k % base.n()].clone()).collect();
    let initial_states = (0..n).map(|k| base.initial_states[k % base.n()]).collect();
    let interconnect = if base.interconnect.is_empty() {
        vec![DEFAULT_BENCH_INTERCONNECT; n - 1]
    } else {
        (0..n - 1).map(|k| base.interconnect[k % base.interconnect.len()]).collect()
    };
    let config = PackConfig {
        cells,
        interconnect,
        solver_mode: mode,
        initial_states,
        ..base.clone()
    };
    config.validate()?;
    Ok(config)
}

/// Mean wall time of one branch solve at the config's initial state, in
/// seconds, looping for at least `min_time`.
pub fn time_branch_solve(
    config: &PackConfig,
    applied: f64,
    mode: SolverMode,
    min_time: Duration,
) -> Result<f64, SimError> {
    let series: Vec<f64> = config
        .cells
        .iter()
        .zip(&config.initial_states)
        .map(|(c, s)| c.series_resistance_at(s.soc))
        .collect();
    let vbar: Vec<f64> = config
        .cells
        .iter()
        .zip(&config.initial_states)
        .map(|(c, s)| state_voltage(c, s))
        .collect();
    let interconnect = if config.interconnect.is_empty() {
        vec![0.0; config.n() - 1]
    } else {
        config.interconnect.clone()
    };
    let res = PackResistances::new(series, interconnect)?;
    let solve = || -> Result<f64, SimError> {
        let first = match mode {
            SolverMode::DensePerStep => dense_branch_currents(black_box(&res), black_box(&vbar), applied)?[0],
            _ => solve_with_interconnect(black_box(&res), black_box(&vbar), applied, config.scale_c)?.currents[0],
        };
        Ok(black_box(first))
    };
    solve()?;
    let start = Instant::now();
    let mut count = 0u64;
    while count == 0 || start.elapsed() < min_time {
        solve()?;
        count += 1;
    }
    Ok(start.elapsed().as_secs_f64() / count as f64)
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 0 {
        0.5 * (values[mid - 1] + values[mid])
    } else {
        values[mid]
    }
}

fn correctness_gate(base: &PackConfig, n: usize, profile: &CurrentProfile, t_end: f64) -> Result<f64, SimError> {
    let mut traces = Vec::new();
    for mode in TIMED_MODES {
        let mut config = replicate_pack(base, n, mode)?;
        config.integrator.t_end = t_end;
        traces.push(simulate(&config, profile)?);
    }
    let difference = traces[0].max_relative_difference(&traces[1]);
    if !(difference <= GATE_TOLERANCE) {
        return Err(SimError::ModeDisagreement { n, difference });
    }
    Ok(difference)
}

/// Times full simulations and isolated branch solves for both solver paths
/// at every `n` in `n_list`.
///
/// `per_cell_profile` gives the current per cell; an `n`-cell pack is driven
/// with `n` times that current so every size sees the same C-rate.
///
/// The cross-mode correctness gates run concurrently; all timing runs are
/// sequential.
pub fn benchmark_solvers(
    base: &PackConfig,
    n_list: &[usize],
    repeats: usize,
    per_cell_profile: &CurrentProfile,
    options: &BenchOptions,
) -> Result<BenchmarkTable, SimError> {
    if n_list.iter().any(|&n| n < 2) {
        return Err(SimError::InvalidConfig("benchmark cell counts must be at least 2".into()));
    }
    if repeats == 0 {
        return Err(SimError::InvalidConfig("benchmark needs at least one repeat".into()));
    }
    let t_end = options.t_end;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(threads) = options.threads {
        builder = builder.num_threads(threads.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| SimError::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let gates: Vec<f64> = pool.install(|| {
        n_list
            .par_iter()
            .map(|&n| correctness_gate(base, n, &per_cell_profile.scaled(n as f64), t_end))
            .collect::<Result<_, _>>()
    })?;

    let mut records = Vec::new();
    for &n in n_list {
        let profile = per_cell_profile.scaled(n as f64);
        let applied = profile.eval(0.0);
        for mode in TIMED_MODES {
            let mut config = replicate_pack(base, n, mode)?;
            config.integrator.t_end = t_end;
            let mut runs = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                let start = Instant::now();
                black_box(simulate(&config, &profile)?);
                runs.push(start.elapsed().as_secs_f64());
            }
            let mean_s = runs.iter().sum::<f64>() / repeats as f64;
            let median_s = median(&mut runs);
            let per_solve = time_branch_solve(&config, applied, mode, options.min_solve_time)?;
            log::info!("n = {n:5} {mode:>17}: median {median_s:.3e} s, {:.3} µs per solve", per_solve * 1e6);
            records.push(BenchRecord {
                n,
                mode: mode.to_string(),
                median_s,
                mean_s,
                per_solve_us: per_solve * 1e6,
            });
        }
    }

    let mut exponents = Vec::new();
    if n_list.len() >= 2 {
        for mode in TIMED_MODES {
            let rows: Vec<&BenchRecord> = records.iter().filter(|r| r.mode == mode.as_str()).collect();
            let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
            let solve: Vec<f64> = rows.iter().map(|r| r.per_solve_us).collect();
            let run: Vec<f64> = rows.iter().map(|r| r.median_s).collect();
            exponents.push(ScalingExponent {
                mode: mode.to_string(),
                per_solve: log_log_slope(&ns, &solve),
                full_run: log_log_slope(&ns, &run),
            });
        }
    }
    Ok(BenchmarkTable {
        records,
        exponents,
        max_gate_difference: gates.into_iter().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{CellParameters, CellState, Polynomial, SocBounds};
    use crate::sim::IntegratorSettings;

    fn base() -> PackConfig {
        let cell = |r: f64| {
            CellParameters::new(
                2.6,
                634.0,
                Polynomial::constant(0.0394),
                Polynomial::constant(r),
                Polynomial::new(vec![0.1, 3.2]),
                SocBounds::default(),
            )
            .unwrap()
        };
        PackConfig::new(
            vec![cell(0.029), cell(0.031)],
            vec![],
            SolverMode::AnalyticalNoR,
            IntegratorSettings::rk4(1.0, 5.0),
            vec![CellState::new(0.3, 0.0), CellState::new(0.4, 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn slope_of_power_law() {
        let x = [2.0, 4.0, 8.0, 16.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(2.5)).collect();
        assert!((log_log_slope(&x, &y) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn replication_is_cyclic() {
        let p = replicate_pack(&base(), 5, SolverMode::DensePerStep).unwrap();
        assert_eq!(p.n(), 5);
        assert_eq!(p.interconnect, vec![DEFAULT_BENCH_INTERCONNECT; 4]);
        assert_eq!(p.initial_states[4].soc, 0.3);
        assert_eq!(p.cells[3].series_resistance_at(0.5), 0.031);
    }

    #[test]
    fn small_benchmark_runs() {
        let options = BenchOptions {
            t_end: 3.0,
            min_solve_time: Duration::from_millis(1),
            threads: Some(2),
        };
        let table = benchmark_solvers(&base(), &[4, 8], 2, &CurrentProfile::constant(1.3), &options).unwrap();
        assert_eq!(table.records.len(), 4);
        assert_eq!(table.exponents.len(), 2);
        assert!(table.max_gate_difference <= GATE_TOLERANCE);
        assert!(table.records.iter().all(|r| r.median_s > 0.0 && r.per_solve_us > 0.0));
    }

    #[test]
    fn rejects_degenerate_requests() {
        let p = CurrentProfile::constant(1.0);
        let o = BenchOptions::default();
        assert!(benchmark_solvers(&base(), &[1], 1, &p, &o).is_err());
        assert!(benchmark_solvers(&base(), &[4], 0, &p, &o).is_err());
    }
}
