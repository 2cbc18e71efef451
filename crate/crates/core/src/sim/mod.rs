//! Time integration of a parallel pack.
//!
//! The branch currents are an explicit function of the cell states and the
//! applied current, so the pack is integrated as a plain ODE: every
//! right-hand-side evaluation (each Runge–Kutta stage) evaluates `r_k(z_k)`
//! and `v̄_k` at the stage state, solves the branch currents, and feeds them
//! to the cell dynamics.

pub mod bench;
mod profile;
mod trace;

pub use profile::{CurrentProfile, Interpolation, ProfileError};
pub use trace::{CellQuantity, SimulationTrace, StepDiagnostics, Termination, TraceSample};

use crate::cell::{cell_derivative, state_voltage, CellDerivative, CellError, CellParameters, CellState};
use crate::solver::{
    self, solve_no_interconnect, solve_with_interconnect, BranchSolution, PackResistances, SolveError,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed on SoC bounds before a violation is reported.
pub const SOC_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid pack configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error("cell {cell} has SoC {soc} outside [{min}, {max}] at t = {time} s")]
    SocOutOfBounds {
        time: f64,
        cell: usize,
        soc: f64,
        min: f64,
        max: f64,
    },
    #[error("simulation end {t_end} s exceeds the current profile, which ends at {coverage} s")]
    ProfileGap { t_end: f64, coverage: f64 },
    #[error("adaptive step size fell below dt_min = {dt_min} s at t = {time} s")]
    StepSizeUnderflow { time: f64, dt_min: f64 },
    #[error("solver modes disagree by {difference:e} (relative) at n = {n}")]
    ModeDisagreement { n: usize, difference: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverMode {
    /// Closed-form currents for ideal busbars.
    #[serde(rename = "analytical-no-R")]
    AnalyticalNoR,
    /// O(n) recurrence with interconnection resistances.
    #[serde(rename = "analytical-with-R")]
    AnalyticalWithR,
    /// Dense LU of the Kirchhoff system at every evaluation.
    #[serde(rename = "dense-per-step")]
    DensePerStep,
}

impl SolverMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::AnalyticalNoR => "analytical-no-R",
            Self::AnalyticalWithR => "analytical-with-R",
            Self::DensePerStep => "dense-per-step",
        }
    }
}

impl std::fmt::Display for SolverMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SolverMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analytical-no-R" => Ok(Self::AnalyticalNoR),
            "analytical-with-R" => Ok(Self::AnalyticalWithR),
            "dense-per-step" => Ok(Self::DensePerStep),
            other => Err(format!(
                "unknown solver mode '{other}' (expected analytical-no-R, analytical-with-R or dense-per-step)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method")]
pub enum IntegratorMethod {
    #[serde(rename = "rk4-fixed")]
    Rk4 { dt: f64 },
    /// Dormand–Prince 5(4) with error control on `(z, w)`.
    #[serde(rename = "rk45-adaptive")]
    Rk45 {
        rtol: f64,
        atol: f64,
        dt_min: f64,
        dt_max: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    #[serde(flatten)]
    pub method: IntegratorMethod,
    pub t_end: f64,
}

impl IntegratorSettings {
    pub fn rk4(dt: f64, t_end: f64) -> Self {
        Self {
            method: IntegratorMethod::Rk4 { dt },
            t_end,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return bad(format!("t_end must be finite and non-negative, got {}", self.t_end));
        }
        match self.method {
            IntegratorMethod::Rk4 { dt } if !(dt.is_finite() && dt > 0.0) => {
                bad(format!("dt must be positive, got {dt}"))
            }
            IntegratorMethod::Rk45 {
                rtol,
                atol,
                dt_min,
                dt_max,
            } if !(rtol > 0.0 && atol > 0.0 && dt_min > 0.0 && dt_max >= dt_min && dt_max.is_finite()) => {
                bad(format!(
                    "adaptive settings need rtol, atol, dt_min > 0 and dt_max ≥ dt_min (got {rtol}, {atol}, {dt_min}, {dt_max})"
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Behaviour when a cell leaves its SoC bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SocPolicy {
    /// Stop and keep the trace up to the last valid step.
    #[default]
    Abort,
    /// Clamp into bounds, log a warning and continue.
    Clamp,
}

/// Pack terminal voltage window; crossing either side ends the run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VoltageLimits {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_min: Option<f64>,
}

impl VoltageLimits {
    pub fn is_empty(&self) -> bool {
        self.v_max.is_none() && self.v_min.is_none()
    }
}

/// A fully validated pack description.
#[derive(Debug, Clone, PartialEq)]
pub struct PackConfig {
    pub cells: Vec<CellParameters>,
    /// `R_2..R_n`; empty means ideal busbars.
    pub interconnect: Vec<f64>,
    pub solver_mode: SolverMode,
    pub scale_c: f64,
    pub integrator: IntegratorSettings,
    pub initial_states: Vec<CellState>,
    pub limits: VoltageLimits,
    pub soc_policy: SocPolicy,
    /// Store every `output_every`-th step (the final step is always stored).
    pub output_every: usize,
    /// Seed the cell parameters were drawn with, if they were sampled.
    pub seed: Option<u64>,
}

impl PackConfig {
    /// Config with default scale, limits, policy and cadence.
    pub fn new(
        cells: Vec<CellParameters>,
        interconnect: Vec<f64>,
        solver_mode: SolverMode,
        integrator: IntegratorSettings,
        initial_states: Vec<CellState>,
    ) -> Result<Self, SimError> {
        let config = Self {
            cells,
            interconnect,
            solver_mode,
            scale_c: solver::DEFAULT_SCALE_C,
            integrator,
            initial_states,
            limits: VoltageLimits::default(),
            soc_policy: SocPolicy::default(),
            output_every: 1,
            seed: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn n(&self) -> usize {
        self.cells.len()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        let n = self.cells.len();
        if n == 0 {
            return bad("pack needs at least one cell".into());
        }
        if self.initial_states.len() != n {
            return bad(format!("{n} cells but {} initial states", self.initial_states.len()));
        }
        match (self.interconnect.len(), self.solver_mode) {
            (0, _) => {}
            (len, SolverMode::AnalyticalNoR) if len == n - 1 => {
                if self.interconnect.iter().any(|&r| r != 0.0) {
                    return bad("solver mode analytical-no-R cannot model nonzero interconnect_R".into());
                }
            }
            (len, _) if len == n - 1 => {}
            (len, _) => return bad(format!("{n} cells need {} interconnect_R values, got {len}", n - 1)),
        }
        if let Some((k, r)) = self
            .interconnect
            .iter()
            .enumerate()
            .find(|(_, r)| !(r.is_finite() && **r >= 0.0))
        {
            return bad(format!("interconnect_R[{k}] = {r} must be non-negative"));
        }
        if !(self.scale_c > 0.0 && self.scale_c <= 1.0) {
            return bad(format!("scale_c = {} must lie in (0, 1]", self.scale_c));
        }
        if self.output_every == 0 {
            return bad("output_every must be at least 1".into());
        }
        for (k, (cell, s)) in self.cells.iter().zip(&self.initial_states).enumerate() {
            if !(s.soc.is_finite() && s.relaxation.is_finite()) {
                return bad(format!("initial state of cell {} is not finite", k + 1));
            }
            if !cell.soc_bounds.contains(s.soc, SOC_SLACK) {
                return bad(format!(
                    "initial SoC {} of cell {} is outside [{}, {}]",
                    s.soc,
                    k + 1,
                    cell.soc_bounds.min,
                    cell.soc_bounds.max
                ));
            }
        }
        self.integrator.validate()
    }

    /// `R_k` values handed to the solvers (zeros when ideal).
    fn interconnect_or_zero(&self) -> Vec<f64> {
        if self.interconnect.is_empty() {
            vec![0.0; self.n() - 1]
        } else {
            self.interconnect.clone()
        }
    }
}

/// Per-cell states of the whole pack at one instant.
pub type PackState = Vec<CellState>;

/// Branch solve for `states` under applied current `applied`, with series
/// resistances evaluated at each cell's SoC.
pub fn solve_branches(
    config: &PackConfig,
    states: &[CellState],
    applied: f64,
) -> Result<BranchSolution, SimError> {
    let series: Vec<f64> = config
        .cells
        .iter()
        .zip(states)
        .map(|(c, s)| c.series_resistance_at(s.soc))
        .collect();
    let vbar: Vec<f64> = config
        .cells
        .iter()
        .zip(states)
        .map(|(c, s)| state_voltage(c, s))
        .collect();
    let res = PackResistances::new(series, config.interconnect_or_zero())?;
    let solution = match config.solver_mode {
        SolverMode::AnalyticalNoR => solve_no_interconnect(&res, &vbar, applied)?,
        SolverMode::AnalyticalWithR => solve_with_interconnect(&res, &vbar, applied, config.scale_c)?,
        SolverMode::DensePerStep => {
            let currents = solver::dense_branch_currents(&res, &vbar, applied)?;
            let sol = BranchSolution::from_currents(&res, &vbar, applied, currents, None);
            sol.check_residuals(applied)?;
            sol
        }
    };
    Ok(solution)
}

/// Pack terminal voltage `v̄_1 + r_1 i_1`: branch 1 is wired straight to the
/// pack terminals.
pub fn pack_voltage(config: &PackConfig, states: &[CellState], solution: &BranchSolution) -> f64 {
    let cell = &config.cells[0];
    let s = &states[0];
    state_voltage(cell, s) + cell.series_resistance_at(s.soc) * solution.currents[0]
}

fn rhs(
    config: &PackConfig,
    states: &[CellState],
    applied: f64,
) -> Result<(Vec<CellDerivative>, BranchSolution), SimError> {
    let solution = solve_branches(config, states, applied)?;
    let derivs = config
        .cells
        .iter()
        .zip(states)
        .zip(&solution.currents)
        .map(|((c, s), &i)| cell_derivative(c, s, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((derivs, solution))
}

/// `y + Σ_j w_j k_j`, with `h` folded into the weights.
fn combine(y: &[CellState], terms: &[(&[CellDerivative], f64)]) -> PackState {
    y.iter()
        .enumerate()
        .map(|(idx, s)| {
            let mut out = *s;
            for (k, w) in terms {
                out.soc += w * k[idx].dsoc;
                out.relaxation += w * k[idx].drelaxation;
            }
            out
        })
        .collect()
}

fn check_bounds(config: &PackConfig, states: &[CellState], time: f64) -> Result<(), SimError> {
    for (k, (cell, s)) in config.cells.iter().zip(states).enumerate() {
        if !cell.soc_bounds.contains(s.soc, SOC_SLACK) {
            return Err(SimError::SocOutOfBounds {
                time,
                cell: k + 1,
                soc: s.soc,
                min: cell.soc_bounds.min,
                max: cell.soc_bounds.max,
            });
        }
    }
    Ok(())
}

fn rk4_advance(
    config: &PackConfig,
    states: &[CellState],
    k1: &[CellDerivative],
    t: f64,
    h: f64,
    profile: &CurrentProfile,
    segment: usize,
) -> Result<PackState, SimError> {
    let i_mid = profile.eval_in_segment(segment, t + 0.5 * h);
    let i_end = profile.eval_in_segment(segment, t + h);
    let (k2, _) = rhs(config, &combine(states, &[(k1, 0.5 * h)]), i_mid)?;
    let (k3, _) = rhs(config, &combine(states, &[(&k2, 0.5 * h)]), i_mid)?;
    let (k4, _) = rhs(config, &combine(states, &[(&k3, h)]), i_end)?;
    Ok(combine(
        states,
        &[(k1, h / 6.0), (&k2, h / 3.0), (&k3, h / 3.0), (&k4, h / 6.0)],
    ))
}

/// Advances every cell by one classical RK4 step of length `dt` from `t`.
///
/// Returns the new state and the branch solution at the start of the step.
/// The step must not straddle a profile breakpoint; [`simulate`] splits steps
/// accordingly.
pub fn step(
    config: &PackConfig,
    states: &[CellState],
    t: f64,
    dt: f64,
    profile: &CurrentProfile,
) -> Result<(PackState, BranchSolution), SimError> {
    check_bounds(config, states, t)?;
    let segment = profile.segment_at(t);
    let (k1, solution) = rhs(config, states, profile.eval_in_segment(segment, t))?;
    let next = rk4_advance(config, states, &k1, t, dt, profile, segment)?;
    Ok((next, solution))
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince attempt; returns the 5th-order state and the scaled
/// error norm.
#[allow(clippy::too_many_arguments)]
fn dopri_attempt(
    config: &PackConfig,
    states: &[CellState],
    k1: &[CellDerivative],
    t: f64,
    h: f64,
    profile: &CurrentProfile,
    segment: usize,
    rtol: f64,
    atol: f64,
) -> Result<(PackState, f64), SimError> {
    let mut ks: Vec<Vec<CellDerivative>> = vec![k1.to_vec()];
    for stage in 1..7 {
        let terms: Vec<(&[CellDerivative], f64)> = (0..stage)
            .filter(|&j| DP_A[stage][j] != 0.0)
            .map(|j| (ks[j].as_slice(), h * DP_A[stage][j]))
            .collect();
        let y = combine(states, &terms);
        let current = profile.eval_in_segment(segment, t + DP_C[stage] * h);
        let (k, _) = rhs(config, &y, current)?;
        ks.push(k);
    }
    let weights = |b: &[f64; 7]| -> Vec<(&[CellDerivative], f64)> {
        (0..7)
            .filter(|&j| b[j] != 0.0)
            .map(|j| (ks[j].as_slice(), h * b[j]))
            .collect()
    };
    let y5 = combine(states, &weights(&DP_B5));
    let y4 = combine(states, &weights(&DP_B4));
    let mut sum = 0.0;
    for ((a, b), s) in y5.iter().zip(&y4).zip(states) {
        let sz = atol + rtol * a.soc.abs().max(s.soc.abs());
        let sw = atol + rtol * a.relaxation.abs().max(s.relaxation.abs());
        sum += ((a.soc - b.soc) / sz).powi(2) + ((a.relaxation - b.relaxation) / sw).powi(2);
    }
    let err = (sum / (2 * states.len()) as f64).sqrt();
    Ok((y5, err))
}

fn make_sample(
    config: &PackConfig,
    states: &[CellState],
    time: f64,
    applied: f64,
    solution: &BranchSolution,
) -> TraceSample {
    let cell_voltages = config
        .cells
        .iter()
        .zip(states)
        .zip(&solution.currents)
        .map(|((c, s), &i)| state_voltage(c, s) + c.series_resistance_at(s.soc) * i)
        .collect();
    TraceSample {
        time,
        applied_current: applied,
        currents: solution.currents.clone(),
        soc: states.iter().map(|s| s.soc).collect(),
        relaxation: states.iter().map(|s| s.relaxation).collect(),
        cell_voltages,
        pack_voltage: pack_voltage(config, states, solution),
        diagnostics: StepDiagnostics::from_solution(solution),
    }
}

fn voltage_violation(limits: &VoltageLimits, v: f64) -> Option<f64> {
    match (limits.v_max, limits.v_min) {
        (Some(hi), _) if v > hi => Some(hi),
        (_, Some(lo)) if v < lo => Some(lo),
        _ => None,
    }
}

/// Integrates the pack from the configured initial states to `t_end` (or an
/// earlier SoC or voltage limit).
pub fn simulate(config: &PackConfig, profile: &CurrentProfile) -> Result<SimulationTrace, SimError> {
    config.validate()?;
    let t_end = config.integrator.t_end;
    let coverage = profile.coverage_end();
    if t_end > coverage {
        return Err(SimError::ProfileGap { t_end, coverage });
    }

    let mut trace = SimulationTrace::empty(config.n());
    trace.seed = config.seed;
    let mut states: PackState = config.initial_states.clone();
    let mut t = 0.0;
    let mut applied = profile.eval(t);
    let (mut k1, mut solution) = rhs(config, &states, applied)?;
    trace.branch_solves += 1;
    trace.samples.push(make_sample(config, &states, t, applied, &solution));
    if let Some(limit) = voltage_violation(&config.limits, trace.samples[0].pack_voltage) {
        trace.termination = Termination::VoltageLimit {
            time: t,
            voltage: trace.samples[0].pack_voltage,
            limit,
        };
        return Ok(trace);
    }

    let mut h_adapt = match config.integrator.method {
        IntegratorMethod::Rk4 { dt } => dt,
        IntegratorMethod::Rk45 { dt_min, dt_max, .. } => (dt_max * 0.01).max(dt_min),
    };
    let time_eps = 1e-9 * t_end.max(1.0);
    let mut since_output = 0usize;

    while t < t_end - time_eps {
        let segment = profile.segment_at(t);
        let boundary = profile.next_breakpoint(t).map_or(t_end, |b| b.min(t_end));
        let (next, h) = match config.integrator.method {
            IntegratorMethod::Rk4 { dt } => {
                let h = dt.min(boundary - t);
                let next = rk4_advance(config, &states, &k1, t, h, profile, segment)?;
                trace.branch_solves += 3;
                (next, h)
            }
            IntegratorMethod::Rk45 {
                rtol,
                atol,
                dt_min,
                dt_max,
            } => loop {
                let h = h_adapt.min(dt_max).min(boundary - t);
                let (next, err) = dopri_attempt(config, &states, &k1, t, h, profile, segment, rtol, atol)?;
                trace.branch_solves += 6;
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if err <= 1.0 {
                    h_adapt = (h * factor).max(dt_min);
                    break (next, h);
                }
                if h <= dt_min * (1.0 + 1e-12) {
                    return Err(SimError::StepSizeUnderflow { time: t, dt_min });
                }
                h_adapt = (h * factor).max(dt_min);
            },
        };
        t = if (boundary - (t + h)).abs() <= time_eps { boundary } else { t + h };
        states = next;
        trace.steps += 1;

        if let Err(SimError::SocOutOfBounds { cell, soc, .. }) = check_bounds(config, &states, t) {
            match config.soc_policy {
                SocPolicy::Abort => {
                    trace.termination = Termination::SocOutOfBounds { time: t, cell, soc };
                    return Ok(trace);
                }
                SocPolicy::Clamp => {
                    log::warn!("clamping SoC of cell {cell} from {soc} at t = {t} s");
                    for (c, s) in config.cells.iter().zip(states.iter_mut()) {
                        s.soc = c.soc_bounds.clamp(s.soc);
                    }
                }
            }
        }

        applied = profile.eval(t);
        (k1, solution) = rhs(config, &states, applied)?;
        trace.branch_solves += 1;
        since_output += 1;
        let last = t >= t_end - time_eps;
        let sample = make_sample(config, &states, t, applied, &solution);
        let violation = voltage_violation(&config.limits, sample.pack_voltage);
        if last || violation.is_some() || since_output >= config.output_every {
            since_output = 0;
            let voltage = sample.pack_voltage;
            trace.samples.push(sample);
            if let Some(limit) = violation {
                trace.termination = Termination::VoltageLimit {
                    time: t,
                    voltage,
                    limit,
                };
                return Ok(trace);
            }
        }
    }
    Ok(trace)
}

/// `(Σ_k Q_k Δz_k, ∫ I dt)` over the span of `trace`, both in coulombs.
pub fn charge_balance(config: &PackConfig, trace: &SimulationTrace, profile: &CurrentProfile) -> (f64, f64) {
    let (Some(first), Some(last)) = (trace.samples.first(), trace.samples.last()) else {
        return (0.0, 0.0);
    };
    let stored = config
        .cells
        .iter()
        .enumerate()
        .map(|(k, c)| c.capacity_as() * (last.soc[k] - first.soc[k]))
        .sum();
    (stored, profile.integral(first.time, last.time))
}
