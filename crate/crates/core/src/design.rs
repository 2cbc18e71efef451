//! Series-resistance schedules that make every branch carry the same
//! normalized current.
//!
//! With equal initial states, branch currents stay proportional to capacity
//! for all time iff for every `j = 1..n−1`
//!
//! `r_j Q_j = r_{j+1} Q_{j+1} + R_{j+1} Σ_{k>j} Q_k`.
//!
//! "For all time" relies on `v̄_k` staying equal. For equal-capacity cells
//! that holds automatically; with unequal capacities the RC pair must scale
//! as well (`C_k ∝ Q_k`, `F_k ∝ 1/Q_k`), otherwise the relaxation voltages
//! drift apart and sharing is exact only at the first instant.
//!
//! [`qr_residuals`] evaluates the left minus right side, and
//! [`synthesize_uniform_r`] solves it backwards from a chosen `r_n`.

use crate::cell::Polynomial;
use crate::sim::{simulate, CurrentProfile, PackConfig, SimError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("a pack needs at least {min} cells, got {got}")]
    TooFewCells { min: usize, got: usize },
    #[error("{n} cells need {expected} interconnect values, got {got}")]
    LengthMismatch { n: usize, expected: usize, got: usize },
    #[error("capacity of cell {index} must be positive, got {value}")]
    NonpositiveCapacity { index: usize, value: f64 },
    #[error("interconnect_R[{index}] must be non-negative, got {value}")]
    NegativeInterconnect { index: usize, value: f64 },
    #[error("terminal-cell resistance must be positive, got {0}")]
    NonpositiveTerminalResistance(f64),
    #[error("uniform sharing requires equal initial states; cell {cell} differs from cell 1")]
    UnequalInitialStates { cell: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn check_inputs(capacities: &[f64], interconnect: &[f64], min_cells: usize) -> Result<(), DesignError> {
    let n = capacities.len();
    if n < min_cells {
        return Err(DesignError::TooFewCells { min: min_cells, got: n });
    }
    if interconnect.len() + 1 != n {
        return Err(DesignError::LengthMismatch {
            n,
            expected: n.saturating_sub(1),
            got: interconnect.len(),
        });
    }
    if let Some((index, &value)) = capacities.iter().enumerate().find(|(_, q)| !(**q > 0.0 && q.is_finite())) {
        return Err(DesignError::NonpositiveCapacity { index, value });
    }
    if let Some((index, &value)) = interconnect.iter().enumerate().find(|(_, r)| !(**r >= 0.0 && r.is_finite())) {
        return Err(DesignError::NegativeInterconnect { index, value });
    }
    Ok(())
}

/// `Σ_{k>j} Q_k` for `j = 1..n−1`, built from the back.
fn downstream_capacity(capacities: &[f64]) -> Vec<f64> {
    let n = capacities.len();
    let mut tail = vec![0.0; n];
    for j in (0..n - 1).rev() {
        tail[j] = tail[j + 1] + capacities[j + 1];
    }
    tail.truncate(n - 1);
    tail
}

/// Matching residuals `r_j Q_j − r_{j+1} Q_{j+1} − R_{j+1} Σ_{k>j} Q_k`,
/// one per `j = 1..n−1` (Ω·As when capacities are in As).
///
/// `interconnect[j]` holds `R_{j+2}`.
pub fn qr_residuals(capacities: &[f64], series: &[f64], interconnect: &[f64]) -> Result<Vec<f64>, DesignError> {
    check_inputs(capacities, interconnect, 2)?;
    if series.len() != capacities.len() {
        return Err(DesignError::LengthMismatch {
            n: capacities.len(),
            expected: capacities.len(),
            got: series.len(),
        });
    }
    let tail = downstream_capacity(capacities);
    Ok((0..capacities.len() - 1)
        .map(|j| series[j] * capacities[j] - series[j + 1] * capacities[j + 1] - interconnect[j] * tail[j])
        .collect())
}

/// Schedule `r_1..r_n` with zero matching residuals, given `r_n`.
pub fn synthesize_uniform_r(
    capacities: &[f64],
    interconnect: &[f64],
    terminal_resistance: f64,
) -> Result<Vec<f64>, DesignError> {
    check_inputs(capacities, interconnect, 1)?;
    if !(terminal_resistance > 0.0 && terminal_resistance.is_finite()) {
        return Err(DesignError::NonpositiveTerminalResistance(terminal_resistance));
    }
    let n = capacities.len();
    let mut schedule = vec![0.0; n];
    schedule[n - 1] = terminal_resistance;
    if n == 1 {
        return Ok(schedule);
    }
    let tail = downstream_capacity(capacities);
    for j in (0..n - 1).rev() {
        schedule[j] = (schedule[j + 1] * capacities[j + 1] + interconnect[j] * tail[j]) / capacities[j];
    }
    Ok(schedule)
}

/// Warning text if the schedule needs a branch resistance above `r_max`.
///
/// Matching can only add resistance, so a schedule whose largest entry
/// exceeds what the hardware can provide is not buildable.
pub fn realizability_warning(schedule: &[f64], r_max: f64) -> Option<String> {
    let (k, worst) = schedule
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    (worst > r_max).then(|| {
        format!(
            "branch {} needs {worst:.6e} Ω, above the realizable bound {r_max:.6e} Ω",
            k + 1
        )
    })
}

/// Copy of `config` with constant series resistances taken from `schedule`.
pub fn apply_schedule(config: &PackConfig, schedule: &[f64]) -> Result<PackConfig, DesignError> {
    if schedule.len() != config.n() {
        return Err(DesignError::LengthMismatch {
            n: config.n(),
            expected: config.n(),
            got: schedule.len(),
        });
    }
    let mut out = config.clone();
    for (cell, &r) in out.cells.iter_mut().zip(schedule) {
        *cell = cell.with_series_resistance(Polynomial::constant(r));
    }
    out.validate()?;
    Ok(out)
}

/// Capacities (As) and `R_2..R_n` of a config, zeros for ideal busbars.
pub fn pack_layout(config: &PackConfig) -> (Vec<f64>, Vec<f64>) {
    let capacities = config.cells.iter().map(|c| c.capacity_as()).collect();
    let interconnect = if config.interconnect.is_empty() {
        vec![0.0; config.n() - 1]
    } else {
        config.interconnect.clone()
    };
    (capacities, interconnect)
}

/// Sharing statistics of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct SharingReport {
    /// Max over stored samples of `max_k |i_k − I/n| / (|I|/n)`; samples with
    /// `I = 0` are skipped.
    pub max_current_deviation: f64,
    /// Max over samples of `max_{k,j} |i_k/Q_k − i_j/Q_j| / max_k |i_k/Q_k|`.
    pub max_rate_spread: f64,
    pub trace: crate::sim::SimulationTrace,
}

/// Simulates `config` and measures how far the branch currents stray from
/// equal sharing. Requires equal initial states.
pub fn verify_uniform_sharing(config: &PackConfig, profile: &CurrentProfile) -> Result<SharingReport, DesignError> {
    let first = config.initial_states[0];
    if let Some(k) = config.initial_states.iter().position(|s| *s != first) {
        return Err(DesignError::UnequalInitialStates { cell: k + 1 });
    }
    let trace = simulate(config, profile)?;
    let n = config.n() as f64;
    let capacities: Vec<f64> = config.cells.iter().map(|c| c.capacity_as()).collect();
    let mut max_current_deviation = 0.0f64;
    let mut max_rate_spread = 0.0f64;
    for s in &trace.samples {
        let share = s.applied_current / n;
        if share != 0.0 {
            let dev = s.currents.iter().map(|i| (i - share).abs()).fold(0.0, f64::max) / share.abs();
            max_current_deviation = max_current_deviation.max(dev);
        }
        let rates: Vec<f64> = s.currents.iter().zip(&capacities).map(|(i, q)| i / q).collect();
        let scale = rates.iter().map(|l| l.abs()).fold(0.0, f64::max);
        if scale > 0.0 {
            let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max_rate_spread = max_rate_spread.max((hi - lo) / scale);
        }
    }
    Ok(SharingReport {
        max_current_deviation,
        max_rate_spread,
        trace,
    })
}
