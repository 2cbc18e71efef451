use super::TraceTable;
use thiserror::Error;

/// Relative tolerance for treating two timestamps as the same instant.
const TIME_MATCH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("series lengths differ: reference has {reference}, simulated has {simulated}")]
    LengthMismatch { reference: usize, simulated: usize },
    #[error("cannot compare empty series")]
    Empty,
    #[error("timestamps differ at row {index}: {reference} s vs {simulated} s (pass resampling to interpolate)")]
    MisalignedTimes { index: usize, reference: f64, simulated: f64 },
    #[error("traces describe {reference} and {simulated} cells")]
    CellCountMismatch { reference: usize, simulated: usize },
    #[error("time {time} s lies outside the simulated span [{start}, {end}] s")]
    OutOfRange { time: f64, start: f64, end: f64 },
}

fn check_lengths(reference: &[f64], simulated: &[f64]) -> Result<(), MetricsError> {
    if reference.len() != simulated.len() {
        return Err(MetricsError::LengthMismatch {
            reference: reference.len(),
            simulated: simulated.len(),
        });
    }
    if reference.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Mean squared difference.
pub fn mse(reference: &[f64], simulated: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(reference, simulated)?;
    let sum: f64 = reference.iter().zip(simulated).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(sum / reference.len() as f64)
}

pub fn max_abs_error(reference: &[f64], simulated: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(reference, simulated)?;
    Ok(reference
        .iter()
        .zip(simulated)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Linear interpolation of `(times, values)` at each of `queries`. `times`
/// must be increasing; queries outside its span are an error.
pub fn interpolate_linear(times: &[f64], values: &[f64], queries: &[f64]) -> Result<Vec<f64>, MetricsError> {
    check_lengths(times, values)?;
    let (start, end) = (times[0], times[times.len() - 1]);
    let slack = TIME_MATCH_TOLERANCE * end.abs().max(1.0);
    queries
        .iter()
        .map(|&t| {
            if t < start - slack || t > end + slack {
                return Err(MetricsError::OutOfRange { time: t, start, end });
            }
            let hi = times.partition_point(|&x| x < t).min(times.len() - 1);
            if hi == 0 || times[hi] == t {
                return Ok(values[hi]);
            }
            let lo = hi - 1;
            let frac = (t - times[lo]) / (times[hi] - times[lo]);
            Ok(values[lo] + frac * (values[hi] - values[lo]))
        })
        .collect()
}

/// Current agreement of one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellComparison {
    /// 1-based cell index.
    pub cell: usize,
    /// Mean squared current difference, A².
    pub mse: f64,
    /// Largest absolute current difference, A.
    pub max_abs_error: f64,
}

/// Per-cell branch-current MSE and max error between two traces.
///
/// Without `resample` both traces must share timestamps row by row; with it
/// the simulated currents are linearly interpolated onto the reference
/// times.
pub fn compare_traces(
    reference: &TraceTable,
    simulated: &TraceTable,
    resample: bool,
) -> Result<Vec<CellComparison>, MetricsError> {
    if reference.n_cells != simulated.n_cells {
        return Err(MetricsError::CellCountMismatch {
            reference: reference.n_cells,
            simulated: simulated.n_cells,
        });
    }
    let t_ref = reference.times();
    let t_sim = simulated.times();
    if !resample {
        check_lengths(&t_ref, &t_sim)?;
        for (index, (&a, &b)) in t_ref.iter().zip(&t_sim).enumerate() {
            if (a - b).abs() > TIME_MATCH_TOLERANCE * a.abs().max(1.0) {
                return Err(MetricsError::MisalignedTimes {
                    index,
                    reference: a,
                    simulated: b,
                });
            }
        }
    }
    (0..reference.n_cells)
        .map(|k| {
            let a = reference.currents(k);
            let b = if resample {
                interpolate_linear(&t_sim, &simulated.currents(k), &t_ref)?
            } else {
                simulated.currents(k)
            };
            Ok(CellComparison {
                cell: k + 1,
                mse: mse(&a, &b)?,
                max_abs_error: max_abs_error(&a, &b)?,
            })
        })
        .collect()
}
