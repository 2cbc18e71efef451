//! Branch-current solvers for `n` cells in parallel.
//!
//! Cell `k` presents `v̄_k + r_k i_k` at its terminals. Without interconnection
//! resistances every branch sees the same voltage; with them, branch `k`
//! reaches the pack terminals through the busbar segments `R_2..R_k`, and
//! segment `R_k` carries the current sum `S_k = i_k + ... + i_n`.
//!
//! Three routes are provided:
//! * [`solve_no_interconnect`]: closed form for `R_k = 0`.
//! * [`solve_with_interconnect`]: O(n) backward recurrence over the current
//!   sums.
//! * [`solve_dense_oracle`]: LU with partial pivoting on the assembled
//!   Kirchhoff system, used to check the other two.

mod dense;
mod recurrence;

pub use dense::{
    build_a22_interconnect, build_a22_no_interconnect, dense_branch_currents, solve_dense_oracle, DenseMatrix,
};
pub use recurrence::{
    backward_recurrences_raw, backward_recurrences_scaled, compute_local_params,
    recurrence_diagnostics, solve_with_interconnect, terminal_current_from_scaled, LocalParams,
    RawSequences, RecurrenceDiagnostics, ScaledSequences, OVERFLOW_THRESHOLD,
};

use thiserror::Error;

/// Relative KCL/KVL residual accepted on a returned solution, scaled by
/// `max(1, |I|)`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;

/// Default scale constant for the scaled recurrences.
pub const DEFAULT_SCALE_C: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("resistance {name}_{index} = {value} Ω is negative or not finite")]
    InvalidResistance {
        name: &'static str,
        index: usize,
        value: f64,
    },
    #[error("series resistance r_{index} is zero; the analytical solvers need every r_k > 0")]
    ZeroUpstreamResistance { index: usize },
    #[error("pack is not solvable: {0}")]
    UnsolvablePack(String),
    #[error("dense system is singular at pivot {column} (|pivot| = {pivot:e})")]
    SingularSystem { column: usize, pivot: f64 },
    #[error("Kirchhoff residual {residual:e} exceeds {tolerance:e} ({law})")]
    KirchhoffResidualExceeded {
        law: &'static str,
        residual: f64,
        tolerance: f64,
    },
    #[error("scale constant c = {0} must lie in (0, 1]")]
    InvalidScale(f64),
}

/// Series resistances `r_1..r_n` (already evaluated at the current SoC) and
/// interconnection resistances `R_2..R_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackResistances {
    series: Vec<f64>,
    interconnect: Vec<f64>,
}

impl PackResistances {
    /// `interconnect` must hold `n - 1` values, or be empty for `R_k = 0`.
    pub fn new(series: Vec<f64>, interconnect: Vec<f64>) -> Result<Self, SolveError> {
        let n = series.len();
        if n == 0 {
            return Err(SolveError::DimensionMismatch("pack has no cells".into()));
        }
        let interconnect = if interconnect.is_empty() {
            vec![0.0; n - 1]
        } else {
            interconnect
        };
        if interconnect.len() != n - 1 {
            return Err(SolveError::DimensionMismatch(format!(
                "{} series resistances need {} interconnect values, got {}",
                n,
                n - 1,
                interconnect.len()
            )));
        }
        for (k, &r) in series.iter().enumerate() {
            if !(r.is_finite() && r >= 0.0) {
                return Err(SolveError::InvalidResistance {
                    name: "r",
                    index: k + 1,
                    value: r,
                });
            }
        }
        for (k, &r) in interconnect.iter().enumerate() {
            if !(r.is_finite() && r >= 0.0) {
                return Err(SolveError::InvalidResistance {
                    name: "R",
                    index: k + 2,
                    value: r,
                });
            }
        }
        Ok(Self {
            series,
            interconnect,
        })
    }

    pub fn without_interconnect(series: Vec<f64>) -> Result<Self, SolveError> {
        Self::new(series, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.series.len()
    }

    pub fn series(&self) -> &[f64] {
        &self.series
    }

    /// `R_2..R_n`; index 0 holds `R_2`.
    pub fn interconnect(&self) -> &[f64] {
        &self.interconnect
    }

    /// `r_k` with 1-based `k`.
    #[inline]
    pub fn r(&self, k: usize) -> f64 {
        self.series[k - 1]
    }

    /// `R_k` with 1-based `k >= 2`.
    #[inline]
    pub fn big_r(&self, k: usize) -> f64 {
        self.interconnect[k - 2]
    }

    pub fn has_interconnect(&self) -> bool {
        self.interconnect.iter().any(|&r| r != 0.0)
    }

    fn require_positive_series(&self) -> Result<(), SolveError> {
        match self.series.iter().position(|&r| r <= 0.0) {
            Some(k) => Err(SolveError::ZeroUpstreamResistance { index: k + 1 }),
            None => Ok(()),
        }
    }
}

/// Recurrence growth indicators attached to a solution from
/// [`solve_with_interconnect`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceSummary {
    /// `log10 |β_2|`.
    pub log10_beta_2: f64,
    /// `ψ_2 = c^(n-1) β_2`; may under- or overflow for very large packs.
    pub psi_2: f64,
    pub scale_c: f64,
}

impl RecurrenceSummary {
    /// `β_2`, infinite when it exceeds the `f64` range.
    pub fn beta_2(&self) -> f64 {
        10f64.powf(self.log10_beta_2)
    }
}

/// Branch currents for one solve, with their current sums and residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSolution {
    /// `i_1..i_n`.
    pub currents: Vec<f64>,
    /// `S_1..S_n`, `S_k = i_k + ... + i_n`.
    pub current_sums: Vec<f64>,
    pub recurrence: Option<RecurrenceSummary>,
    pub kcl_residual: f64,
    /// `n - 1` loop residuals.
    pub kvl_residuals: Vec<f64>,
}

impl BranchSolution {
    /// Fills current sums and residuals around a current vector.
    pub fn from_currents(
        res: &PackResistances,
        vbar: &[f64],
        applied: f64,
        currents: Vec<f64>,
        recurrence: Option<RecurrenceSummary>,
    ) -> Self {
        let current_sums = suffix_sums(&currents);
        let (kcl_residual, kvl_residuals) = residuals_with_sums(res, vbar, applied, &currents, &current_sums);
        Self {
            currents,
            current_sums,
            recurrence,
            kcl_residual,
            kvl_residuals,
        }
    }

    pub fn n(&self) -> usize {
        self.currents.len()
    }

    pub fn max_kvl_residual(&self) -> f64 {
        self.kvl_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn beta_2(&self) -> Option<f64> {
        self.recurrence.map(|r| r.beta_2())
    }

    /// Fails with [`SolveError::KirchhoffResidualExceeded`] if either residual
    /// exceeds `RESIDUAL_TOLERANCE · max(1, |I|)`.
    pub fn check_residuals(&self, applied: f64) -> Result<(), SolveError> {
        let tolerance = RESIDUAL_TOLERANCE * applied.abs().max(1.0);
        if !(self.kcl_residual <= tolerance) {
            return Err(SolveError::KirchhoffResidualExceeded {
                law: "KCL",
                residual: self.kcl_residual,
                tolerance,
            });
        }
        let kvl = self.max_kvl_residual();
        if !(kvl <= tolerance) || self.kvl_residuals.iter().any(|r| r.is_nan()) {
            return Err(SolveError::KirchhoffResidualExceeded {
                law: "KVL",
                residual: kvl,
                tolerance,
            });
        }
        Ok(())
    }
}

fn suffix_sums(currents: &[f64]) -> Vec<f64> {
    let mut sums = vec![0.0; currents.len()];
    let mut acc = 0.0;
    for (k, &i) in currents.iter().enumerate().rev() {
        acc += i;
        sums[k] = acc;
    }
    sums
}

fn check_dims(res: &PackResistances, vbar: &[f64]) -> Result<(), SolveError> {
    if vbar.len() != res.n() {
        return Err(SolveError::DimensionMismatch(format!(
            "{} cells but {} state voltages",
            res.n(),
            vbar.len()
        )));
    }
    Ok(())
}

/// KCL and KVL residuals of `currents`:
///
/// `kcl = |Σ i_k − I|`,
/// `kvl_j = |r_j i_j + v̄_j − R_{j+1} S_{j+1} − r_{j+1} i_{j+1} − v̄_{j+1}|`.
pub fn residuals(
    res: &PackResistances,
    vbar: &[f64],
    applied: f64,
    currents: &[f64],
) -> (f64, Vec<f64>) {
    let sums = suffix_sums(currents);
    residuals_with_sums(res, vbar, applied, currents, &sums)
}

fn residuals_with_sums(
    res: &PackResistances,
    vbar: &[f64],
    applied: f64,
    currents: &[f64],
    sums: &[f64],
) -> (f64, Vec<f64>) {
    let n = currents.len();
    let kcl = (currents.iter().sum::<f64>() - applied).abs();
    let kvl = (1..n)
        .map(|j| {
            let lhs = res.r(j) * currents[j - 1] + vbar[j - 1];
            let rhs = res.big_r(j + 1) * sums[j] + res.r(j + 1) * currents[j] + vbar[j];
            (lhs - rhs).abs()
        })
        .collect();
    (kcl, kvl)
}

/// Closed-form branch currents when every busbar segment is ideal:
///
/// `i_1 = (r_1 Σ 1/r_ℓ)^-1 (Σ_{k≥2} Δv̄_k1 / r_k + I)`,
/// `i_j = (1/r_j) ((Σ 1/r_ℓ)^-1 (Σ_{k≥2} Δv̄_k1 / r_k + I) − Δv̄_j1)`.
///
/// Interconnect values in `res` are ignored.
pub fn solve_no_interconnect(
    res: &PackResistances,
    vbar: &[f64],
    applied: f64,
) -> Result<BranchSolution, SolveError> {
    check_dims(res, vbar)?;
    res.require_positive_series()?;
    let n = res.n();
    let conductance: f64 = res.series().iter().map(|r| 1.0 / r).sum();
    let driven: f64 = (2..=n).map(|k| (vbar[k - 1] - vbar[0]) / res.r(k)).sum();
    // Common terminal drop r_1 i_1 shared by every branch.
    let common = (driven + applied) / conductance;
    let currents = (1..=n)
        .map(|j| (common - (vbar[j - 1] - vbar[0])) / res.r(j))
        .collect();
    let ideal = PackResistances::without_interconnect(res.series().to_vec())?;
    let solution = BranchSolution::from_currents(&ideal, vbar, applied, currents, None);
    solution.check_residuals(applied)?;
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dimensions() {
        assert!(PackResistances::new(vec![], vec![]).is_err());
        assert!(PackResistances::new(vec![0.1, 0.1, 0.1], vec![0.01]).is_err());
        assert!(PackResistances::new(vec![0.1, -0.1], vec![]).is_err());
        assert!(PackResistances::new(vec![0.1, 0.1], vec![f64::NAN]).is_err());
        let ok = PackResistances::new(vec![0.1, 0.1, 0.1], vec![]).unwrap();
        assert_eq!(ok.interconnect(), &[0.0, 0.0]);
        assert!(!ok.has_interconnect());
    }

    #[test]
    fn symmetric_pack_shares_equally() {
        for n in [1usize, 2, 7, 64] {
            let res = PackResistances::without_interconnect(vec![0.03; n]).unwrap();
            let sol = solve_no_interconnect(&res, &vec![3.3; n], 12.5).unwrap();
            for &i in &sol.currents {
                assert!((i - 12.5 / n as f64).abs() <= 1e-12 * 12.5 / n as f64);
            }
        }
    }

    #[test]
    fn single_cell_takes_everything() {
        let res = PackResistances::without_interconnect(vec![0.05]).unwrap();
        let sol = solve_no_interconnect(&res, &[3.7], -4.0).unwrap();
        assert_eq!(sol.currents, vec![-4.0]);
        assert!(sol.kvl_residuals.is_empty());
    }

    #[test]
    fn three_cells_match_dense_oracle() {
        let res = PackResistances::without_interconnect(vec![0.02, 0.03, 0.06]).unwrap();
        let vbar = [3.30, 3.31, 3.29];
        let sol = solve_no_interconnect(&res, &vbar, 5.0).unwrap();
        let (a, q) = build_a22_no_interconnect(&res, &vbar, 5.0);
        let oracle = solve_dense_oracle(&a, &q).unwrap();
        for (x, y) in sol.currents.iter().zip(&oracle) {
            assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0));
        }
    }

    #[test]
    fn zero_series_resistance_is_rejected_analytically() {
        let res = PackResistances::without_interconnect(vec![0.0, 0.03, 0.03]).unwrap();
        assert_eq!(
            solve_no_interconnect(&res, &[3.3; 3], 1.0),
            Err(SolveError::ZeroUpstreamResistance { index: 1 })
        );
        // The dense route still handles r_1 = 0 when the others are positive.
        let (a, q) = build_a22_no_interconnect(&res, &[3.3, 3.3, 3.3], 1.0);
        let i = solve_dense_oracle(&a, &q).unwrap();
        assert!((i[1] - 0.0).abs() < 1e-12 && (i[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn residual_linearity() {
        let res = PackResistances::new(vec![0.02, 0.03, 0.04], vec![0.01, 0.02]).unwrap();
        let vbar = [3.3, 3.31, 3.28];
        let (a, q) = build_a22_interconnect(&res, &vbar, 4.0);
        let exact = solve_dense_oracle(&a, &q).unwrap();
        let (kcl, kvl) = residuals(&res, &vbar, 4.0, &exact);
        assert!(kcl < 1e-12 && kvl.iter().all(|&r| r < 1e-12));

        let eps = 1e-3;
        let mut perturbed = exact.clone();
        perturbed[0] += eps;
        let (kcl, kvl) = residuals(&res, &vbar, 4.0, &perturbed);
        assert!((kcl - eps).abs() < 1e-12);
        assert!((kvl[0] - 0.02 * eps).abs() < 1e-12);
        assert!(kvl[1] < 1e-12);
    }

    #[test]
    fn zero_current_equal_states_gives_zero_currents() {
        let res = PackResistances::new(vec![0.02, 0.03, 0.04], vec![0.01, 0.02]).unwrap();
        let a = solve_with_interconnect(&res, &[3.3; 3], 0.0, DEFAULT_SCALE_C).unwrap();
        let b = solve_no_interconnect(&res, &[3.3; 3], 0.0).unwrap();
        assert!(a.currents.iter().chain(&b.currents).all(|&i| i.abs() < 1e-15));
    }
}
