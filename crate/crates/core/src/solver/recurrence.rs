//! Backward recurrences over the current sums `S_k` for packs with
//! interconnection resistances.
//!
//! With `θ_k = r_k / r_{k-1}`, `ρ_k = (v̄_k − v̄_{k-1}) / r_{k-1}`,
//! `ω_k = R_k / r_{k-1}` and `α_k = 1 + θ_k + ω_k`, the loop equations become
//!
//! ```text
//! S_{k-1} = α_k S_k − θ_k S_{k+1} + ρ_k,   k = 2..n,   S_{n+1} = 0,  S_1 = I.
//! ```
//!
//! Writing `S_{k-1} = β_k S_n + f_k` gives the homogeneous and particular
//! sequences `β` and `f`; `i_n = S_n = (I − f_2) / β_2`. Both sequences grow
//! geometrically as `k` decreases, so they are also offered in scaled form
//! `ψ_k = c^(n+1-k) β_k`, `g_k = c^(n+1-k) f_k`.
//!
//! The currents themselves are produced from the normalised form of the same
//! recurrence: `S_k = a_k S_{k-1} + b_k` with `a_k = β_{k+1} / β_k` and
//! `b_k = f_{k+1} − a_k f_k`. Since `α_k ≥ 1 + θ_k`, every `a_k` lies in
//! `(0, 1]` and the forward substitution from `S_1 = I` never amplifies
//! rounding error, whereas propagating from `i_n` towards `i_1` multiplies
//! any error in `i_n` by `β_2`.

use super::{check_dims, BranchSolution, PackResistances, RecurrenceSummary, SolveError};

/// Magnitude above which a raw sequence is flagged as overflowing.
pub const OVERFLOW_THRESHOLD: f64 = 1e300;

/// Local ratios for `k = 2..n`; index 0 holds `k = 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalParams {
    pub theta: Vec<f64>,
    pub rho: Vec<f64>,
    pub omega: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl LocalParams {
    /// Number of cells these parameters describe.
    pub fn n(&self) -> usize {
        self.theta.len() + 1
    }
}

pub fn compute_local_params(
    res: &PackResistances,
    vbar: &[f64],
) -> Result<LocalParams, SolveError> {
    check_dims(res, vbar)?;
    let n = res.n();
    let mut p = LocalParams {
        theta: Vec::with_capacity(n - 1),
        rho: Vec::with_capacity(n - 1),
        omega: Vec::with_capacity(n - 1),
        alpha: Vec::with_capacity(n - 1),
    };
    for k in 2..=n {
        let upstream = res.r(k - 1);
        if upstream <= 0.0 {
            return Err(SolveError::ZeroUpstreamResistance { index: k - 1 });
        }
        let theta = res.r(k) / upstream;
        let omega = res.big_r(k) / upstream;
        p.theta.push(theta);
        p.rho.push((vbar[k - 1] - vbar[k - 2]) / upstream);
        p.omega.push(omega);
        p.alpha.push(1.0 + theta + omega);
    }
    Ok(p)
}

/// Unscaled `β` and `f`, indexed `k = 2..n+1` (index 0 holds `k = 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct RawSequences {
    pub beta: Vec<f64>,
    pub f: Vec<f64>,
    /// Set when any `|β_k|` or `|f_k|` exceeds [`OVERFLOW_THRESHOLD`] or is
    /// not finite.
    pub overflow: bool,
}

/// `β_{n+1} = 1, β_n = α_n, β_k = α_k β_{k+1} − θ_k β_{k+2}` and
/// `f_{n+1} = 0, f_n = ρ_n, f_k = α_k f_{k+1} − θ_k f_{k+2} + ρ_k`.
pub fn backward_recurrences_raw(params: &LocalParams) -> RawSequences {
    let (beta, f) = scaled_sweep(params, 1.0);
    let overflow = beta
        .iter()
        .chain(&f)
        .any(|v| !(v.abs() <= OVERFLOW_THRESHOLD));
    RawSequences { beta, f, overflow }
}

/// Scaled `ψ` and `g`, indexed `k = 2..n+1` (index 0 holds `k = 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledSequences {
    pub psi: Vec<f64>,
    pub g: Vec<f64>,
    pub scale_c: f64,
    /// `c^(n-1)` underflowed, so `β_2` and `f_2` cannot be recovered by
    /// division. The ratio `(c^(n-1) I − g_2) / ψ_2` is unaffected by this
    /// flag only when `c^(n-1)` stays normal.
    pub underflow: bool,
    /// A scaled value itself left the `f64` range.
    pub overflow: bool,
}

impl ScaledSequences {
    /// `c^(n-1)`, the factor linking `ψ_2, g_2` to `β_2, f_2`.
    pub fn recovery_factor(&self) -> f64 {
        self.scale_c.powi(self.psi.len() as i32 - 1)
    }

    /// `β_k` recovered as `ψ_k / c^(n+1-k)`, with 1-based `k`.
    pub fn beta(&self, k: usize) -> f64 {
        let n = self.psi.len();
        self.psi[k - 2] / self.scale_c.powi((n + 1 - k) as i32)
    }

    /// `f_k` recovered as `g_k / c^(n+1-k)`, with 1-based `k`.
    pub fn f(&self, k: usize) -> f64 {
        let n = self.psi.len();
        self.g[k - 2] / self.scale_c.powi((n + 1 - k) as i32)
    }
}

/// `ψ_{n+1} = 1, ψ_n = c α_n, ψ_k = c α_k ψ_{k+1} − c² θ_k ψ_{k+2}` and
/// `g_{n+1} = 0, g_n = c ρ_n, g_k = c α_k g_{k+1} − c² θ_k g_{k+2} + c^(n+1-k) ρ_k`.
pub fn backward_recurrences_scaled(
    params: &LocalParams,
    scale_c: f64,
) -> Result<ScaledSequences, SolveError> {
    if !(scale_c > 0.0 && scale_c <= 1.0) {
        return Err(SolveError::InvalidScale(scale_c));
    }
    let (psi, g) = scaled_sweep(params, scale_c);
    let n = params.n();
    let factor = scale_c.powi(n as i32 - 1);
    let underflow = !(factor >= f64::MIN_POSITIVE);
    let overflow = psi.iter().chain(&g).any(|v| !v.is_finite());
    Ok(ScaledSequences {
        psi,
        g,
        scale_c,
        underflow,
        overflow,
    })
}

/// Shared sweep; `c = 1` gives the raw sequences.
fn scaled_sweep(params: &LocalParams, c: f64) -> (Vec<f64>, Vec<f64>) {
    let n = params.n();
    // Slot j holds k = j + 2; slot n - 1 holds k = n + 1.
    let mut psi = vec![0.0; n];
    let mut g = vec![0.0; n];
    psi[n - 1] = 1.0;
    g[n - 1] = 0.0;
    if n < 2 {
        return (psi, g);
    }
    let c2 = c * c;
    // c^(n+1-k) for the current k, starting at k = n.
    let mut weight = c;
    psi[n - 2] = c * params.alpha[n - 2];
    g[n - 2] = c * params.rho[n - 2];
    for k in (2..n).rev() {
        weight *= c;
        let j = k - 2;
        psi[j] = c * params.alpha[j] * psi[j + 1] - c2 * params.theta[j] * psi[j + 2];
        g[j] = c * params.alpha[j] * g[j + 1] - c2 * params.theta[j] * g[j + 2] + weight * params.rho[j];
    }
    (psi, g)
}

/// `i_n = (c^(n-1) I − g_2) / ψ_2`.
pub fn terminal_current_from_scaled(seq: &ScaledSequences, applied: f64) -> f64 {
    (seq.recovery_factor() * applied - seq.g[0]) / seq.psi[0]
}

/// Local parameters together with the scaled sequences for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceDiagnostics {
    pub params: LocalParams,
    pub scaled: ScaledSequences,
}

pub fn recurrence_diagnostics(
    res: &PackResistances,
    vbar: &[f64],
    scale_c: f64,
) -> Result<RecurrenceDiagnostics, SolveError> {
    let params = compute_local_params(res, vbar)?;
    let scaled = backward_recurrences_scaled(&params, scale_c)?;
    Ok(RecurrenceDiagnostics { params, scaled })
}

/// Branch currents with interconnection resistances in O(n).
///
/// The normalised recurrence is swept from `k = n` down to `k = 2`, then the
/// current sums are rebuilt from `S_1 = I` and differenced into currents.
/// `scale_c` only affects the reported `ψ_2`.
pub fn solve_with_interconnect(
    res: &PackResistances,
    vbar: &[f64],
    applied: f64,
    scale_c: f64,
) -> Result<BranchSolution, SolveError> {
    check_dims(res, vbar)?;
    if !(scale_c > 0.0 && scale_c <= 1.0) {
        return Err(SolveError::InvalidScale(scale_c));
    }
    res.require_positive_series()?;
    let n = res.n();
    if n == 1 {
        return Ok(BranchSolution::from_currents(res, vbar, applied, vec![applied], None));
    }

    // Slot k - 2 holds a_k, b_k.
    let mut ratio = vec![0.0; n - 1];
    let mut offset = vec![0.0; n - 1];
    let (mut a_next, mut b_next) = (0.0, 0.0);
    let mut log10_beta_2 = 0.0;
    for k in (2..=n).rev() {
        let upstream = res.r(k - 1);
        let theta = res.r(k) / upstream;
        let alpha = 1.0 + theta + res.big_r(k) / upstream;
        let rho = (vbar[k - 1] - vbar[k - 2]) / upstream;
        let pivot = alpha - theta * a_next;
        if !(pivot.is_finite() && pivot.abs() > 1e-300) {
            return Err(SolveError::UnsolvablePack(format!(
                "recurrence pivot vanished at k = {k}"
            )));
        }
        let a = 1.0 / pivot;
        let b = (theta * b_next - rho) * a;
        ratio[k - 2] = a;
        offset[k - 2] = b;
        log10_beta_2 += pivot.abs().log10();
        a_next = a;
        b_next = b;
    }

    let mut sums = vec![0.0; n + 1];
    sums[0] = applied;
    for k in 2..=n {
        sums[k - 1] = ratio[k - 2] * sums[k - 2] + offset[k - 2];
    }
    let currents: Vec<f64> = (0..n).map(|j| sums[j] - sums[j + 1]).collect();

    let summary = RecurrenceSummary {
        log10_beta_2,
        psi_2: 10f64.powf(log10_beta_2 + (n as f64 - 1.0) * scale_c.log10()),
        scale_c,
    };
    let solution = BranchSolution::from_currents(res, vbar, applied, currents, Some(summary));
    solution.check_residuals(applied)?;
    Ok(solution)
}
