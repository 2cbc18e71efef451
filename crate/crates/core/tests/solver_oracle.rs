//! Branch solvers checked against a nodal-analysis formulation written
//! independently here: unknowns are the junction voltages `V_k`, and KCL at
//! each junction gives a tridiagonal system solved with the Thomas algorithm.

use packflow::solver::{
    backward_recurrences_raw, backward_recurrences_scaled, build_a22_interconnect, compute_local_params,
    solve_dense_oracle, solve_no_interconnect, solve_with_interconnect, PackResistances,
};
use proptest::prelude::*;

/// Currents from junction voltages; needs every `R_k > 0`.
fn nodal_currents(r: &[f64], big_r: &[f64], vbar: &[f64], applied: f64) -> Vec<f64> {
    let n = r.len();
    if n == 1 {
        return vec![applied];
    }
    // Conductance of segment between junction k and k+1 (0-based).
    let g: Vec<f64> = big_r.iter().map(|x| 1.0 / x).collect();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for k in 0..n {
        diag[k] = 1.0 / r[k];
        rhs[k] = vbar[k] / r[k];
        if k > 0 {
            diag[k] += g[k - 1];
            lower[k] = -g[k - 1];
        }
        if k + 1 < n {
            diag[k] += g[k];
            upper[k] = -g[k];
        }
    }
    rhs[0] += applied;
    for k in 1..n {
        let m = lower[k] / diag[k - 1];
        diag[k] -= m * upper[k - 1];
        rhs[k] -= m * rhs[k - 1];
    }
    let mut v = vec![0.0; n];
    v[n - 1] = rhs[n - 1] / diag[n - 1];
    for k in (0..n - 1).rev() {
        v[k] = (rhs[k] - upper[k] * v[k + 1]) / diag[k];
    }
    (0..n).map(|k| (v[k] - vbar[k]) / r[k]).collect()
}

fn max_norm_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

fn pack_strategy(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, f64)> {
    (2..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(0.005..0.06f64, n),
            prop::collection::vec(1e-5..5e-3f64, n - 1),
            prop::collection::vec(3.2..3.4f64, n),
            -60.0..60.0f64,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn recurrence_matches_nodal_oracle((r, big_r, vbar, applied) in pack_strategy(120)) {
        let res = PackResistances::new(r.clone(), big_r.clone()).unwrap();
        let fast = solve_with_interconnect(&res, &vbar, applied, 0.5).unwrap();
        let oracle = nodal_currents(&r, &big_r, &vbar, applied);
        prop_assert!(max_norm_error(&fast.currents, &oracle) < 1e-9);
    }

    #[test]
    fn dense_matches_nodal_oracle((r, big_r, vbar, applied) in pack_strategy(40)) {
        let res = PackResistances::new(r.clone(), big_r.clone()).unwrap();
        let (a, q) = build_a22_interconnect(&res, &vbar, applied);
        let dense = solve_dense_oracle(&a, &q).unwrap();
        let oracle = nodal_currents(&r, &big_r, &vbar, applied);
        prop_assert!(max_norm_error(&dense, &oracle) < 1e-9);
    }

    #[test]
    fn currents_obey_kirchhoff((r, big_r, vbar, applied) in pack_strategy(200)) {
        let res = PackResistances::new(r, big_r).unwrap();
        let sol = solve_with_interconnect(&res, &vbar, applied, 0.5).unwrap();
        let total: f64 = sol.currents.iter().sum();
        prop_assert!((total - applied).abs() <= 1e-10 * applied.abs().max(1.0));
        prop_assert!(sol.max_kvl_residual() <= 1e-9);
        prop_assert!(sol.check_residuals(applied).is_ok());
    }

    #[test]
    fn zero_interconnect_limit((r, _big_r, vbar, applied) in pack_strategy(100)) {
        let n = r.len();
        let ideal = solve_no_interconnect(&PackResistances::without_interconnect(r.clone()).unwrap(), &vbar, applied).unwrap();
        let ladder = solve_with_interconnect(&PackResistances::new(r, vec![0.0; n - 1]).unwrap(), &vbar, applied, 0.5).unwrap();
        prop_assert!(max_norm_error(&ladder.currents, &ideal.currents) < 1e-9);
    }

    #[test]
    fn scale_does_not_change_currents((r, big_r, vbar, applied) in pack_strategy(60), c in 0.05..1.0f64) {
        let res = PackResistances::new(r, big_r).unwrap();
        let a = solve_with_interconnect(&res, &vbar, applied, c).unwrap();
        let b = solve_with_interconnect(&res, &vbar, applied, 0.5).unwrap();
        prop_assert_eq!(a.currents, b.currents);
    }

    #[test]
    fn scaled_sequences_recover_raw((r, big_r, vbar, _applied) in pack_strategy(30), c in 0.1..1.0f64) {
        let res = PackResistances::new(r, big_r).unwrap();
        let params = compute_local_params(&res, &vbar).unwrap();
        let raw = backward_recurrences_raw(&params);
        let scaled = backward_recurrences_scaled(&params, c).unwrap();
        prop_assert!(!raw.overflow);
        let n = res.n();
        for k in 2..=n {
            let rel = (scaled.beta(k) - raw.beta[k - 2]).abs() / raw.beta[k - 2].abs();
            prop_assert!(rel < 1e-10, "k = {}: {} vs {}", k, scaled.beta(k), raw.beta[k - 2]);
        }
    }
}

#[test]
fn identical_cells_with_busbars_favour_the_terminal_end() {
    let n = 10;
    let r = vec![0.0291; n];
    let big_r = vec![0.003; n - 1];
    let vbar = vec![3.3; n];
    let sol = solve_with_interconnect(&PackResistances::new(r.clone(), big_r.clone()).unwrap(), &vbar, 26.0, 0.5).unwrap();
    let oracle = nodal_currents(&r, &big_r, &vbar, 26.0);
    assert!(max_norm_error(&sol.currents, &oracle) < 1e-12);
    for w in sol.currents.windows(2) {
        assert!(w[0] > w[1]);
    }
}
