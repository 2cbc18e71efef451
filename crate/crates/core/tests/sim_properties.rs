use packflow::cell::{CellParameters, CellState, Polynomial, SocBounds};
use packflow::sim::{
    charge_balance, simulate, CellQuantity, CurrentProfile, IntegratorMethod, IntegratorSettings, Interpolation,
    PackConfig, SimulationTrace, SolverMode,
};
use proptest::prelude::*;

const LFP_OCV: [f64; 8] = [102.9842, -358.0185, 510.1916, -384.2899, 164.6912, -40.237, 5.3497, 2.9667];
const NMC_OCV: [f64; 8] = [96.7822, -349.5041, 512.5251, -397.1122, 177.8325, -46.8445, 7.6026, 2.8955];

fn lfp_cell(r: f64, f: f64) -> CellParameters {
    CellParameters::new(
        2.6,
        634.0,
        Polynomial::constant(f),
        Polynomial::constant(r),
        Polynomial::new(LFP_OCV.to_vec()),
        SocBounds::default(),
    )
    .unwrap()
}

fn lfp_pack(rs: &[f64], big_r: f64, mode: SolverMode, dt: f64, t_end: f64, z0: &[f64]) -> PackConfig {
    let n = rs.len();
    PackConfig::new(
        rs.iter().map(|&r| lfp_cell(r, 0.0394)).collect(),
        if big_r == 0.0 { vec![] } else { vec![big_r; n - 1] },
        mode,
        IntegratorSettings::rk4(dt, t_end),
        z0.iter().map(|&z| CellState::new(z, 0.0)).collect(),
    )
    .unwrap()
}

fn assert_charge_conserved(config: &PackConfig, trace: &SimulationTrace, profile: &CurrentProfile) {
    let (stored, applied) = charge_balance(config, trace, profile);
    assert!(
        (stored - applied).abs() <= 1e-6 * applied.abs() + 1e-9,
        "stored {stored} As vs applied {applied} As"
    );
}

#[test]
fn symmetric_pack_shares_equally() {
    let config = lfp_pack(&[0.0291; 8], 0.0, SolverMode::AnalyticalNoR, 1.0, 1800.0, &[0.2; 8]);
    let profile = CurrentProfile::constant(20.8);
    let trace = simulate(&config, &profile).unwrap();
    for s in &trace.samples {
        for &i in &s.currents {
            assert!((i - 2.6).abs() <= 1e-9 * 20.8);
        }
    }
    assert_charge_conserved(&config, &trace, &profile);
}

#[test]
fn modes_agree_over_a_drive_cycle() {
    let rs = [0.028, 0.030, 0.0291, 0.031, 0.027, 0.0295];
    let z0 = [0.5, 0.52, 0.48, 0.5, 0.51, 0.49];
    let profile = CurrentProfile::new(
        vec![(0.0, 10.0), (120.0, -25.0), (300.0, 0.0), (420.0, 15.0), (600.0, 15.0)],
        Interpolation::Linear,
    )
    .unwrap();
    let a = lfp_pack(&rs, 0.002, SolverMode::AnalyticalWithR, 2.0, 600.0, &z0);
    let mut b = a.clone();
    b.solver_mode = SolverMode::DensePerStep;
    let ta = simulate(&a, &profile).unwrap();
    let tb = simulate(&b, &profile).unwrap();
    assert!(ta.max_relative_difference(&tb) <= 1e-8);
    assert_charge_conserved(&a, &ta, &profile);
    assert_charge_conserved(&b, &tb, &profile);
}

#[test]
fn ideal_and_ladder_modes_agree_without_busbars() {
    let rs = [0.028, 0.030, 0.0291, 0.031];
    let z0 = [0.3, 0.35, 0.4, 0.45];
    let a = lfp_pack(&rs, 0.0, SolverMode::AnalyticalNoR, 1.0, 300.0, &z0);
    let mut b = a.clone();
    b.solver_mode = SolverMode::AnalyticalWithR;
    let profile = CurrentProfile::constant(-10.0);
    let ta = simulate(&a, &profile).unwrap();
    let tb = simulate(&b, &profile).unwrap();
    assert!(ta.max_relative_difference(&tb) <= 1e-9);
}

#[test]
fn unequal_initial_soc_relaxes_toward_balance() {
    let config = lfp_pack(&[0.0291; 4], 0.0, SolverMode::AnalyticalNoR, 1.0, 3000.0, &[0.3, 0.4, 0.5, 0.6]);
    let profile = CurrentProfile::constant(0.0);
    let trace = simulate(&config, &profile).unwrap();
    let first = trace.samples[0].soc.iter().cloned().fold(f64::MIN, f64::max) - 0.3;
    assert!(trace.final_soc_spread() < first);
    assert_charge_conserved(&config, &trace, &profile);
}

#[test]
fn adaptive_integration_conserves_charge() {
    let mut config = lfp_pack(&[0.028, 0.03, 0.032], 0.003, SolverMode::AnalyticalWithR, 1.0, 900.0, &[0.4, 0.45, 0.5]);
    config.integrator.method = IntegratorMethod::Rk45 {
        rtol: 1e-8,
        atol: 1e-10,
        dt_min: 1e-6,
        dt_max: 50.0,
    };
    let profile = CurrentProfile::new(vec![(0.0, 7.8), (300.0, -7.8), (600.0, 2.0)], Interpolation::ZeroOrderHold).unwrap();
    let trace = simulate(&config, &profile).unwrap();
    assert_eq!(trace.last().unwrap().time, 900.0);
    assert!(trace.times().contains(&300.0) && trace.times().contains(&600.0));
    assert_charge_conserved(&config, &trace, &profile);
}

/// `w(t) = F I (1 − e^{−t/(F C)})` for constant `F` and current from rest.
#[test]
fn single_cell_matches_closed_form() {
    let (f, c, q) = (0.02551, 2913.1, 4.952);
    let cell = CellParameters::new(
        q,
        c,
        Polynomial::constant(f),
        Polynomial::new(vec![-0.056, 0.116, -0.073, 0.0393]),
        Polynomial::new(NMC_OCV.to_vec()),
        SocBounds::default(),
    )
    .unwrap();
    let current = 4.952;
    let config = PackConfig::new(
        vec![cell],
        vec![],
        SolverMode::AnalyticalNoR,
        IntegratorSettings::rk4(1.0, 3600.0),
        vec![CellState::new(0.0, 0.0)],
    )
    .unwrap();
    let profile = CurrentProfile::constant(current);
    let trace = simulate(&config, &profile).unwrap();
    let worst = trace
        .samples
        .iter()
        .map(|s| (s.relaxation[0] - f * current * (1.0 - (-s.time / (f * c)).exp())).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-10, "max error {worst:e} V");
    let z_end = trace.last().unwrap().soc[0];
    assert!((z_end - 1.0).abs() < 1e-12);
    assert_charge_conserved(&config, &trace, &profile);
}

fn final_relaxation(dt: f64) -> Vec<f64> {
    let config = lfp_pack(&[0.027, 0.03, 0.033], 0.004, SolverMode::AnalyticalWithR, dt, 600.0, &[0.2, 0.25, 0.3]);
    let trace = simulate(&config, &CurrentProfile::constant(15.0)).unwrap();
    let last = trace.last().unwrap();
    last.relaxation.iter().chain(&last.soc).copied().collect()
}

#[test]
fn rk4_self_convergence_is_fourth_order() {
    let coarse = final_relaxation(20.0);
    let mid = final_relaxation(10.0);
    let fine = final_relaxation(5.0);
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let order = (diff(&coarse, &mid) / diff(&mid, &fine)).log2();
    assert!(order >= 3.8, "observed order {order}");
}

#[test]
fn output_cadence_keeps_final_sample() {
    let mut config = lfp_pack(&[0.03, 0.031], 0.001, SolverMode::AnalyticalWithR, 1.0, 95.0, &[0.5, 0.5]);
    config.output_every = 10;
    let trace = simulate(&config, &CurrentProfile::constant(5.0)).unwrap();
    let times = trace.times();
    assert_eq!(times.len(), 11);
    assert_eq!(*times.last().unwrap(), 95.0);
    assert_eq!(trace.cell_series(1, CellQuantity::Soc).len(), 11);
}

#[test]
fn runs_are_deterministic() {
    let config = lfp_pack(&[0.028, 0.03, 0.032], 0.002, SolverMode::AnalyticalWithR, 1.0, 200.0, &[0.4, 0.45, 0.5]);
    let profile = CurrentProfile::constant(-6.0);
    assert_eq!(simulate(&config, &profile).unwrap(), simulate(&config, &profile).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn charge_conservation_on_random_packs(
        rs in prop::collection::vec(0.01..0.05f64, 2..8),
        big_r in 0.0..0.005f64,
        current_per_cell in -5.0..5.0f64,
        z in 0.3..0.7f64,
    ) {
        let n = rs.len();
        let mode = if big_r == 0.0 { SolverMode::AnalyticalNoR } else { SolverMode::AnalyticalWithR };
        let config = lfp_pack(&rs, big_r, mode, 2.0, 400.0, &vec![z; n]);
        let profile = CurrentProfile::constant(current_per_cell * n as f64);
        let trace = simulate(&config, &profile).unwrap();
        let (stored, applied) = charge_balance(&config, &trace, &profile);
        prop_assert!((stored - applied).abs() <= 1e-6 * applied.abs() + 1e-9);
        prop_assert!(trace.max_residual() <= 1e-9 * profile.eval(0.0).abs().max(1.0));
    }
}
