use packflow::io::{load_config, load_profile, parse_config, to_json};
use packflow::sim::{simulate, SolverMode, Termination};
use std::path::{Path, PathBuf};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

const NMC_SERIES_R: [f64; 4] = [-0.056, 0.116, -0.073, 0.0393];
const NMC_RC_R: [f64; 3] = [-0.02248, -0.01228, 0.02551];
const NMC_OCV: [f64; 8] = [96.7822, -349.5041, 512.5251, -397.1122, 177.8325, -46.8445, 7.6026, 2.8955];

#[test]
fn nmc_files_carry_the_published_parameters() {
    for (file, big_r) in [("lg_m50t.json", 0.001), ("lg_m50t_3mohm.json", 0.003)] {
        let c = load_config(data(file)).unwrap();
        assert_eq!(c.n(), 4);
        assert_eq!(c.interconnect, vec![big_r; 3]);
        for cell in &c.cells {
            assert_eq!(cell.capacity_ah(), 4.952);
            assert_eq!(cell.capacity_as(), 4.952 * 3600.0);
            assert_eq!(cell.rc_capacitance, 2913.1);
            assert_eq!(cell.series_resistance.coefficients(), NMC_SERIES_R);
            assert_eq!(cell.rc_resistance.coefficients(), NMC_RC_R);
            assert_eq!(cell.ocv.coefficients(), NMC_OCV);
        }
    }
}

#[test]
fn lfp_file_carries_the_published_parameters() {
    let text = std::fs::read_to_string(data("k2_lfp26650p.json")).unwrap();
    let raw: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(raw["sampling"]["means"]["series_resistance_ohm"], 0.0291);
    assert_eq!(raw["sampling"]["means"]["rc_resistance_ohm"], 0.0394);
    assert_eq!(raw["sampling"]["stds"]["series_resistance_ohm"], 0.001);
    assert_eq!(raw["sampling"]["stds"]["rc_resistance_ohm"], 0.001);

    let c = load_config(data("k2_lfp26650p.json")).unwrap();
    assert_eq!(c.n(), 10);
    assert!(c.seed.is_some());
    let n = c.n() as f64;
    let mean_r = c.cells.iter().map(|x| x.series_resistance_at(0.5)).sum::<f64>() / n;
    let mean_f = c.cells.iter().map(|x| x.rc_resistance_at(0.5)).sum::<f64>() / n;
    assert!((mean_r - 0.0291).abs() < 0.002);
    assert!((mean_f - 0.0394).abs() < 0.002);
    for cell in &c.cells {
        assert_eq!(cell.capacity_ah(), 2.6);
        assert_eq!(cell.rc_capacitance, 634.0);
    }
}

#[test]
fn bundled_configs_round_trip() {
    for file in ["lg_m50t.json", "lg_m50t_3mohm.json", "k2_lfp26650p.json", "lfp_bench.json"] {
        let c = load_config(data(file)).unwrap();
        let back = parse_config(&to_json(&c), Path::new(file), None).unwrap();
        assert_eq!(back, c, "{file}");
    }
}

#[test]
fn bundled_profiles() {
    assert_eq!(load_profile(data("profiles/lfp_1c_charge.csv")).unwrap().eval(100.0), 26.0);
    assert_eq!(load_profile(data("profiles/nmc_075c_discharge.csv")).unwrap().eval(0.0), -14.856);
    assert_eq!(load_profile(data("profiles/lfp_2c_per_cell.csv")).unwrap().eval(0.0), 5.2);
}

#[test]
fn lfp_charge_scenario_shows_imbalance() {
    let config = load_config(data("k2_lfp26650p.json")).unwrap();
    let profile = load_profile(data("profiles/lfp_1c_charge.csv")).unwrap();
    let trace = simulate(&config, &profile).unwrap();
    assert!(matches!(trace.termination, Termination::VoltageLimit { .. }), "{}", trace.termination);
    let last = trace.last().unwrap();
    assert!(last.soc.iter().all(|&z| z > 0.5 && z < 1.0), "{:?}", last.soc);

    let mut ideal = config.clone();
    ideal.interconnect.clear();
    ideal.solver_mode = SolverMode::AnalyticalNoR;
    let ideal_trace = simulate(&ideal, &profile).unwrap();
    let first = &trace.samples[1];
    let first_ideal = &ideal_trace.samples[1];
    let spread = |c: &[f64]| c.iter().cloned().fold(f64::MIN, f64::max) - c.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread(&first.currents) > spread(&first_ideal.currents));
    assert!(trace.final_soc_spread() > ideal_trace.final_soc_spread());
    assert!(ideal_trace.final_soc_spread() > 0.0);
}

#[test]
fn nmc_discharge_runs() {
    let config = load_config(data("lg_m50t.json")).unwrap();
    let profile = load_profile(data("profiles/nmc_075c_discharge.csv")).unwrap();
    let trace = simulate(&config, &profile).unwrap();
    assert_eq!(trace.termination, Termination::Completed);
    let last = trace.last().unwrap();
    assert!(last.soc.iter().all(|&z| z > 0.0 && z < 0.1));
    // Cell 1 sits next to the terminals and discharges hardest at first.
    assert!(trace.samples[1].currents[0] < trace.samples[1].currents[3]);
}
