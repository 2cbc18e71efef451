use super::IoError;
use crate::cell::{CellParameters, CellState, Polynomial, SocBounds};
use crate::sim::{IntegratorSettings, PackConfig, SocPolicy, SolverMode, VoltageLimits};
use crate::solver::DEFAULT_SCALE_C;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAX_REDRAWS: usize = 10_000;

/// A polynomial written either as one number or as coefficients, highest
/// degree first.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawPolynomial {
    Constant(f64),
    Coefficients(Vec<f64>),
}

impl From<RawPolynomial> for Polynomial {
    fn from(raw: RawPolynomial) -> Self {
        match raw {
            RawPolynomial::Constant(c) => Polynomial::constant(c),
            RawPolynomial::Coefficients(c) => Polynomial::new(c),
        }
    }
}

impl From<&Polynomial> for RawPolynomial {
    fn from(p: &Polynomial) -> Self {
        match p.coefficients() {
            [c] => RawPolynomial::Constant(*c),
            cs => RawPolynomial::Coefficients(cs.to_vec()),
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCell {
    capacity_Ah: f64,
    rc_capacitance_F: f64,
    rc_resistance_ohm: RawPolynomial,
    series_resistance_ohm: RawPolynomial,
    ocv_V: RawPolynomial,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    soc_bounds: Option<[f64; 2]>,
    /// Repeat this entry `count` times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    z: f64,
    #[serde(default)]
    w: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampledParameters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    series_resistance_ohm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rc_resistance_ohm: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampling {
    seed: u64,
    means: SampledParameters,
    stds: SampledParameters,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    cells: Vec<RawCell>,
    #[serde(rename = "interconnect_R", default)]
    interconnect: Vec<f64>,
    solver_mode: SolverMode,
    #[serde(default = "default_scale_c")]
    scale_c: f64,
    integrator: IntegratorSettings,
    initial_states: Vec<RawState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sampling: Option<RawSampling>,
    #[serde(default, skip_serializing_if = "VoltageLimits::is_empty")]
    limits: VoltageLimits,
    #[serde(default)]
    soc_policy: SocPolicy,
    #[serde(default = "default_output_every")]
    output_every: usize,
    /// Seed the expanded cells were drawn with; informational.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sampling_seed: Option<u64>,
}

fn default_scale_c() -> f64 {
    DEFAULT_SCALE_C
}

fn default_output_every() -> usize {
    1
}

/// Reads and validates a pack config.
pub fn load_config(path: impl AsRef<Path>) -> Result<PackConfig, IoError> {
    load_config_with_seed(path, None)
}

/// Like [`load_config`], but `seed` replaces the sampling seed in the file.
pub fn load_config_with_seed(path: impl AsRef<Path>, seed: Option<u64>) -> Result<PackConfig, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| IoError::fs(path, e))?;
    parse_config(&text, path, seed)
}

/// Parses a config from JSON text; `path` only labels error messages.
pub fn parse_config(text: &str, path: &Path, seed: Option<u64>) -> Result<PackConfig, IoError> {
    let schema = |field: &str, message: String| IoError::Schema {
        path: path.to_path_buf(),
        field: field.to_string(),
        message,
    };
    let invalid = |message: String| IoError::Validation {
        path: path.to_path_buf(),
        message,
    };

    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        schema(&field, e.into_inner().to_string())
    })?;

    let mut cells = Vec::new();
    for (idx, rc) in raw.cells.iter().enumerate() {
        let bounds = match rc.soc_bounds {
            Some([min, max]) => SocBounds { min, max },
            None => SocBounds::default(),
        };
        let cell = CellParameters::new(
            rc.capacity_Ah,
            rc.rc_capacitance_F,
            rc.rc_resistance_ohm.clone().into(),
            rc.series_resistance_ohm.clone().into(),
            rc.ocv_V.clone().into(),
            bounds,
        )
        .map_err(|e| invalid(format!("cells[{idx}]: {e}")))?;
        let count = rc.count.unwrap_or(1);
        if count == 0 {
            return Err(schema(&format!("cells[{idx}].count"), "count must be at least 1".into()));
        }
        cells.extend(std::iter::repeat_n(cell, count));
    }
    let n = cells.len();
    if n == 0 {
        return Err(schema("cells", "at least one cell is required".into()));
    }

    let mut used_seed = raw.sampling_seed;
    if let Some(sampling) = &raw.sampling {
        let seed = seed.unwrap_or(sampling.seed);
        cells = sample_cells(cells, sampling, seed).map_err(&invalid)?;
        used_seed = Some(seed);
    } else if seed.is_some() {
        log::warn!("{}: no sampling block, ignoring the seed override", path.display());
    }

    if !raw.interconnect.is_empty() && raw.interconnect.len() != n - 1 {
        return Err(schema(
            "interconnect_R",
            format!(
                "{n} cells need {} values (R_2..R_n), got {}",
                n - 1,
                raw.interconnect.len()
            ),
        ));
    }
    let initial_states: Vec<CellState> = match raw.initial_states.len() {
        1 => vec![CellState::new(raw.initial_states[0].z, raw.initial_states[0].w); n],
        len if len == n => raw
            .initial_states
            .iter()
            .map(|s| CellState::new(s.z, s.w))
            .collect(),
        len => {
            return Err(schema(
                "initial_states",
                format!("expected 1 or {n} entries, got {len}"),
            ))
        }
    };

    let config = PackConfig {
        cells,
        interconnect: raw.interconnect,
        solver_mode: raw.solver_mode,
        scale_c: raw.scale_c,
        integrator: raw.integrator,
        initial_states,
        limits: raw.limits,
        soc_policy: raw.soc_policy,
        output_every: raw.output_every,
        seed: used_seed,
    };
    config.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(config)
}

/// Replaces every sampled parameter with a constant drawn from a seeded
/// Gaussian; non-positive draws are redrawn.
fn sample_cells(
    cells: Vec<CellParameters>,
    sampling: &RawSampling,
    seed: u64,
) -> Result<Vec<CellParameters>, String> {
    let dist = |name: &str, mean: Option<f64>, std: Option<f64>| -> Result<Option<Normal<f64>>, String> {
        match (mean, std) {
            (None, None) => Ok(None),
            (Some(m), Some(s)) => Normal::new(m, s)
                .map(Some)
                .map_err(|e| format!("sampling.{name}: {e}")),
            _ => Err(format!("sampling.{name} needs both a mean and a std")),
        }
    };
    let series = dist(
        "series_resistance_ohm",
        sampling.means.series_resistance_ohm,
        sampling.stds.series_resistance_ohm,
    )?;
    let rc = dist(
        "rc_resistance_ohm",
        sampling.means.rc_resistance_ohm,
        sampling.stds.rc_resistance_ohm,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |d: &Normal<f64>| -> Result<f64, String> {
        for _ in 0..MAX_REDRAWS {
            let x = d.sample(&mut rng);
            if x > 0.0 {
                return Ok(x);
            }
        }
        Err(format!("no positive draw from N({}, {}) after {MAX_REDRAWS} tries", d.mean(), d.std_dev()))
    };
    let mut out = Vec::with_capacity(cells.len());
    for (k, cell) in cells.into_iter().enumerate() {
        let series_r = match &series {
            Some(d) => Polynomial::constant(draw(d)?),
            None => cell.series_resistance.clone(),
        };
        let rc_r = match &rc {
            Some(d) => Polynomial::constant(draw(d)?),
            None => cell.rc_resistance.clone(),
        };
        let sampled = CellParameters::new(
            cell.capacity_ah(),
            cell.rc_capacitance,
            rc_r,
            series_r,
            cell.ocv.clone(),
            cell.soc_bounds,
        )
        .map_err(|e| format!("sampled cell {}: {e}", k + 1))?;
        out.push(sampled);
    }
    Ok(out)
}

/// Serializes `config` with one entry per cell and no sampling block, so
/// sampled packs reload to identical parameters.
pub fn to_json(config: &PackConfig) -> String {
    let raw = RawConfig {
        cells: config
            .cells
            .iter()
            .map(|c| RawCell {
                capacity_Ah: c.capacity_ah(),
                rc_capacitance_F: c.rc_capacitance,
                rc_resistance_ohm: (&c.rc_resistance).into(),
                series_resistance_ohm: (&c.series_resistance).into(),
                ocv_V: (&c.ocv).into(),
                soc_bounds: (c.soc_bounds != SocBounds::default()).then_some([c.soc_bounds.min, c.soc_bounds.max]),
                count: None,
            })
            .collect(),
        interconnect: config.interconnect.clone(),
        solver_mode: config.solver_mode,
        scale_c: config.scale_c,
        integrator: config.integrator,
        initial_states: config
            .initial_states
            .iter()
            .map(|s| RawState {
                z: s.soc,
                w: s.relaxation,
            })
            .collect(),
        sampling: None,
        limits: config.limits,
        soc_policy: config.soc_policy,
        output_every: config.output_every,
        sampling_seed: config.seed,
    };
    serde_json::to_string_pretty(&raw).expect("config serialization cannot fail")
}

pub fn write_config(config: &PackConfig, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    std::fs::write(path, to_json(config) + "\n").map_err(|e| IoError::fs(path, e))
}
