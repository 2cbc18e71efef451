//! Equivalent-circuit cell model: an OCV source, a series resistance and a
//! single RC pair.
//!
//! State is `(z, w)`: state of charge and the RC-pair (relaxation) voltage.
//! Positive current charges the cell.
//!
//! ```text
//!   dz/dt = i / Q
//!   dw/dt = -w / (F(z) C) + i / C
//!   v     = w + OCV(z) + r(z) i
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds per hour, for ampere-hour to coulomb conversion.
pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CellError {
    #[error("RC-pair resistance F(z) = {value} is not positive at z = {soc}")]
    NonpositiveRCResistance { soc: f64, value: f64 },
    #[error("invalid cell parameter: {0}")]
    InvalidParameter(String),
}

/// Real polynomial with coefficients stored highest degree first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coefficients: Vec<f64>,
}

impl Polynomial {
    /// Builds a polynomial from coefficients ordered highest degree first.
    /// An empty list is the zero polynomial.
    pub fn new(coefficients: Vec<f64>) -> Self {
        let coefficients = if coefficients.is_empty() {
            vec![0.0]
        } else {
            coefficients
        };
        Self { coefficients }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            coefficients: vec![value],
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Horner evaluation.
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        self.coefficients.iter().fold(0.0, |acc, &c| acc.mul_add(z, c))
    }

    /// Smallest and largest value over `[lo, hi]`, sampled on a grid plus the
    /// interval ends. Used only for parameter validation.
    pub(crate) fn sampled_range(&self, lo: f64, hi: f64) -> (f64, f64) {
        const SAMPLES: usize = 256;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for s in 0..=SAMPLES {
            let z = lo + (hi - lo) * s as f64 / SAMPLES as f64;
            let v = self.eval(z);
            min = min.min(v);
            max = max.max(v);
        }
        (min, max)
    }
}

/// Evaluates `p` at `z`.
pub fn eval_polynomial(p: &Polynomial, z: f64) -> f64 {
    p.eval(z)
}

/// Closed SoC interval the simulator keeps each cell inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for SocBounds {
    fn default() -> Self {
        Self { min: 0.0, max: 1.0 }
    }
}

impl SocBounds {
    pub fn contains(&self, z: f64, slack: f64) -> bool {
        z >= self.min - slack && z <= self.max + slack
    }

    pub fn clamp(&self, z: f64) -> f64 {
        z.clamp(self.min, self.max)
    }
}

/// Parameters of one equivalent-circuit cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParameters {
    capacity_ah: f64,
    capacity_as: f64,
    pub rc_capacitance: f64,
    pub rc_resistance: Polynomial,
    pub series_resistance: Polynomial,
    pub ocv: Polynomial,
    pub soc_bounds: SocBounds,
}

impl CellParameters {
    /// Validates and builds a cell. `capacity_ah` is in ampere-hours; it is
    /// converted to ampere-seconds here, once.
    pub fn new(
        capacity_ah: f64,
        rc_capacitance: f64,
        rc_resistance: Polynomial,
        series_resistance: Polynomial,
        ocv: Polynomial,
        soc_bounds: SocBounds,
    ) -> Result<Self, CellError> {
        if !(capacity_ah.is_finite() && capacity_ah > 0.0) {
            return Err(CellError::InvalidParameter(format!(
                "capacity must be positive, got {capacity_ah} Ah"
            )));
        }
        if !(rc_capacitance.is_finite() && rc_capacitance > 0.0) {
            return Err(CellError::InvalidParameter(format!(
                "RC capacitance must be positive, got {rc_capacitance} F"
            )));
        }
        if !(soc_bounds.min.is_finite() && soc_bounds.max.is_finite())
            || soc_bounds.min >= soc_bounds.max
        {
            return Err(CellError::InvalidParameter(format!(
                "SoC bounds [{}, {}] are not an interval",
                soc_bounds.min, soc_bounds.max
            )));
        }
        for (name, p) in [
            ("rc_resistance", &rc_resistance),
            ("series_resistance", &series_resistance),
            ("ocv", &ocv),
        ] {
            if p.coefficients().iter().any(|c| !c.is_finite()) {
                return Err(CellError::InvalidParameter(format!(
                    "{name} has a non-finite coefficient"
                )));
            }
        }
        let (r_min, _) = series_resistance.sampled_range(soc_bounds.min, soc_bounds.max);
        if r_min < 0.0 {
            return Err(CellError::InvalidParameter(format!(
                "series resistance reaches {r_min} Ω inside the SoC bounds"
            )));
        }
        let (f_min, _) = rc_resistance.sampled_range(soc_bounds.min, soc_bounds.max);
        if f_min <= 0.0 {
            return Err(CellError::InvalidParameter(format!(
                "RC resistance reaches {f_min} Ω inside the SoC bounds"
            )));
        }
        Ok(Self {
            capacity_ah,
            capacity_as: capacity_ah * SECONDS_PER_HOUR,
            rc_capacitance,
            rc_resistance,
            series_resistance,
            ocv,
            soc_bounds,
        })
    }

    pub fn capacity_ah(&self) -> f64 {
        self.capacity_ah
    }

    /// Capacity in ampere-seconds.
    pub fn capacity_as(&self) -> f64 {
        self.capacity_as
    }

    pub fn series_resistance_at(&self, z: f64) -> f64 {
        self.series_resistance.eval(z)
    }

    pub fn rc_resistance_at(&self, z: f64) -> f64 {
        self.rc_resistance.eval(z)
    }

    /// Copy of this cell with a different series-resistance polynomial.
    pub fn with_series_resistance(&self, series_resistance: Polynomial) -> Self {
        Self {
            series_resistance,
            ..self.clone()
        }
    }
}

/// State of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CellState {
    pub soc: f64,
    pub relaxation: f64,
}

impl CellState {
    pub fn new(soc: f64, relaxation: f64) -> Self {
        Self { soc, relaxation }
    }
}

/// Time derivative of a [`CellState`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CellDerivative {
    pub dsoc: f64,
    pub drelaxation: f64,
}

/// State-dependent voltage `w + OCV(z)`; excludes the ohmic drop.
pub fn state_voltage(params: &CellParameters, state: &CellState) -> f64 {
    state.relaxation + params.ocv.eval(state.soc)
}

/// Terminal voltage `w + OCV(z) + r(z) i`.
pub fn terminal_voltage(params: &CellParameters, state: &CellState, current: f64) -> f64 {
    state_voltage(params, state) + params.series_resistance_at(state.soc) * current
}

pub fn cell_derivative(
    params: &CellParameters,
    state: &CellState,
    current: f64,
) -> Result<CellDerivative, CellError> {
    let f = params.rc_resistance_at(state.soc);
    if !(f > 0.0) {
        return Err(CellError::NonpositiveRCResistance {
            soc: state.soc,
            value: f,
        });
    }
    let c = params.rc_capacitance;
    Ok(CellDerivative {
        dsoc: current / params.capacity_as,
        drelaxation: -state.relaxation / (f * c) + current / c,
    })
}
