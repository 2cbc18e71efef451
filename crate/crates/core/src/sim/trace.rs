use crate::solver::BranchSolution;

/// Solver health at one stored sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDiagnostics {
    pub log10_beta_2: Option<f64>,
    pub psi_2: Option<f64>,
    pub kcl_residual: f64,
    pub max_kvl_residual: f64,
}

impl StepDiagnostics {
    pub fn from_solution(solution: &BranchSolution) -> Self {
        Self {
            log10_beta_2: solution.recurrence.map(|r| r.log10_beta_2),
            psi_2: solution.recurrence.map(|r| r.psi_2),
            kcl_residual: solution.kcl_residual,
            max_kvl_residual: solution.max_kvl_residual(),
        }
    }
}

/// One stored time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub time: f64,
    pub applied_current: f64,
    pub currents: Vec<f64>,
    pub soc: Vec<f64>,
    pub relaxation: Vec<f64>,
    /// Terminal voltages `v̄_k + r_k i_k`.
    pub cell_voltages: Vec<f64>,
    pub pack_voltage: f64,
    pub diagnostics: StepDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    SocOutOfBounds { time: f64, cell: usize, soc: f64 },
    VoltageLimit { time: f64, voltage: f64, limit: f64 },
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Completed => f.write_str("completed"),
            Self::SocOutOfBounds { time, cell, soc } => {
                write!(f, "cell {cell} left its SoC bounds (z = {soc:.6}) at t = {time:.3} s")
            }
            Self::VoltageLimit {
                time,
                voltage,
                limit,
            } => write!(
                f,
                "pack voltage {voltage:.4} V crossed the {limit:.4} V limit at t = {time:.3} s"
            ),
        }
    }
}

/// Time-indexed record of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub n_cells: usize,
    pub samples: Vec<TraceSample>,
    pub termination: Termination,
    /// Seed used to draw sampled cell parameters, if any.
    pub seed: Option<u64>,
    pub steps: usize,
    pub branch_solves: usize,
}

/// Per-cell quantity selector for [`SimulationTrace::cell_series`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellQuantity {
    Current,
    Soc,
    Relaxation,
    Voltage,
}

impl SimulationTrace {
    pub fn empty(n_cells: usize) -> Self {
        Self {
            n_cells,
            samples: Vec::new(),
            termination: Termination::Completed,
            seed: None,
            steps: 0,
            branch_solves: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn applied_currents(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.applied_current).collect()
    }

    pub fn pack_voltages(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.pack_voltage).collect()
    }

    /// Series of one quantity for cell `k` (0-based).
    pub fn cell_series(&self, k: usize, quantity: CellQuantity) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| match quantity {
                CellQuantity::Current => s.currents[k],
                CellQuantity::Soc => s.soc[k],
                CellQuantity::Relaxation => s.relaxation[k],
                CellQuantity::Voltage => s.cell_voltages[k],
            })
            .collect()
    }

    pub fn last(&self) -> Option<&TraceSample> {
        self.samples.last()
    }

    /// `max z − min z` at the last sample.
    pub fn final_soc_spread(&self) -> f64 {
        self.last().map_or(0.0, |s| {
            let (lo, hi) = s
                .soc
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &z| (lo.min(z), hi.max(z)));
            hi - lo
        })
    }

    /// Largest KCL or KVL residual over all samples.
    pub fn max_residual(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.diagnostics.kcl_residual.max(s.diagnostics.max_kvl_residual))
            .fold(0.0, f64::max)
    }

    /// Largest `|a − b| / max(1, |b|)` over every stored current, SoC,
    /// relaxation voltage and terminal voltage. Traces with different sample
    /// times compare as infinitely far apart.
    pub fn max_relative_difference(&self, other: &SimulationTrace) -> f64 {
        if self.n_cells != other.n_cells || self.len() != other.len() {
            return f64::INFINITY;
        }
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        let mut worst = 0.0f64;
        for (a, b) in self.samples.iter().zip(&other.samples) {
            if rel(a.time, b.time) > 1e-12 {
                return f64::INFINITY;
            }
            worst = worst.max(rel(a.pack_voltage, b.pack_voltage));
            for (xs, ys) in [
                (&a.currents, &b.currents),
                (&a.soc, &b.soc),
                (&a.relaxation, &b.relaxation),
                (&a.cell_voltages, &b.cell_voltages),
            ] {
                for (x, y) in xs.iter().zip(ys) {
                    worst = worst.max(rel(*x, *y));
                }
            }
        }
        worst
    }
}
