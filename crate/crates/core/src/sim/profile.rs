use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("current profile has no breakpoints")]
    EmptyProfile,
    #[error("profile times must start at 0 and increase strictly (breakpoint {index}: t = {time} s)")]
    NonMonotoneTime { index: usize, time: f64 },
    #[error("profile value at breakpoint {index} is not finite")]
    NonFinite { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    #[default]
    ZeroOrderHold,
    Linear,
}

impl std::str::FromStr for Interpolation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "zero-order-hold" | "zoh" | "hold" => Ok(Self::ZeroOrderHold),
            "linear" => Ok(Self::Linear),
            other => Err(format!("unknown interpolation '{other}'")),
        }
    }
}

impl std::fmt::Display for Interpolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ZeroOrderHold => "zero-order-hold",
            Self::Linear => "linear",
        })
    }
}

/// Applied pack current `I(t)` as breakpoints `(t_s, I_A)`.
///
/// A zero-order-hold profile keeps its last value forever. A linear profile
/// ends at its last breakpoint, except a single-point profile, which is
/// constant.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentProfile {
    times: Vec<f64>,
    currents: Vec<f64>,
    interpolation: Interpolation,
}

impl CurrentProfile {
    pub fn new(
        breakpoints: Vec<(f64, f64)>,
        interpolation: Interpolation,
    ) -> Result<Self, ProfileError> {
        if breakpoints.is_empty() {
            return Err(ProfileError::EmptyProfile);
        }
        for (index, &(t, i)) in breakpoints.iter().enumerate() {
            if !(t.is_finite() && i.is_finite()) {
                return Err(ProfileError::NonFinite { index });
            }
            let ok = if index == 0 {
                t == 0.0
            } else {
                t > breakpoints[index - 1].0
            };
            if !ok {
                return Err(ProfileError::NonMonotoneTime { index, time: t });
            }
        }
        let (times, currents) = breakpoints.into_iter().unzip();
        Ok(Self {
            times,
            currents,
            interpolation,
        })
    }

    pub fn constant(current: f64) -> Self {
        Self {
            times: vec![0.0],
            currents: vec![current],
            interpolation: Interpolation::ZeroOrderHold,
        }
    }

    /// Same breakpoints with every current multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            currents: self.currents.iter().map(|i| i * factor).collect(),
            ..self.clone()
        }
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.currents.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Last time the profile defines a current for.
    pub fn coverage_end(&self) -> f64 {
        match self.interpolation {
            Interpolation::ZeroOrderHold => f64::INFINITY,
            Interpolation::Linear if self.times.len() == 1 => f64::INFINITY,
            Interpolation::Linear => *self.times.last().unwrap(),
        }
    }

    /// Index of the segment containing `t`: the last breakpoint `≤ t`.
    pub fn segment_at(&self, t: f64) -> usize {
        self.times.partition_point(|&b| b <= t).saturating_sub(1)
    }

    /// First breakpoint strictly after `t`.
    pub fn next_breakpoint(&self, t: f64) -> Option<f64> {
        let idx = self.times.partition_point(|&b| b <= t);
        self.times.get(idx).copied()
    }

    /// Current at `t` using the formula of `segment`. Integrators pass the
    /// segment their step started in, so a step that ends on a breakpoint
    /// sees the left limit there.
    pub fn eval_in_segment(&self, segment: usize, t: f64) -> f64 {
        let i0 = self.currents[segment];
        match self.interpolation {
            Interpolation::ZeroOrderHold => i0,
            Interpolation::Linear => match (self.times.get(segment + 1), self.currents.get(segment + 1)) {
                (Some(&t1), Some(&i1)) => {
                    let t0 = self.times[segment];
                    i0 + (i1 - i0) * (t - t0) / (t1 - t0)
                }
                _ => i0,
            },
        }
    }

    /// Right-continuous value at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        self.eval_in_segment(self.segment_at(t), t)
    }

    /// Exact `∫ I dt` over `[t0, t1]`.
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        if t1 < t0 {
            return -self.integral(t1, t0);
        }
        let mut total = 0.0;
        let mut a = t0;
        while a < t1 {
            let seg = self.segment_at(a);
            let b = self.next_breakpoint(a).map_or(t1, |nb| nb.min(t1));
            total += match self.interpolation {
                Interpolation::ZeroOrderHold => self.currents[seg] * (b - a),
                Interpolation::Linear => 0.5 * (self.eval_in_segment(seg, a) + self.eval_in_segment(seg, b)) * (b - a),
            };
            a = b;
        }
        total
    }
}
