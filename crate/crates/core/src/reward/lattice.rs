//! Discrete coefficient intervals.
//!
//! Values are kept as integer multiples of a decimal scale so that lattice
//! points such as `-0.7` come out as the nearest `f64` to the decimal rather
//! than an accumulated `-1.0 + 3 * 0.1`.

use serde::{Deserialize, Serialize};

/// Maximum number of decimal digits accepted for a bound or step.
const MAX_DECIMALS: u32 = 6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LatticeError {
    #[error("bound is not finite")]
    NonFinite,
    #[error("min {min} is greater than max {max}")]
    Inverted { min: f64, max: f64 },
    #[error("step must be positive, got {0}")]
    BadStep(f64),
    #[error("value {0} has more than {MAX_DECIMALS} decimal digits")]
    TooPrecise(f64),
}

/// Closed interval `[min, max]` discretized with a fixed step, starting at `min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntervalSpec", into = "IntervalSpec")]
pub struct Lattice {
    min_units: i64,
    max_units: i64,
    step_units: i64,
    scale: i64,
}

/// Human-facing form used in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl TryFrom<IntervalSpec> for Lattice {
    type Error = LatticeError;

    fn try_from(spec: IntervalSpec) -> Result<Self, Self::Error> {
        Lattice::new(spec.min, spec.max, spec.step)
    }
}

impl From<Lattice> for IntervalSpec {
    fn from(l: Lattice) -> Self {
        IntervalSpec {
            min: l.min(),
            max: l.max(),
            step: l.step(),
        }
    }
}

fn decimals_needed(v: f64) -> Option<u32> {
    (0..=MAX_DECIMALS).find(|&d| {
        let s = v * 10f64.powi(d as i32);
        (s - s.round()).abs() < 1e-7 * s.abs().max(1.0)
    })
}

impl Lattice {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self, LatticeError> {
        if !(min.is_finite() && max.is_finite() && step.is_finite()) {
            return Err(LatticeError::NonFinite);
        }
        if min > max {
            return Err(LatticeError::Inverted { min, max });
        }
        if step <= 0.0 {
            return Err(LatticeError::BadStep(step));
        }
        let mut digits = 0;
        for v in [min, max, step] {
            digits = digits.max(decimals_needed(v).ok_or(LatticeError::TooPrecise(v))?);
        }
        let scale = 10i64.pow(digits);
        let to_units = |v: f64| (v * scale as f64).round() as i64;
        Ok(Lattice {
            min_units: to_units(min),
            max_units: to_units(max),
            step_units: to_units(step),
            scale,
        })
    }

    /// Degenerate single-point lattice.
    pub fn point(v: f64) -> Result<Self, LatticeError> {
        Lattice::new(v, v, 1.0)
    }

    pub fn min(&self) -> f64 {
        self.min_units as f64 / self.scale as f64
    }

    pub fn max(&self) -> f64 {
        self.max_units as f64 / self.scale as f64
    }

    pub fn step(&self) -> f64 {
        self.step_units as f64 / self.scale as f64
    }

    pub fn midpoint(&self) -> f64 {
        (self.min() + self.max()) / 2.0
    }

    pub fn half_width(&self) -> f64 {
        (self.max() - self.min()) / 2.0
    }

    /// Largest absolute bound; the normalizer applied to coefficients.
    pub fn max_abs_bound(&self) -> f64 {
        self.min().abs().max(self.max().abs())
    }

    /// Number of lattice points: `min, min + step, ...` not exceeding `max`.
    pub fn len(&self) -> u64 {
        ((self.max_units - self.min_units) / self.step_units) as u64 + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The `k`-th lattice point. Panics if `k >= len()`.
    pub fn value(&self, k: u64) -> f64 {
        assert!(k < self.len(), "lattice index {k} out of range");
        (self.min_units + k as i64 * self.step_units) as f64 / self.scale as f64
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min() && v <= self.max()
    }

    /// Whether `v` is (numerically) one of the lattice points.
    pub fn is_on_lattice(&self, v: f64) -> bool {
        if !self.contains(v) {
            return false;
        }
        let k = ((v * self.scale as f64).round() as i64 - self.min_units) as f64
            / self.step_units as f64;
        let k_round = k.round();
        k_round >= 0.0 && (k - k_round).abs() < 1e-9 && self.value(k_round as u64) == v
    }

    /// Lattice point nearest to `num / den * max`, rounding halves upward.
    /// Computed in integer units so that ties are detected exactly.
    pub fn fraction_of_max(&self, num: i64, den: i64) -> f64 {
        assert!(den > 0);
        // index = (max*num/den - min) / step, in rational form.
        let numer = self.max_units * num - self.min_units * den;
        let denom = self.step_units * den;
        let k = (2 * numer + denom).div_euclid(2 * denom);
        let k = k.clamp(0, self.len() as i64 - 1);
        self.value(k as u64)
    }

    /// Same step, bounds pushed out to `midpoint ± factor * half_width`.
    /// The lower bound stays aligned with the original lattice.
    pub fn widened(&self, factor: f64) -> Lattice {
        assert!(factor >= 1.0 && factor.is_finite());
        let half_units = (self.max_units - self.min_units) as f64 / 2.0;
        let extra = ((factor - 1.0) * half_units / self.step_units as f64).floor() as i64;
        Lattice {
            min_units: self.min_units - extra * self.step_units,
            max_units: self.max_units + extra * self.step_units,
            step_units: self.step_units,
            scale: self.scale,
        }
    }
}
