//! The Pomeau–Manneville family and its parameter schedules.
//!
//! `T_β(x) = x + 2^β x^{1+β}` on `[0, 1/2]` and `2x − 1` on `(1/2, 1]`. The
//! point `x = 1/2` belongs to the left branch, so `T_β(1/2) = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quenched::{Driver, DriverSpec};

/// Largest admissible `alpha_max` (exclusive).
pub const ALPHA_CEILING: f64 = 0.5;

/// One map of the family together with the exponent bound it lives under.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmParam {
    beta: f64,
    alpha_max: f64,
}

impl PmParam {
    /// Requires `0 <= beta < alpha_max < 1/2`. `beta = 0` (the doubling map)
    /// is accepted for testing.
    pub fn new(beta: f64, alpha_max: f64) -> Result<Self> {
        if !(alpha_max > 0.0 && alpha_max < ALPHA_CEILING) {
            return Err(domain(format!("alpha_max {alpha_max} outside (0, 1/2)")));
        }
        if !(beta >= 0.0 && beta < alpha_max) {
            return Err(domain(format!("beta {beta} outside [0, alpha_max = {alpha_max})")));
        }
        Ok(PmParam { beta, alpha_max })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }

    /// Apply the map without range checks. Hot path for orbit iteration.
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        lsv(self.beta, x)
    }

    /// True when the branch used at `x` is an exact binary shift in floating
    /// point (the right branch always, the left branch when `beta == 0`).
    #[inline]
    pub fn is_shift_at(&self, x: f64) -> bool {
        x > 0.5 || self.beta == 0.0
    }

    /// Inverse of the left branch: the unique `x` in `[0, 1/2]` with
    /// `T(x) = y`, by bisection.
    pub fn left_inverse(&self, y: f64) -> f64 {
        left_inverse(self.beta, y)
    }
}

/// Raw branch formula for any `beta >= 0`; no validation.
///
/// The left branch is evaluated as `x + x·(2x)^β`, which is the same
/// expression as `x + 2^β x^{1+β}` but returns exactly 1 at `x = 1/2`.
#[inline]
pub fn lsv(beta: f64, x: f64) -> f64 {
    if x <= 0.5 {
        let y = x + x * (2.0 * x).powf(beta);
        y.min(1.0)
    } else {
        2.0 * x - 1.0
    }
}

/// Checked map evaluation.
pub fn pm_map(p: &PmParam, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain(format!("x = {x} outside [0, 1]")));
    }
    Ok(p.apply(x))
}

/// Bisection for the left-branch inverse; stops once the bracket is below
/// 1e-15 or an exact root is hit.
pub fn left_inverse(beta: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if y >= 1.0 {
        return 0.5;
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let v = lsv(beta, mid);
        if v == y {
            return mid;
        }
        if v < y {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// JSON description of a schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant {
        beta: f64,
        alpha_max: f64,
    },
    /// Finite list; indices past the end repeat the last entry.
    List {
        betas: Vec<f64>,
        alpha_max: f64,
    },
    Periodic {
        betas: Vec<f64>,
        alpha_max: f64,
    },
    Driver {
        driver: DriverSpec,
        alpha_max: f64,
        seed: u64,
        /// Fiber index: the schedule follows `σ^omega ω₀`.
        #[serde(default)]
        omega: i64,
    },
}

#[derive(Clone, Debug)]
enum Source {
    Constant(PmParam),
    List(Vec<PmParam>),
    Periodic(Vec<PmParam>),
    Driver(Driver),
}

/// A sequence of maps `T_1, T_2, …`, composed as `T^n = T_n ∘ … ∘ T_1`.
///
/// Indices are 1-based like the maps they label. `offset` shifts the whole
/// sequence, which is how a driver-fed schedule moves along its fibers.
#[derive(Clone, Debug)]
pub struct MapSchedule {
    source: Source,
    alpha_max: f64,
    offset: i64,
}

fn params(betas: &[f64], alpha_max: f64) -> Result<Vec<PmParam>> {
    if betas.is_empty() {
        return Err(Error::Schedule("empty beta list".into()));
    }
    betas
        .iter()
        .map(|&b| PmParam::new(b, alpha_max).map_err(|e| Error::Schedule(e.to_string())))
        .collect()
}

impl MapSchedule {
    /// Build a schedule from its JSON description.
    pub fn from_spec(spec: &ScheduleSpec) -> Result<Self> {
        match spec {
            ScheduleSpec::Constant { beta, alpha_max } => Self::constant(*beta, *alpha_max),
            ScheduleSpec::List { betas, alpha_max } => Self::list(betas, *alpha_max),
            ScheduleSpec::Periodic { betas, alpha_max } => Self::periodic(betas, *alpha_max),
            ScheduleSpec::Driver { driver, alpha_max, seed, omega } => {
                let d = Driver::new(driver, *alpha_max, *seed)?;
                Ok(Self::from_driver(d).shifted(*omega))
            }
        }
    }

    pub fn constant(beta: f64, alpha_max: f64) -> Result<Self> {
        let p = PmParam::new(beta, alpha_max).map_err(|e| Error::Schedule(e.to_string()))?;
        Ok(MapSchedule { source: Source::Constant(p), alpha_max, offset: 0 })
    }

    pub fn list(betas: &[f64], alpha_max: f64) -> Result<Self> {
        Ok(MapSchedule { source: Source::List(params(betas, alpha_max)?), alpha_max, offset: 0 })
    }

    pub fn periodic(betas: &[f64], alpha_max: f64) -> Result<Self> {
        Ok(MapSchedule { source: Source::Periodic(params(betas, alpha_max)?), alpha_max, offset: 0 })
    }

    /// `T_k = T_{β(σ^{k-1} ω₀)}`.
    pub fn from_driver(driver: Driver) -> Self {
        let alpha_max = driver.alpha_max();
        MapSchedule { source: Source::Driver(driver), alpha_max, offset: 0 }
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }

    /// The schedule seen from `by` steps later: `shifted(j).map(k) == map(k + j)`.
    /// Negative shifts are allowed for periodic, constant and driver schedules.
    pub fn shifted(&self, by: i64) -> Self {
        MapSchedule { offset: self.offset + by, ..self.clone() }
    }

    /// The map `T_k`. Every schedule kind is defined for all integer indices
    /// (lists clamp to their ends), so shifted schedules stay total.
    pub fn map(&self, k: i64) -> PmParam {
        let idx = k + self.offset;
        match &self.source {
            Source::Constant(p) => *p,
            Source::List(v) => v[(idx - 1).clamp(0, v.len() as i64 - 1) as usize],
            Source::Periodic(v) => v[(idx - 1).rem_euclid(v.len() as i64) as usize],
            Source::Driver(d) => d.param_at(idx - 1),
        }
    }

    pub fn beta(&self, k: i64) -> f64 {
        self.map(k).beta()
    }

    /// `T_1, …, T_n` materialized for hot loops.
    pub fn maps(&self, n: usize) -> Vec<PmParam> {
        (1..=n as i64).map(|k| self.map(k)).collect()
    }

    /// The single map of a constant schedule, if this is one.
    pub fn stationary(&self) -> Option<PmParam> {
        match &self.source {
            Source::Constant(p) => Some(*p),
            Source::Periodic(v) | Source::List(v) if v.iter().all(|p| *p == v[0]) => Some(v[0]),
            Source::Driver(d) if d.atoms().iter().all(|p| *p == d.atoms()[0]) => Some(d.atoms()[0]),
            _ => None,
        }
    }
}
