//! Decay-of-correlation integrands evaluated with Ulam operators.
//!
//! (A1)–(A3) are the sequential conditions with Lebesgue reference measure
//! and centering by the push-forward `P^k 1`. (A4)–(A6) are their stationary
//! forms, taken with respect to the invariant density `h` of the single map
//! (the Ulam fixed point), i.e. `∫|P_μ^n u| dμ = ∫|P^n(u h)| dm`.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::fit::log_log;
use crate::maps::MapSchedule;
use crate::observable::Observable;
use crate::ulam::{OperatorCache, Pushforward, UlamOperator};

/// Values below this are treated as numerically zero and left out of fits.
pub const NOISE_FLOOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayKind {
    A1,
    A2,
    A3,
    A4,
    A5,
    A6,
}

impl DecayKind {
    pub fn is_stationary(self) -> bool {
        matches!(self, DecayKind::A4 | DecayKind::A5 | DecayKind::A6)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub kind: DecayKind,
    pub alpha: f64,
    pub n_bins: usize,
    /// `(n, ∫|integrand_n|)`.
    pub points: Vec<(usize, f64)>,
    /// For (A4): `(n, ∫ φ·P^n(φh) dm)` summed over components, i.e. the
    /// trace of the lag-`n` autocovariance. Empty for other kinds.
    pub correlations: Vec<(usize, f64)>,
    /// `n` values dropped from the fit because the norm fell below the floor.
    pub truncated: Vec<usize>,
    /// `None` when fewer than two points survive the floor.
    pub fitted_slope: Option<f64>,
    pub fit_range: (usize, usize),
    pub target_slope: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct DecayRequest {
    pub kind: DecayKind,
    pub i: usize,
    pub j: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub n_bins: usize,
    pub slack: f64,
}

impl DecayRequest {
    pub fn new(kind: DecayKind, n_min: usize, n_max: usize, n_bins: usize) -> Self {
        DecayRequest { kind, i: 0, j: 0, n_min, n_max, n_bins, slack: 1.0 }
    }
}

/// `-(1/α - 1)`.
pub fn target_slope(alpha: f64) -> f64 {
    -(1.0 / alpha - 1.0)
}

/// Grid function with `d` (or `d²`) components, all on the same bins.
pub(crate) type Field = Vec<Vec<f64>>;

pub(crate) fn push(op: &UlamOperator, f: &mut Field, scratch: &mut Vec<f64>) {
    for c in f.iter_mut() {
        op.apply_in_place(c, scratch);
    }
}

/// `∫ |f(x)| dm` with the pointwise Euclidean (Frobenius) norm over components.
pub(crate) fn field_l1(f: &Field) -> f64 {
    let n = f[0].len();
    (0..n).map(|b| f.iter().map(|c| c[b] * c[b]).sum::<f64>().sqrt()).sum::<f64>() / n as f64
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

/// `φ − ∫ φ·w dm` for each component.
pub(crate) fn center(samples: &Field, weight: &[f64]) -> Field {
    samples
        .iter()
        .map(|c| {
            let m = dot(c, weight);
            c.iter().map(|v| v - m).collect()
        })
        .collect()
}

fn times(f: &Field, w: &[f64]) -> Field {
    f.iter().map(|c| c.iter().zip(w).map(|(a, b)| a * b).collect()).collect()
}

/// `Σ a_r ⊗ b_s − weight·∫(a_r b_s) dm`, flattened row-major.
fn outer_centered(a: &Field, b: &Field, weight: &[f64], inner: &[f64]) -> Field {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for ar in a {
        for bs in b {
            let prod: Vec<f64> = ar.iter().zip(bs).zip(inner).map(|((x, y), w)| x * y * w).collect();
            let m = prod.iter().sum::<f64>() / prod.len() as f64;
            out.push(prod.iter().zip(weight).map(|(p, w)| p - m * w).collect());
        }
    }
    out
}

/// Evaluate the integrand of the selected assumption for `n` in
/// `[n_min, n_max]` and fit its log–log slope (`check_decay`).
pub fn check_decay(s: &MapSchedule, phi: &Observable, req: &DecayRequest) -> Result<DecayReport> {
    if req.n_min == 0 || req.n_max < req.n_min {
        return Err(param("need 1 <= n_min <= n_max"));
    }
    let cache = OperatorCache::new(req.n_bins)?;
    let nb = req.n_bins;
    let samples = phi.sample_bins(nb);
    let mut scratch = vec![0.0; nb];
    let mut points = Vec::new();
    let mut correlations = Vec::new();

    // Starting field and the time index of the first operator applied.
    let (mut field, first_op, phi_c): (Field, i64, Option<Field>) = if req.kind.is_stationary() {
        let p = s.stationary().ok_or_else(|| param("(A4)-(A6) need a constant schedule"))?;
        let op = cache.get(&p);
        let (h, _) = op.fixed_density(1e-14, 200_000);
        let h = h.into_values();
        let phi_t = center(&samples, &h);
        let f = match req.kind {
            DecayKind::A4 => times(&phi_t, &h),
            DecayKind::A5 => outer_centered(&phi_t, &phi_t, &h, &h),
            _ => {
                let mut pj = times(&phi_t, &h);
                for _ in 0..req.j {
                    push(&op, &mut pj, &mut scratch);
                }
                outer_centered(&pj, &phi_t, &h, &vec![1.0; nb])
            }
        };
        (f, 1, Some(phi_t))
    } else {
        let mut pf = Pushforward::new(s, &cache);
        pf.advance_to(req.i as i64);
        let di = pf.density().to_vec();
        let phi_i = center(&samples, &di);
        let f = match req.kind {
            DecayKind::A1 => times(&phi_i, &di),
            DecayKind::A2 => outer_centered(&phi_i, &phi_i, &di, &di),
            _ => {
                let mut g = times(&phi_i, &di);
                for k in 1..=req.j as i64 {
                    push(&cache.step(s, req.i as i64 + k), &mut g, &mut scratch);
                }
                pf.advance_to((req.i + req.j) as i64);
                let dij = pf.density().to_vec();
                let phi_ij = center(&samples, &dij);
                outer_centered(&g, &phi_ij, &dij, &vec![1.0; nb])
            }
        };
        let start = match req.kind {
            DecayKind::A3 => (req.i + req.j) as i64 + 1,
            _ => req.i as i64 + 1,
        };
        (f, start, None)
    };

    for n in 1..=req.n_max {
        let op = cache.step(s, first_op + n as i64 - 1);
        push(&op, &mut field, &mut scratch);
        if n >= req.n_min {
            points.push((n, field_l1(&field)));
            if let (DecayKind::A4, Some(pc)) = (req.kind, &phi_c) {
                correlations.push((n, pc.iter().zip(&field).map(|(a, b)| dot(a, b)).sum()));
            }
        }
    }

    let alpha = s.alpha_max();
    let pts: Vec<(f64, f64)> = points.iter().map(|&(n, v)| (n as f64, v)).collect();
    let (fit, dropped) = log_log(&pts, NOISE_FLOOR);
    let target = target_slope(alpha);
    let fitted_slope = fit.map(|f| f.slope);
    let pass = match fitted_slope {
        Some(sl) => sl <= target + req.slack,
        // Everything below the floor: decayed faster than any power.
        None => points.iter().all(|p| p.1 <= NOISE_FLOOR) || points.len() < 2,
    };
    Ok(DecayReport {
        kind: req.kind,
        alpha,
        n_bins: nb,
        points,
        correlations,
        truncated: dropped.iter().map(|&n| n as usize).collect(),
        fitted_slope,
        fit_range: (req.n_min, req.n_max),
        target_slope: target,
        slack: req.slack,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doubling() -> MapSchedule {
        MapSchedule::constant(0.0, 0.25).unwrap()
    }

    #[test]
    fn constant_observable_has_no_signal() {
        for kind in [DecayKind::A1, DecayKind::A2, DecayKind::A3, DecayKind::A4, DecayKind::A5, DecayKind::A6] {
            let s = MapSchedule::constant(0.2, 0.3).unwrap();
            let mut req = DecayRequest::new(kind, 1, 30, 256);
            req.i = 3;
            req.j = 2;
            let r = check_decay(&s, &Observable::constant(0.7), &req).unwrap();
            assert!(r.points.iter().all(|p| p.1 < 1e-12), "{kind:?}");
            assert!(r.pass);
        }
    }

    #[test]
    fn doubling_correlations_match_closed_form() {
        // Riemann-sum oracle for Cov_n = ∫(x−1/2)((2ⁿx mod 1)−1/2)dx
        let riemann = |n: u32| {
            let m = 1 << 22;
            (0..m)
                .map(|k| {
                    let x = (k as f64 + 0.5) / m as f64;
                    let y = (x * (1u64 << n) as f64).fract();
                    (x - 0.5) * (y - 0.5)
                })
                .sum::<f64>()
                / m as f64
        };
        let r = check_decay(&doubling(), &Observable::linear(1.0, -0.5), &DecayRequest::new(DecayKind::A4, 1, 8, 1 << 16)).unwrap();
        for &(n, c) in &r.correlations {
            let exact = 2f64.powi(-(n as i32)) / 12.0;
            assert!((riemann(n as u32) - exact).abs() < 1e-6 * exact.max(1e-3));
            assert!((c - exact).abs() < 0.01 * exact, "n {n}: {c} vs {exact}");
        }
        // and the L¹ norm of Pⁿ(x − 1/2) = (x − 1/2)/2ⁿ is 2⁻ⁿ/4
        for &(n, v) in &r.points {
            assert!((v - 0.25 * 2f64.powi(-(n as i32))).abs() < 1e-3 * v);
        }
        assert!(r.fitted_slope.unwrap() < -2.0 && r.pass);
    }

    #[test]
    fn sequential_kinds_run() {
        let s = MapSchedule::periodic(&[0.1, 0.25], 0.3).unwrap();
        for kind in [DecayKind::A1, DecayKind::A2, DecayKind::A3] {
            let mut req = DecayRequest::new(kind, 2, 40, 1024);
            req.i = 5;
            req.j = 3;
            let r = check_decay(&s, &Observable::linear(1.0, 0.0), &req).unwrap();
            assert_eq!(r.points.len(), 39);
            assert!(r.points.windows(2).all(|w| w[1].1 <= w[0].1 * 1.5 + 1e-15), "{kind:?}");
        }
    }

    #[test]
    fn stationary_kinds_need_constant_schedule() {
        let s = MapSchedule::periodic(&[0.1, 0.25], 0.3).unwrap();
        assert!(check_decay(&s, &Observable::linear(1.0, 0.0), &DecayRequest::new(DecayKind::A4, 1, 5, 64)).is_err());
    }
}
