//! Green–Kubo asymptotic covariance of a stationary PM map on the Ulam grid.

use serde::Serialize;

use crate::decay::{center, dot, push, Field, NOISE_FLOOR};
use crate::error::Result;
use crate::fit::least_squares;
use crate::linalg::Matrix;
use crate::maps::PmParam;
use crate::observable::Observable;
use crate::ulam::{DensityGrid, UlamOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailModel {
    /// Every late term is below the noise floor.
    Vanishing,
    Geometric,
    Power,
    /// Too few terms to fit.
    Unfitted,
}

#[derive(Clone, Debug, Serialize)]
pub struct GreenKubo {
    /// `C_0 + Σ_{i=1}^{n_terms} (C_i + C_iᵀ)`.
    pub sigma2: Matrix,
    /// Frobenius norms `|C_i|`, `i = 0..=n_terms`.
    pub terms: Vec<f64>,
    /// Trace of the partial sums.
    pub partial_traces: Vec<f64>,
    /// Estimate of the neglected `Σ_{i>n_terms} 2|C_i|`.
    pub tail_bound: f64,
    pub tail_model: TailModel,
    pub converged: bool,
}

/// `σ² = E(φφᵀ) + Σ_{i≥1} (E(φ·φᵀ∘Tⁱ) + transpose)` under the invariant
/// density (uniform for `β = 0`, the Ulam fixed point otherwise).
pub fn green_kubo(phi: &Observable, p: &PmParam, n_terms: usize, n_bins: usize) -> Result<GreenKubo> {
    let op = UlamOperator::new(p, n_bins)?;
    let h = if p.beta() == 0.0 { DensityGrid::uniform(n_bins) } else { op.fixed_density(1e-13, 200_000).0 };
    let h = h.normalized()?.into_values();
    let samples = phi.sample_bins(n_bins);
    let centered = center(&samples, &h);
    let d = phi.dim();
    let mut pushed: Field = centered.iter().map(|c| c.iter().zip(&h).map(|(a, b)| a * b).collect()).collect();
    let mut scratch = Vec::new();
    let cov = |pushed: &Field| -> Matrix {
        (0..d).map(|a| (0..d).map(|b| dot(&centered[b], &pushed[a])).collect()).collect()
    };
    let c0 = cov(&pushed);
    let mut sigma2 = c0.clone();
    let frob = |m: &Matrix| m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let trace = |m: &Matrix| (0..d).map(|a| m[a][a]).sum::<f64>();
    let mut terms = vec![frob(&c0)];
    let mut partial_traces = vec![trace(&sigma2)];
    for _ in 1..=n_terms {
        push(&op, &mut pushed, &mut scratch);
        let ci = cov(&pushed);
        for a in 0..d {
            for b in 0..d {
                sigma2[a][b] += ci[a][b] + ci[b][a];
            }
        }
        terms.push(frob(&ci));
        partial_traces.push(trace(&sigma2));
    }
    let (tail, model) = tail_estimate(&terms);
    let converged = model != TailModel::Unfitted && tail.is_finite();
    Ok(GreenKubo { sigma2, terms, partial_traces, tail_bound: 2.0 * tail, tail_model: model, converged })
}

/// Fit the second half of the term norms by a geometric and a power law;
/// keep the better fit and sum its tail. Infinite when the better fit does
/// not decay fast enough to be summable.
fn tail_estimate(terms: &[f64]) -> (f64, TailModel) {
    let n = terms.len() - 1;
    if n < 4 {
        return (f64::INFINITY, TailModel::Unfitted);
    }
    let late: Vec<(f64, f64)> =
        (n / 2..=n).filter(|&i| i >= 1 && terms[i] > NOISE_FLOOR).map(|i| (i as f64, terms[i].ln())).collect();
    if late.is_empty() {
        return (0.0, TailModel::Vanishing);
    }
    if late.len() < 3 {
        return (f64::INFINITY, TailModel::Unfitted);
    }
    let xs: Vec<f64> = late.iter().map(|p| p.0).collect();
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = late.iter().map(|p| p.1).collect();
    let rss = |x: &[f64], f: crate::fit::LineFit| {
        x.iter().zip(&ys).map(|(x, y)| (y - f.intercept - f.slope * x).powi(2)).sum::<f64>()
    };
    let (Some(geo), Some(pow)) = (least_squares(&xs, &ys), least_squares(&lx, &ys)) else {
        return (f64::INFINITY, TailModel::Unfitted);
    };
    let last = terms[n].max(NOISE_FLOOR);
    if rss(&xs, geo) <= rss(&lx, pow) {
        let r = geo.slope.exp();
        let tail = if r < 1.0 { last * r / (1.0 - r) } else { f64::INFINITY };
        (tail, TailModel::Geometric)
    } else {
        let tail = if pow.slope < -1.0 { last * n as f64 / (-pow.slope - 1.0) } else { f64::INFINITY };
        (tail, TailModel::Power)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_has_zero_variance() {
        let g = green_kubo(&Observable::constant(3.0), &PmParam::new(0.2, 0.3).unwrap(), 20, 512).unwrap();
        assert!(g.sigma2[0][0].abs() < 1e-20);
    }

    #[test]
    fn doubling_identity_quarter() {
        let g = green_kubo(&Observable::linear(1.0, -0.5), &PmParam::new(0.0, 0.25).unwrap(), 30, 4096).unwrap();
        assert!((g.sigma2[0][0] - 0.25).abs() < 0.25 * 0.02, "{}", g.sigma2[0][0]);
        assert!(g.converged);
    }

    #[test]
    fn doubling_coboundary_vanishes() {
        let phi = Observable::centered_identity_coboundary(0.0).unwrap();
        let g = green_kubo(&phi, &PmParam::new(0.0, 0.25).unwrap(), 30, 4096).unwrap();
        assert!(g.sigma2[0][0].abs() < 1e-3, "{}", g.sigma2[0][0]);
    }

    #[test]
    fn geometric_tail_is_summed() {
        let terms: Vec<f64> = (0..=20).map(|i| 0.5f64.powi(i)).collect();
        let (tail, model) = tail_estimate(&terms);
        assert_eq!(model, TailModel::Geometric);
        assert!((tail - 0.5f64.powi(20)).abs() < 1e-9);
    }
}
