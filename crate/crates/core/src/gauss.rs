//! Gaussian pieces of the Brownian embedding: splitting block covariances
//! against a Brownian increment, synthesizing the split Gaussians, measuring
//! the resulting matching error, and the Berkes–Philipp error arithmetic.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{domain, param, Error, Result};
use crate::fit::{geometric_checkpoints, log_log};
use crate::linalg::{from_dmatrix, sym_eigen, to_dmatrix, Matrix};
use crate::params::vasip_gamma;
use crate::rng;

/// `A = A₁ + A₂` and `t·I = A₁ + A₃` with `A₁ = Q diag(min(λ_i, t)) Qᵀ`.
#[derive(Clone, Debug, Serialize)]
pub struct CovSplit {
    pub a: Matrix,
    pub t: f64,
    pub a1: Matrix,
    pub a2: Matrix,
    pub a3: Matrix,
    /// Eigenvalues of `A` (ascending) and the matching eigenvectors (columns).
    #[serde(skip)]
    eigenvalues: Vec<f64>,
    #[serde(skip)]
    basis: DMatrix<f64>,
}

const PSD_TOL: f64 = 1e-10;

pub fn split_covariance(a: &Matrix, t: f64) -> Result<CovSplit> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(param(format!("t must be finite and non-negative, got {t}")));
    }
    let am = to_dmatrix(a)?;
    let (values, q) = sym_eigen(&am)?;
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if values.first().is_some_and(|&l| l < -PSD_TOL * scale) {
        return Err(domain(format!("covariance is not positive semi-definite (eigenvalue {})", values[0])));
    }
    let d = am.nrows();
    let diag = |f: &dyn Fn(f64) -> f64| {
        let dv = DVector::from_iterator(d, values.iter().map(|&l| f(l)));
        &q * DMatrix::from_diagonal(&dv) * q.transpose()
    };
    let a1 = diag(&|l| l.min(t));
    let a2 = &am - &a1;
    let a3 = DMatrix::identity(d, d) * t - &a1;
    Ok(CovSplit {
        a: a.clone(),
        t,
        a1: from_dmatrix(&a1),
        a2: from_dmatrix(&a2),
        a3: from_dmatrix(&a3),
        eigenvalues: values,
        basis: q,
    })
}

impl CovSplit {
    /// Diagonals of `Qᵀ A₂ Q` and `Qᵀ A₃ Q` in `A`'s eigenbasis.
    pub fn eigenbasis_diagonals(&self) -> (Vec<f64>, Vec<f64>) {
        let q = &self.basis;
        let conj = |m: &Matrix| {
            let m = to_dmatrix(m).expect("square");
            let c = q.transpose() * m * q;
            (0..c.nrows()).map(|i| c[(i, i)]).collect::<Vec<_>>()
        };
        (conj(&self.a2), conj(&self.a3))
    }

    /// `max_i min(μ₂ᵢ, μ₃ᵢ)`, zero when `A₂` and `A₃` have disjoint supports.
    pub fn overlap(&self) -> f64 {
        let (m2, m3) = self.eigenbasis_diagonals();
        m2.iter().zip(&m3).map(|(a, b)| a.min(*b)).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
}

/// Draws `(g₁, g₂, g₃)` with covariances `A₁, A₂, A₃`, independent.
pub struct GaussianSynth {
    factors: [DMatrix<f64>; 3],
}

impl GaussianSynth {
    /// Square-root factors share `A`'s eigenbasis, so a zero block yields an
    /// exactly zero draw.
    pub fn new(split: &CovSplit) -> Self {
        let t = split.t;
        let q = &split.basis;
        let d = q.nrows();
        let factor = |f: &dyn Fn(f64) -> f64| {
            let dv = DVector::from_iterator(d, split.eigenvalues.iter().map(|&l| f(l).max(0.0).sqrt()));
            q * DMatrix::from_diagonal(&dv)
        };
        GaussianSynth { factors: [factor(&|l| l.min(t)), factor(&|l| l - l.min(t)), factor(&|l| t - l.min(t))] }
    }

    pub fn dim(&self) -> usize {
        self.factors[0].nrows()
    }

    pub fn draw(&self, r: &mut ChaCha8Rng) -> [DVector<f64>; 3] {
        let d = self.dim();
        let mut one = |f: &DMatrix<f64>| {
            let z = DVector::from_iterator(d, (0..d).map(|_| r.sample::<f64, _>(StandardNormal)));
            if f.iter().all(|v| *v == 0.0) {
                DVector::zeros(d)
            } else {
                f * z
            }
        };
        let g1 = one(&self.factors[0]);
        let g2 = one(&self.factors[1]);
        let g3 = one(&self.factors[2]);
        [g1, g2, g3]
    }
}

/// One draw of `(g₁, g₂, g₃)` from stream 0 of `seed`.
pub fn synth_gaussians(split: &CovSplit, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let [a, b, c] = GaussianSynth::new(split).draw(&mut rng::stream(seed, 0));
    (a.iter().copied().collect(), b.iter().copied().collect(), c.iter().copied().collect())
}

/// Per-time covariance `H_k = base + k^{-exponent} · drift`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceModel {
    pub base: Matrix,
    #[serde(default)]
    pub drift: Option<Matrix>,
    #[serde(default)]
    pub exponent: f64,
}

impl CovarianceModel {
    pub fn identity(d: usize) -> Self {
        CovarianceModel { base: crate::linalg::identity(d), drift: None, exponent: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn at(&self, k: usize) -> Matrix {
        match &self.drift {
            None => self.base.clone(),
            Some(dr) => {
                let w = (k as f64).powf(-self.exponent);
                self.base.iter().zip(dr).map(|(b, r)| b.iter().zip(r).map(|(x, y)| x + w * y).collect()).collect()
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EmbedReport {
    pub c: f64,
    /// Block ends `m = ⌊(n+1)^c⌋`.
    pub times: Vec<f64>,
    /// Root-mean-square of `|Σ G − B_m|` over replicas.
    pub rms_error: Vec<f64>,
    /// Trajectory of replica 0.
    pub first_replica: Vec<f64>,
    pub fitted_exponent: Option<f64>,
    pub pass: bool,
}

/// Block `n` collects times `(⌊n^c⌋, ⌊(n+1)^c⌋]`; its covariance
/// `A_n = Σ H_k` is split against the Brownian increment variance
/// `t = (n+1)^c − n^c`. The block Gaussian is `g₁ + g₂` and the Brownian
/// increment `g₁ + g₃`, so the accumulated error is `Σ (g₂ − g₃)`.
pub fn embed_matching_error<F>(h: F, d: usize, c: f64, blocks: usize, replicas: usize, seed: u64) -> Result<EmbedReport>
where
    F: Fn(usize) -> Matrix,
{
    if !(c > 1.0) {
        return Err(param(format!("block exponent c must exceed 1, got {c}")));
    }
    if blocks < 2 || replicas == 0 {
        return Err(Error::Insufficient("need at least 2 blocks and 1 replica".into()));
    }
    let mut synths = Vec::with_capacity(blocks);
    let mut times = Vec::with_capacity(blocks);
    for n in 1..=blocks {
        let lo = (n as f64).powf(c).floor() as usize;
        let hi = ((n + 1) as f64).powf(c).floor() as usize;
        let mut acc = vec![vec![0.0; d]; d];
        for k in lo + 1..=hi {
            let hk = h(k);
            if hk.len() != d {
                return Err(Error::Dimension { expected: d, got: hk.len() });
            }
            for (ar, hr) in acc.iter_mut().zip(&hk) {
                for (a, v) in ar.iter_mut().zip(hr) {
                    *a += v;
                }
            }
        }
        let t = ((n + 1) as f64).powf(c) - (n as f64).powf(c);
        let split = split_covariance(&acc, t).map_err(|e| match e {
            Error::Domain(m) => Error::Degenerate(format!("block {n}: {m}")),
            other => other,
        })?;
        synths.push(GaussianSynth::new(&split));
        times.push(hi as f64);
    }
    let paths: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(seed, r as u64);
            let mut err = DVector::zeros(d);
            synths
                .iter()
                .map(|s| {
                    let [_, g2, g3] = s.draw(&mut g);
                    err += g2 - g3;
                    err.norm()
                })
                .collect()
        })
        .collect();
    let rms_error: Vec<f64> = (0..blocks)
        .map(|i| (paths.iter().map(|p| p[i] * p[i]).sum::<f64>() / replicas as f64).sqrt())
        .collect();
    let pts: Vec<(f64, f64)> = times.iter().copied().zip(rms_error.iter().copied()).collect();
    let fitted = if rms_error.iter().all(|v| *v == 0.0) {
        Some(f64::NEG_INFINITY)
    } else {
        log_log(&pts[pts.len() / 2..], 0.0).0.map(|f| f.slope)
    };
    Ok(EmbedReport {
        c,
        times,
        rms_error,
        first_replica: paths[0].clone(),
        fitted_exponent: fitted,
        pass: fitted.is_some_and(|f| f < 0.5),
    })
}

/// `α = 16d·log T / T + 4 λ^{1/2} T^d + δ`.
pub fn bp_alpha(t: f64, lambda: f64, delta: f64, d: usize) -> Result<f64> {
    if !(t > 1.0) {
        return Err(domain(format!("T must exceed 1, got {t}")));
    }
    if !(lambda >= 0.0) || !(delta >= 0.0) {
        return Err(domain("lambda and delta must be non-negative"));
    }
    if d == 0 {
        return Err(domain("dimension must be at least 1"));
    }
    let df = d as f64;
    Ok(16.0 * df * t.ln() / t + 4.0 * lambda.sqrt() * t.powi(d as i32) + delta)
}

#[derive(Clone, Debug, Serialize)]
pub struct BpSeriesReport {
    pub kappa: f64,
    pub v: f64,
    pub d: usize,
    pub horizon: usize,
    /// `min(κ, v/2 − dκ)`.
    pub predicted_exponent: f64,
    /// Decay exponent of `α_n` fitted over the last two decades.
    pub fitted_exponent: f64,
    /// Variance exponent `c − γ(c+1)` of the Gaussian tail term.
    pub tail_variance_exponent: f64,
    pub partial_sums: Vec<(usize, f64)>,
    pub envelope_ok: bool,
    pub convergent: bool,
}

/// `α_n` with `T_n = n^κ`, `λ_n = n^{-v}` and `δ_n = P(|N(0, n^{e})| > T_n/4)`.
/// The variance exponent `e` defaults to `c − γ(c+1)` of the parameter
/// chain at `α = 1/4`.
pub fn bp_series_check(kappa: f64, v: f64, d: usize, horizon: usize, tail_variance_exponent: Option<f64>) -> Result<BpSeriesReport> {
    if !(kappa > 1.0) {
        return Err(param(format!("kappa must exceed 1, got {kappa}")));
    }
    if d == 0 || horizon < 1000 {
        return Err(param("need d >= 1 and horizon >= 1000"));
    }
    let e = match tail_variance_exponent {
        Some(e) => e,
        None => {
            let p = vasip_gamma(0.25, d, 1e-4)?;
            p.c - p.gamma * (p.c + 1.0)
        }
    };
    let df = d as f64;
    let alpha_n = |n: usize| {
        let nf = n as f64;
        let t = nf.powf(kappa);
        let sd = nf.powf(e / 2.0);
        let delta = erfc(t / 4.0 / (std::f64::consts::SQRT_2 * sd));
        16.0 * df * t.ln() / t + 4.0 * nf.powf(-v / 2.0) * t.powf(df) + delta
    };
    let marks = geometric_checkpoints(1, horizon, 1.5);
    let mut partial_sums = Vec::with_capacity(marks.len());
    let mut total = 0.0;
    let mut next = 0;
    for n in 1..=horizon {
        total += alpha_n(n);
        if marks[next] == n {
            partial_sums.push((n, total));
            next += 1;
        }
    }
    let pts: Vec<(f64, f64)> = geometric_checkpoints((horizon / 100).max(1), horizon, 1.1)
        .into_iter()
        .map(|n| (n as f64, alpha_n(n)))
        .collect();
    let fit = log_log(&pts, 0.0).0.ok_or_else(|| Error::Degenerate("α_n vanished".into()))?;
    let fitted = -fit.slope;
    let predicted = kappa.min(v / 2.0 - df * kappa);
    Ok(BpSeriesReport {
        kappa,
        v,
        d,
        horizon,
        predicted_exponent: predicted,
        fitted_exponent: fitted,
        tail_variance_exponent: e,
        partial_sums,
        envelope_ok: fitted >= predicted - 0.1,
        convergent: fitted > 1.0,
    })
}
