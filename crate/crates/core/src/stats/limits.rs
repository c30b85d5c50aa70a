//! Distributional checks on normalized Birkhoff sums.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{param, Error, Result};
use crate::fit::log_log;
use crate::linalg::{spectral_map, sym_eigen};
use crate::rng;
use crate::stats::covariance::CovarianceTrace;
use crate::stats::sums::SumPaths;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    Clt,
    Lil,
    Degenerate,
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitReport {
    pub kind: LimitKind,
    pub n: usize,
    pub statistic: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
    /// Variance too small to normalize by; nothing was tested.
    pub degenerate: bool,
    pub diagnostics: BTreeMap<String, f64>,
}

impl LimitReport {
    fn degenerate(kind: LimitKind, n: usize, lambda: f64) -> Self {
        let mut diagnostics = BTreeMap::new();
        diagnostics.insert("lambda_min".into(), lambda);
        LimitReport { kind, n, statistic: None, threshold: f64::NAN, pass: false, degenerate: true, diagnostics }
    }
}

/// Two-sided KS distance between the sample and a continuous CDF.
pub fn ks_distance(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let m = sample.len() as f64;
    sample.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / m - f).max(f - i as f64 / m)
    })
}

/// Asymptotic KS critical value `sqrt(−ln(level/2)/2)/√m` (1.36/√m at 5%).
pub fn ks_critical(level: f64, m: usize) -> f64 {
    (-0.5 * (level / 2.0).ln()).sqrt() / (m as f64).sqrt()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CltOptions {
    pub level: f64,
    /// Random directions for `d > 1`.
    pub projections: usize,
    pub seed: u64,
    /// Treat `λ(σ_n²) ≤ degenerate_rate · n` as degenerate.
    pub degenerate_rate: f64,
}

impl Default for CltOptions {
    fn default() -> Self {
        CltOptions { level: 0.05, projections: 32, seed: 0x5eed, degenerate_rate: 1e-3 }
    }
}

/// KS test of `σ_n^{-1} (S_n − mean)` against the standard normal. For
/// `d > 1` the sums are whitened and tested along random directions with
/// a Bonferroni-corrected band; Mardia's skewness and kurtosis are
/// reported as diagnostics.
pub fn self_norming_clt(paths: &SumPaths, trace: &CovarianceTrace, n: usize, opts: &CltOptions) -> Result<LimitReport> {
    let c = paths.index_of(n).ok_or_else(|| param(format!("{n} is not a checkpoint of the sums")))?;
    let t = trace.index_of(n).ok_or_else(|| param(format!("{n} is not a checkpoint of the trace")))?;
    let d = paths.dim();
    if trace.d != d {
        return Err(Error::Dimension { expected: d, got: trace.d });
    }
    let lambda = trace.lambda_min[t].1;
    if lambda <= opts.degenerate_rate * n as f64 {
        return Ok(LimitReport::degenerate(LimitKind::Clt, n, lambda));
    }
    let m = paths.orbits();
    let mean: Vec<f64> = (0..d).map(|a| (0..m).map(|i| paths.sum(i, c)[a]).sum::<f64>() / m as f64).collect();
    let sigma = DMatrix::from_fn(d, d, |i, j| trace.entries[t].1[i][j]);
    let (vals, vecs) = sym_eigen(&sigma)?;
    let whiten = spectral_map(&vals, &vecs, |v| 1.0 / v.sqrt());
    let z: Vec<DVector<f64>> = (0..m)
        .map(|i| &whiten * DVector::from_iterator(d, paths.sum(i, c).iter().zip(&mean).map(|(s, u)| s - u)))
        .collect();
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("lambda_min".into(), lambda);
    diagnostics.insert("orbits".into(), m as f64);
    let (stat, threshold) = if d == 1 {
        let mut s: Vec<f64> = z.iter().map(|v| v[0]).collect();
        (ks_distance(&mut s, std_normal_cdf), ks_critical(opts.level, m))
    } else {
        let mut r = rng::stream(opts.seed, 0);
        let k = opts.projections.max(1);
        let mut worst = 0.0f64;
        for _ in 0..k {
            let u = DVector::from_iterator(d, (0..d).map(|_| r.sample::<f64, _>(StandardNormal))).normalize();
            let mut s: Vec<f64> = z.iter().map(|v| v.dot(&u)).collect();
            worst = worst.max(ks_distance(&mut s, std_normal_cdf));
        }
        let (b1, b2) = mardia(&z);
        let df = (d * (d + 1) * (d + 2)) as f64 / 6.0;
        let skew_p = 1.0 - ChiSquared::new(df).expect("df > 0").cdf(m as f64 * b1 / 6.0);
        let dd = (d * (d + 2)) as f64;
        let kurt_z = (b2 - dd) / (8.0 * dd / m as f64).sqrt();
        let kurt_p = 2.0 * (1.0 - Normal::standard().cdf(kurt_z.abs()));
        diagnostics.insert("mardia_skewness".into(), b1);
        diagnostics.insert("mardia_skewness_p".into(), skew_p);
        diagnostics.insert("mardia_kurtosis".into(), b2);
        diagnostics.insert("mardia_kurtosis_p".into(), kurt_p);
        diagnostics.insert("projections".into(), k as f64);
        (worst, ks_critical(opts.level / k as f64, m))
    };
    Ok(LimitReport {
        kind: LimitKind::Clt,
        n,
        statistic: Some(stat),
        threshold,
        pass: stat < threshold,
        degenerate: false,
        diagnostics,
    })
}

/// Mardia's multivariate skewness `b1` and kurtosis `b2` of whitened data.
fn mardia(z: &[DVector<f64>]) -> (f64, f64) {
    let m = z.len() as f64;
    let mut b1 = 0.0;
    for a in z {
        for b in z {
            b1 += a.dot(b).powi(3);
        }
    }
    let b2 = z.iter().map(|v| v.norm_squared().powi(2)).sum::<f64>() / m;
    (b1 / (m * m), b2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LilOptions {
    pub band: (f64, f64),
    pub degenerate_rate: f64,
}

impl Default for LilOptions {
    fn default() -> Self {
        LilOptions { band: (0.5, 1.5), degenerate_rate: 1e-3 }
    }
}

/// Running extremes of `S_n / sqrt(2 σ_n² log log σ_n²)` per orbit.
///
/// Extremes are taken over checkpoints with `σ_n² ≥ max(e^e, σ_N)`, i.e.
/// the upper half of the log-variance range, so the normalizer is not
/// dominated by the first few `log log` values near 1. The medians of the
/// upper and (negated) lower extremes over orbits must both fall in the
/// band. The sums must already be centered in time; no cross-orbit mean is
/// removed, so a handful of long orbits is enough.
pub fn lil_band(paths: &SumPaths, trace: &CovarianceTrace, opts: &LilOptions) -> Result<LimitReport> {
    if paths.dim() != 1 || trace.d != 1 {
        return Err(Error::Dimension { expected: 1, got: paths.dim().max(trace.d) });
    }
    let var_at = |n: usize| trace.at(n).map(|m| m[0][0]);
    let cps = paths.checkpoints();
    let last = *cps.last().expect("non-empty");
    let final_var = var_at(last).ok_or_else(|| param(format!("{last} is not a checkpoint of the trace")))?;
    if final_var <= opts.degenerate_rate * last as f64 {
        return Ok(LimitReport::degenerate(LimitKind::Lil, last, final_var));
    }
    if final_var <= std::f64::consts::E {
        return Err(Error::Insufficient(format!("log log needs σ_n² > e, got {final_var}")));
    }
    let floor = std::f64::consts::E.powf(std::f64::consts::E).max(final_var.sqrt());
    let used: Vec<(usize, f64)> = cps
        .iter()
        .enumerate()
        .filter_map(|(c, &n)| {
            let v = var_at(n)?;
            (v >= floor).then(|| (c, (2.0 * v * v.ln().ln()).sqrt()))
        })
        .collect();
    let used = if used.is_empty() {
        let v = final_var;
        vec![(cps.len() - 1, (2.0 * v * v.ln().ln()).sqrt())]
    } else {
        used
    };
    let mut upper = Vec::with_capacity(paths.orbits());
    let mut lower = Vec::with_capacity(paths.orbits());
    for i in 0..paths.orbits() {
        let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
        for &(c, norm) in &used {
            let r = paths.sum(i, c)[0] / norm;
            hi = hi.max(r);
            lo = lo.min(r);
        }
        upper.push(hi);
        lower.push(-lo);
    }
    let med_hi = median(&mut upper);
    let med_lo = median(&mut lower);
    let (a, b) = opts.band;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("median_upper".into(), med_hi);
    diagnostics.insert("median_lower".into(), med_lo);
    diagnostics.insert("checkpoints_used".into(), used.len() as f64);
    diagnostics.insert("orbits".into(), paths.orbits() as f64);
    diagnostics.insert("final_variance".into(), final_var);
    Ok(LimitReport {
        kind: LimitKind::Lil,
        n: last,
        statistic: Some(med_hi),
        threshold: b,
        pass: (a..=b).contains(&med_hi) && (a..=b).contains(&med_lo),
        degenerate: false,
        diagnostics,
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Whether `|S_n| = o(n^{1/2 − ε})`: the root-mean-square sum over orbits,
/// divided by `n^{1/2−ε}`, must have a negative log–log slope and end below
/// where it started.
pub fn degenerate_check(paths: &SumPaths, epsilon: f64) -> Result<LimitReport> {
    if paths.dim() != 1 {
        return Err(Error::Dimension { expected: 1, got: paths.dim() });
    }
    if !(0.0..0.5).contains(&epsilon) {
        return Err(param(format!("epsilon must lie in [0, 1/2), got {epsilon}")));
    }
    let cps = paths.checkpoints();
    if cps.len() < 2 {
        return Err(Error::Insufficient("need at least two checkpoints".into()));
    }
    let m = paths.orbits() as f64;
    let ratios: Vec<(f64, f64)> = cps
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            let rms = ((0..paths.orbits()).map(|i| paths.sum(i, c)[0].powi(2)).sum::<f64>() / m).sqrt();
            (n as f64, rms / (n as f64).powf(0.5 - epsilon))
        })
        .collect();
    let (fit, _) = log_log(&ratios, 0.0);
    let first = ratios[0].1;
    let last = ratios[ratios.len() - 1].1;
    // Identically zero sums: the ratio is 0 throughout, trivially o(1).
    let slope = if ratios.iter().all(|r| r.1 == 0.0) { f64::NEG_INFINITY } else { fit.map_or(f64::NAN, |f| f.slope) };
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("first_ratio".into(), first);
    diagnostics.insert("last_ratio".into(), last);
    diagnostics.insert("max_abs_sum".into(), paths.max_abs().iter().fold(0.0f64, |a, b| a.max(*b)));
    diagnostics.insert("epsilon".into(), epsilon);
    Ok(LimitReport {
        kind: LimitKind::Degenerate,
        n: *cps.last().expect("non-empty"),
        statistic: Some(slope),
        threshold: 0.0,
        pass: slope < 0.0 && last <= first,
        degenerate: false,
        diagnostics,
    })
}
