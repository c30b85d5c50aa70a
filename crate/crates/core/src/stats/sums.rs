//! Birkhoff sums `S_n = Σ_{k=1}^n φ_k(T^k x)` over an ensemble, recorded at
//! checkpoints, and the centering `φ_k = φ − E φ∘T^k`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decay::dot;
use crate::error::{param, Error, Result};
use crate::maps::MapSchedule;
use crate::observable::Observable;
use crate::orbit::Ensemble;
use crate::rng;
use crate::ulam::{l1_diff, OperatorCache, Pushforward};

/// Orbits per parallel work item; fixed so reductions never depend on the
/// thread count.
const CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method", deny_unknown_fields)]
pub enum CenterMethod {
    /// `∫φ · P^k 1 dm` on an Ulam grid.
    Ulam { n_bins: usize },
    /// Sample mean of `φ(T^k x)` over `m` Lebesgue points.
    Ensemble { m: usize, seed: u64 },
}

/// `φ − mean`, where `mean` estimates `∫φ∘T^k dm`.
#[derive(Clone, Debug)]
pub struct CenteredObservable {
    pub base: Observable,
    pub time: usize,
    pub mean: Vec<f64>,
    /// Monte Carlo standard error of `mean` (ensemble method only).
    pub standard_error: Option<Vec<f64>>,
}

impl CenteredObservable {
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        self.base.eval_into(x, out);
        for (o, m) in out.iter_mut().zip(&self.mean) {
            *o -= m;
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.base.dim()];
        self.eval_into(x, &mut out);
        out
    }
}

pub fn center_observable(phi: &Observable, s: &MapSchedule, k: usize, method: CenterMethod) -> Result<CenteredObservable> {
    let (mean, standard_error) = match method {
        CenterMethod::Ulam { n_bins } => {
            let cache = OperatorCache::new(n_bins)?;
            let mut pf = Pushforward::new(s, &cache);
            pf.advance_to(k as i64);
            let samples = phi.sample_bins(n_bins);
            (samples.iter().map(|c| dot(c, pf.density())).collect(), None)
        }
        CenterMethod::Ensemble { m, seed } => {
            if m < 2 {
                return Err(Error::Insufficient("ensemble centering needs at least 2 orbits".into()));
            }
            let ens = Ensemble::new(s, m, k, seed);
            let (mean, var) = moments_at(&ens, phi, k);
            let se = var.iter().map(|v| (v / m as f64).sqrt()).collect();
            (mean, Some(se))
        }
    };
    Ok(CenteredObservable { base: phi.clone(), time: k, mean, standard_error })
}

/// Mean and sample variance of `φ(T^k x)` over the ensemble.
fn moments_at(ens: &Ensemble, phi: &Observable, k: usize) -> (Vec<f64>, Vec<f64>) {
    let d = phi.dim();
    let vals: Vec<Vec<f64>> = ens.par_map(|_, mut st| {
        for _ in 0..k {
            st.step();
        }
        phi.eval(st.x())
    });
    let m = vals.len() as f64;
    let mean: Vec<f64> = (0..d).map(|a| vals.iter().map(|v| v[a]).sum::<f64>() / m).collect();
    let var = (0..d).map(|a| vals.iter().map(|v| (v[a] - mean[a]).powi(2)).sum::<f64>() / (m - 1.0)).collect();
    (mean, var)
}

/// Means `E φ(T^k x)` for `k = 1..=n`, stored at index `k − 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeMeans {
    pub values: Vec<Vec<f64>>,
}

impl TimeMeans {
    pub fn zero(n: usize, d: usize) -> Self {
        TimeMeans { values: vec![vec![0.0; d]; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Means through the Ulam push-forward of Lebesgue measure. For a
    /// constant schedule the push-forward is stopped once it stops moving.
    pub fn ulam(s: &MapSchedule, phi: &Observable, n: usize, n_bins: usize) -> Result<Self> {
        Self::ulam_from(s, phi, n, &vec![1.0; n_bins])
    }

    /// Means through the push-forward of the density `initial`.
    pub fn ulam_from(s: &MapSchedule, phi: &Observable, n: usize, initial: &[f64]) -> Result<Self> {
        let n_bins = initial.len();
        let cache = OperatorCache::new(n_bins)?;
        let samples = phi.sample_bins(n_bins);
        let mut pf = Pushforward::from_density(s, &cache, initial)?;
        let stationary = s.stationary().is_some();
        let mut values = Vec::with_capacity(n);
        let mut prev = pf.density().to_vec();
        let mut frozen = false;
        for _ in 0..n {
            if !frozen {
                pf.advance();
                if stationary {
                    let now = pf.density();
                    frozen = l1_diff(now, &prev) < 1e-15;
                    prev.clear();
                    prev.extend_from_slice(now);
                }
            }
            values.push(samples.iter().map(|c| dot(c, pf.density())).collect());
        }
        Ok(TimeMeans { values })
    }

    /// Sample means over the ensemble's own orbits.
    pub fn ensemble(ens: &Ensemble, phi: &Observable, n: usize) -> Result<Self> {
        if n > ens.length() {
            return Err(param(format!("ensemble length {} is shorter than {n}", ens.length())));
        }
        let d = phi.dim();
        let m = ens.size();
        let chunks: Vec<Vec<f64>> = (0..m.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0; n * d];
                let mut buf = vec![0.0; d];
                for i in c * CHUNK..((c + 1) * CHUNK).min(m) {
                    let mut st = ens.stepper(i);
                    for k in 0..n {
                        phi.eval_into(st.step(), &mut buf);
                        for (a, v) in buf.iter().enumerate() {
                            acc[k * d + a] += v;
                        }
                    }
                }
                acc
            })
            .collect();
        let mut total = vec![0.0; n * d];
        for c in &chunks {
            for (t, v) in total.iter_mut().zip(c) {
                *t += v;
            }
        }
        let values = total.chunks(d).map(|r| r.iter().map(|v| v / m as f64).collect()).collect();
        Ok(TimeMeans { values })
    }
}

/// Sums of every orbit at every checkpoint, plus each orbit's running
/// `max_k |S_k|` (sup norm over components) up to the last checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct SumPaths {
    checkpoints: Vec<usize>,
    d: usize,
    m: usize,
    values: Vec<f64>,
    max_abs: Vec<f64>,
}

impl SumPaths {
    /// `values[(orbit · checkpoints + c) · d + component]`.
    pub fn new(checkpoints: Vec<usize>, d: usize, values: Vec<f64>, max_abs: Vec<f64>) -> Result<Self> {
        let per = checkpoints.len() * d;
        if per == 0 || values.len() % per != 0 {
            return Err(param("sum table does not match checkpoints × dimension"));
        }
        if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(param("checkpoints must be strictly increasing"));
        }
        let m = values.len() / per;
        if max_abs.len() != m {
            return Err(Error::Dimension { expected: m, got: max_abs.len() });
        }
        Ok(SumPaths { checkpoints, d, m, values, max_abs })
    }

    pub fn checkpoints(&self) -> &[usize] {
        &self.checkpoints
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn orbits(&self) -> usize {
        self.m
    }

    pub fn index_of(&self, n: usize) -> Option<usize> {
        self.checkpoints.binary_search(&n).ok()
    }

    /// `S_{checkpoint c}` of orbit `i`.
    pub fn sum(&self, i: usize, c: usize) -> &[f64] {
        let at = (i * self.checkpoints.len() + c) * self.d;
        &self.values[at..at + self.d]
    }

    pub fn max_abs(&self) -> &[f64] {
        &self.max_abs
    }

    /// Scalar paths `v · S_n`.
    pub fn project(&self, v: &[f64]) -> Result<SumPaths> {
        if v.len() != self.d {
            return Err(Error::Dimension { expected: self.d, got: v.len() });
        }
        let values: Vec<f64> = self.values.chunks(self.d).map(|s| dot(s, v)).collect();
        let norm1: f64 = v.iter().map(|x| x.abs()).sum();
        let max_abs = self.max_abs.iter().map(|m| m * norm1).collect();
        SumPaths::new(self.checkpoints.clone(), 1, values, max_abs)
    }
}

/// Run the ensemble and record `Σ_{k=1}^n (φ(T^k x) − means_k)`.
pub fn birkhoff_sums(
    ens: &Ensemble,
    phi: &Observable,
    checkpoints: &[usize],
    means: Option<&TimeMeans>,
) -> Result<SumPaths> {
    let n = *checkpoints.last().ok_or_else(|| param("no checkpoints"))?;
    if n > ens.length() {
        return Err(param(format!("checkpoint {n} is past the ensemble length {}", ens.length())));
    }
    if let Some(mu) = means {
        if mu.len() < n {
            return Err(param("centering means do not cover the horizon"));
        }
    }
    let d = phi.dim();
    let rows = ens.par_map(|_, mut st| {
        let mut s = vec![0.0; d];
        let mut buf = vec![0.0; d];
        let mut out = Vec::with_capacity(checkpoints.len() * d);
        let mut peak = 0.0f64;
        let mut next = 0;
        for k in 1..=n {
            phi.eval_into(st.step(), &mut buf);
            match means {
                Some(mu) => s.iter_mut().zip(&buf).zip(&mu.values[k - 1]).for_each(|((s, b), m)| *s += b - m),
                None => s.iter_mut().zip(&buf).for_each(|(s, b)| *s += b),
            }
            peak = s.iter().fold(peak, |p, v| p.max(v.abs()));
            if checkpoints[next] == k {
                out.extend_from_slice(&s);
                next += 1;
            }
        }
        (out, peak)
    });
    let mut values = Vec::with_capacity(rows.len() * checkpoints.len() * d);
    let mut max_abs = Vec::with_capacity(rows.len());
    for (r, p) in rows {
        values.extend(r);
        max_abs.push(p);
    }
    SumPaths::new(checkpoints.to_vec(), d, values, max_abs)
}

/// Sums of i.i.d. `N(0, I_d)` increments; orbit `i` uses stream `i`.
pub fn gaussian_paths(d: usize, m: usize, checkpoints: &[usize], seed: u64) -> Result<SumPaths> {
    let n = *checkpoints.last().ok_or_else(|| param("no checkpoints"))?;
    let rows: Vec<(Vec<f64>, f64)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let mut s = vec![0.0; d];
            let mut out = Vec::with_capacity(checkpoints.len() * d);
            let mut peak = 0.0f64;
            let mut next = 0;
            for k in 1..=n {
                for v in s.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut r);
                    *v += z;
                    peak = peak.max(v.abs());
                }
                if checkpoints[next] == k {
                    out.extend_from_slice(&s);
                    next += 1;
                }
            }
            (out, peak)
        })
        .collect();
    let mut values = Vec::new();
    let mut max_abs = Vec::new();
    for (r, p) in rows {
        values.extend(r);
        max_abs.push(p);
    }
    SumPaths::new(checkpoints.to_vec(), d, values, max_abs)
}
