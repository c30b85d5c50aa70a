//! Conditional expectations with respect to `T^{-n}B` on the Ulam grid.
//!
//! For Lebesgue `μ`, `E(g | T^{-n}B) = (P^n g / P^n 1) ∘ T^n`, hence
//! `E|E_n g| = ∫|P^n g| dm`. Sums `F = Σ_{k=m}^{m+n-1} φ_k∘T^k` are pushed
//! forward with `P^{k+1}(φ_k∘T^k · G) = P_{k+1}(φ_k · P^k G)`, one operator
//! application per time step.

use serde::Serialize;

use crate::decay::{center, field_l1, push, Field};
use crate::error::{param, Error, Result};
use crate::maps::MapSchedule;
use crate::observable::Observable;
use crate::orbit::Ensemble;
use crate::ulam::{l1, DensityGrid, OperatorCache, Pushforward};

#[derive(Clone, Debug)]
pub struct ConditionalExpectation {
    pub n: usize,
    /// `P^n f / P^n 1` as a function of `y = T^n x` (0 where `P^n 1 = 0`).
    pub values: DensityGrid,
    /// `P^n 1`, the law of `T^n x`.
    pub weight: DensityGrid,
    /// `E|E_n f| = ∫|P^n f| dm`.
    pub l1_norm: f64,
}

/// `E_n f` for a grid function `f` of the initial point.
pub fn conditional_expectation(s: &MapSchedule, f: &DensityGrid, n: usize) -> Result<ConditionalExpectation> {
    let cache = OperatorCache::new(f.n_bins())?;
    let mut g = f.values().to_vec();
    let mut h = vec![1.0; f.n_bins()];
    let mut scratch = Vec::new();
    for k in 1..=n as i64 {
        let op = cache.step(s, k);
        op.apply_in_place(&mut g, &mut scratch);
        op.apply_in_place(&mut h, &mut scratch);
    }
    let l1_norm = l1(&g);
    let values = g.iter().zip(&h).map(|(a, b)| if *b > 0.0 { a / b } else { 0.0 }).collect();
    Ok(ConditionalExpectation {
        n,
        values: DensityGrid::new(values)?,
        weight: DensityGrid::new(h)?,
        l1_norm,
    })
}

/// Forward recursion for `P^{m+n}(F)` and `P^{m+n}(F F^T)` where
/// `F = Σ_{k=m}^{m+n-1} φ_k∘T^k`, with `φ_k = φ − ∫φ P^k1 dm`.
pub(crate) struct SumPush<'a> {
    schedule: &'a MapSchedule,
    cache: &'a OperatorCache,
    samples: Field,
    d: usize,
    k: i64,
    pub h: Vec<f64>,
    pub first: Field,
    pub second: Option<Field>,
    scratch: Vec<f64>,
}

impl<'a> SumPush<'a> {
    /// Positioned at time `m` (nothing summed yet).
    pub fn new(schedule: &'a MapSchedule, cache: &'a OperatorCache, phi: &Observable, m: usize, second: bool) -> Self {
        let nb = cache.n_bins();
        let mut pf = Pushforward::new(schedule, cache);
        pf.advance_to(m as i64);
        let d = phi.dim();
        SumPush {
            schedule,
            cache,
            samples: phi.sample_bins(nb),
            d,
            k: m as i64,
            h: pf.density().to_vec(),
            first: vec![vec![0.0; nb]; d],
            second: second.then(|| vec![vec![0.0; nb]; d * d]),
            scratch: Vec::new(),
        }
    }

    /// Add the term at the current time `k`, then apply `P_{k+1}`.
    pub fn step(&mut self) {
        let phi = center(&self.samples, &self.h);
        if let Some(sec) = &mut self.second {
            for a in 0..self.d {
                for b in 0..self.d {
                    let e = &mut sec[a * self.d + b];
                    for (x, v) in e.iter_mut().enumerate() {
                        *v += phi[a][x] * self.first[b][x]
                            + self.first[a][x] * phi[b][x]
                            + phi[a][x] * phi[b][x] * self.h[x];
                    }
                }
            }
        }
        for (f, p) in self.first.iter_mut().zip(&phi) {
            for ((v, q), w) in f.iter_mut().zip(p).zip(&self.h) {
                *v += q * w;
            }
        }
        self.k += 1;
        let op = self.cache.step(self.schedule, self.k);
        push(&op, &mut self.first, &mut self.scratch);
        if let Some(sec) = &mut self.second {
            push(&op, sec, &mut self.scratch);
        }
        op.apply_in_place(&mut self.h, &mut self.scratch);
    }

    /// Apply `P_{k+1}` without adding a term.
    pub fn advance_only(&mut self) {
        self.k += 1;
        let op = self.cache.step(self.schedule, self.k);
        push(&op, &mut self.first, &mut self.scratch);
        if let Some(sec) = &mut self.second {
            push(&op, sec, &mut self.scratch);
        }
        op.apply_in_place(&mut self.h, &mut self.scratch);
    }

    pub fn time(&self) -> i64 {
        self.k
    }

    /// `E|E F|`.
    pub fn first_l1(&self) -> f64 {
        field_l1(&self.first)
    }

    /// `E(F F^T)` (flattened).
    pub fn second_moment(&self) -> Vec<f64> {
        self.second.as_ref().map(|s| s.iter().map(|e| e.iter().sum::<f64>() / e.len() as f64).collect()).unwrap_or_default()
    }

    /// `∫ |P(FF^T) − E(FF^T)·P1|^p · (P1)^{1-p} dm`, i.e. `E|E(FF^T) − EFF^T|^p`.
    pub fn second_deviation(&self, p: f64) -> f64 {
        let sec = self.second.as_ref().expect("second moments not tracked");
        let mean = self.second_moment();
        let n = self.h.len();
        let mut acc = 0.0;
        for x in 0..n {
            let dev: f64 =
                sec.iter().zip(&mean).map(|(e, m)| (e[x] - m * self.h[x]).powi(2)).sum::<f64>().sqrt();
            if p == 1.0 {
                acc += dev;
            } else if self.h[x] > 0.0 {
                acc += (dev / self.h[x]).powf(p) * self.h[x];
            }
        }
        acc / n as f64
    }

    /// Current centered observable `φ_k` on the grid.
    pub fn centered(&self) -> Field {
        center(&self.samples, &self.h)
    }
}

/// Result of [`estimate_cf_deviation`].
#[derive(Clone, Debug, Serialize)]
pub struct CfDeviation {
    /// Monte Carlo estimate of `E|E_{N}(e^{iu·X/√b}) − e^{-u·ΣX u/2b}|`.
    pub deviation: f64,
    pub standard_error: f64,
    /// The same quantity as a grid integral (no sampling).
    pub grid_value: f64,
    /// `E(u·X)²`.
    pub block_variance: f64,
    pub norm: f64,
    /// False when the standard error exceeds the estimate.
    pub resolved: bool,
}

/// Conditional characteristic-function deviation of the block sum
/// `X = Σ_{k=start}^{start+len-1} φ_k∘T^k`, conditioned on
/// `T^{-(start+len)}B`, normalized by `b` (defaults to `len`).
pub fn estimate_cf_deviation(
    s: &MapSchedule,
    phi: &Observable,
    start: usize,
    len: usize,
    u: &[f64],
    b: Option<f64>,
    n_bins: usize,
    samples: usize,
    seed: u64,
) -> Result<CfDeviation> {
    if start == 0 || len == 0 {
        return Err(param("block needs start >= 1 and len >= 1"));
    }
    if u.len() != phi.dim() {
        return Err(Error::Dimension { expected: phi.dim(), got: u.len() });
    }
    let norm = b.unwrap_or(len as f64);
    if !(norm > 0.0) {
        return Err(param("normalization must be positive"));
    }
    let cache = OperatorCache::new(n_bins)?;
    let mut sp = SumPush::new(s, &cache, phi, start, true);
    let mut re = sp.h.clone();
    let mut im = vec![0.0; n_bins];
    let mut scratch = Vec::new();
    let scale = 1.0 / norm.sqrt();
    for _ in 0..len {
        let phi_k = sp.centered();
        for x in 0..n_bins {
            let t: f64 = u.iter().zip(&phi_k).map(|(ua, p)| ua * p[x]).sum::<f64>() * scale;
            let (sn, cs) = t.sin_cos();
            let (r, i) = (re[x], im[x]);
            re[x] = r * cs - i * sn;
            im[x] = r * sn + i * cs;
        }
        let op = cache.step(s, sp.time() + 1);
        op.apply_in_place(&mut re, &mut scratch);
        op.apply_in_place(&mut im, &mut scratch);
        sp.step();
    }
    let d = phi.dim();
    let m2 = sp.second_moment();
    let mut var = 0.0;
    for a in 0..d {
        for c in 0..d {
            var += u[a] * u[c] * m2[a * d + c];
        }
    }
    let target = (-0.5 * var / norm).exp();
    let h = &sp.h;
    let grid_value =
        (0..n_bins).map(|x| ((re[x] - target * h[x]).powi(2) + im[x].powi(2)).sqrt()).sum::<f64>() / n_bins as f64;

    // Monte Carlo over the law of T^N x.
    let horizon = start + len;
    let ens = Ensemble::new(s, samples.max(2), horizon, seed);
    let vals = ens.par_map(|_, mut st| {
        for _ in 0..horizon {
            st.step();
        }
        let j = ((st.x() * n_bins as f64) as usize).min(n_bins - 1);
        if h[j] > 0.0 {
            ((re[j] / h[j] - target).powi(2) + (im[j] / h[j]).powi(2)).sqrt()
        } else {
            0.0
        }
    });
    let m = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / m;
    let var_mc = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let se = (var_mc / m).sqrt();
    Ok(CfDeviation {
        deviation: mean,
        standard_error: se,
        grid_value,
        block_variance: var,
        norm,
        resolved: se <= mean || mean == 0.0,
    })
}

/// Deviation for a block of i.i.d. `N(0, I)` increments, where conditioning
/// on the future is trivial: `|E e^{iu·X/√b} − e^{-|u|² len / 2b}|` by
/// Monte Carlo, with its standard error.
pub fn cf_deviation_iid(len: usize, u: &[f64], b: f64, samples: usize, seed: u64) -> (f64, f64) {
    use rand_distr::{Distribution, StandardNormal};
    let u2: f64 = u.iter().map(|v| v * v).sum();
    let target = (-0.5 * u2 * len as f64 / b).exp();
    let draws: Vec<(f64, f64)> = (0..samples)
        .map(|i| {
            let mut rng = crate::rng::stream(seed, i as u64);
            let mut t = 0.0;
            for _ in 0..len {
                for ua in u {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    t += ua * z;
                }
            }
            let (sn, cs) = (t / b.sqrt()).sin_cos();
            (cs, sn)
        })
        .collect();
    let m = samples as f64;
    let (mc, ms) = draws.iter().fold((0.0, 0.0), |a, d| (a.0 + d.0 / m, a.1 + d.1 / m));
    let dev = ((mc - target).powi(2) + ms * ms).sqrt();
    let var = draws.iter().map(|d| (d.0 - mc).powi(2) + (d.1 - ms).powi(2)).sum::<f64>() / (m - 1.0);
    (dev, (var / m).sqrt())
}
