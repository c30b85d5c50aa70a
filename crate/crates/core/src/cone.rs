//! The cone `C_a` of non-negative decreasing functions with `x^{α+1} f`
//! increasing and `f(x) ≤ a x^{-α} ∫f`, checked on sample grids.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, param, Error, Result};
use crate::maps::PmParam;
use crate::observable::Observable;
use crate::ulam::{bin_center, UlamOperator};

/// Tolerance for the sampled inequalities.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeSpec {
    pub a: f64,
    pub alpha: f64,
}

impl ConeSpec {
    pub fn new(a: f64, alpha: f64) -> Result<Self> {
        if !(a > 1.0 && a.is_finite()) {
            return Err(param(format!("cone parameter a must exceed 1, got {a}")));
        }
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(domain(format!("alpha must lie in (0, 1/2), got {alpha}")));
        }
        Ok(ConeSpec { a, alpha })
    }
}

/// Sample points in `(0, 1]` with quadrature weights summing to 1.
///
/// Cells are log-spaced on `[x_min, split]` (plus `[0, x_min]`) and uniform
/// on `[split, 1]`; each point is its cell's midpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl ConeGrid {
    pub fn new(x_min: f64, split: f64, n_log: usize, n_uniform: usize) -> Result<Self> {
        if !(0.0 < x_min && x_min < split && split < 1.0) || n_log == 0 || n_uniform == 0 {
            return Err(param("cone grid needs 0 < x_min < split < 1 and non-empty parts"));
        }
        let mut edges = vec![0.0];
        let ratio = (split / x_min).powf(1.0 / n_log as f64);
        for i in 0..n_log {
            edges.push(x_min * ratio.powi(i as i32));
        }
        for i in 0..=n_uniform {
            edges.push(split + (1.0 - split) * i as f64 / n_uniform as f64);
        }
        let points = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let weights = edges.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(ConeGrid { points, weights })
    }

    /// Midpoints of `n` uniform bins.
    pub fn uniform(n: usize) -> Self {
        ConeGrid { points: (0..n).map(|i| bin_center(i, n)).collect(), weights: vec![1.0 / n as f64; n] }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integral(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.points.iter().map(|&x| f(x)).collect()
    }
}

impl Default for ConeGrid {
    fn default() -> Self {
        ConeGrid::new(1e-9, 0.02, 300, 400).expect("valid defaults")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeCondition {
    NonNegative,
    Decreasing,
    WeightedIncreasing,
    UpperBound,
}

#[derive(Clone, Debug, Serialize)]
pub struct Membership {
    pub a: f64,
    pub alpha: f64,
    /// Worst signed slack of each condition, divided by `∫f` when positive.
    pub condition_margins: BTreeMap<ConeCondition, f64>,
    pub worst_margin: f64,
    pub failing_condition: Option<ConeCondition>,
    pub member: bool,
}

pub fn cone_membership(grid: &ConeGrid, f: &[f64], spec: &ConeSpec) -> Result<Membership> {
    membership_with_tol(grid, f, spec, MEMBERSHIP_TOL)
}

pub fn membership_with_tol(grid: &ConeGrid, f: &[f64], spec: &ConeSpec, tol: f64) -> Result<Membership> {
    if grid.is_empty() {
        return Err(param("empty grid"));
    }
    if f.len() != grid.len() {
        return Err(Error::Dimension { expected: grid.len(), got: f.len() });
    }
    let total = grid.integral(f);
    let scale = if total > 0.0 { total } else { 1.0 };
    let xs = grid.points();
    let e = spec.alpha + 1.0;
    let min = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::INFINITY, f64::min);
    let nonneg = min(&mut f.iter().map(|v| v / scale));
    let decreasing = min(&mut f.windows(2).map(|w| (w[0] - w[1]) / scale));
    let weighted = min(&mut (0..f.len() - 1).map(|i| (xs[i + 1].powf(e) * f[i + 1] - xs[i].powf(e) * f[i]) / scale));
    let upper = min(&mut xs.iter().zip(f).map(|(x, v)| (spec.a * x.powf(-spec.alpha) * total - v) / scale));
    let mut condition_margins = BTreeMap::new();
    condition_margins.insert(ConeCondition::NonNegative, nonneg);
    condition_margins.insert(ConeCondition::Decreasing, decreasing.min(f64::INFINITY));
    condition_margins.insert(ConeCondition::WeightedIncreasing, weighted);
    condition_margins.insert(ConeCondition::UpperBound, upper);
    // A single point has no monotonicity to check.
    for v in condition_margins.values_mut() {
        if v.is_infinite() {
            *v = 0.0;
        }
    }
    let (failing, worst) =
        condition_margins.iter().map(|(c, m)| (*c, *m)).fold((None, f64::INFINITY), |acc, (c, m)| {
            if m < acc.1 {
                (Some(c), m)
            } else {
                acc
            }
        });
    let member = worst >= -tol;
    Ok(Membership {
        a: spec.a,
        alpha: spec.alpha,
        condition_margins,
        worst_margin: worst,
        failing_condition: if member { None } else { failing },
        member,
    })
}

/// Best candidate when no admissible constants were found.
#[derive(Clone, Debug, Serialize)]
pub struct SearchFailure {
    pub lambda: f64,
    pub v: f64,
    pub delta: f64,
    pub margin_first: f64,
    pub margin_second: f64,
    pub box_size: f64,
}

impl fmt::Display for SearchFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "no admissible (lambda, v, delta) in the box of size {}; best ({}, {}, {}) has margins {:e} and {:e}",
            self.box_size, self.lambda, self.v, self.delta, self.margin_first, self.margin_second
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Decomposition {
    pub lambda: f64,
    pub v: f64,
    pub delta: f64,
    /// `(φ + λx + v) h + δ`.
    pub h1: Vec<f64>,
    /// `(λx + v) h + δ + ∫φh`.
    pub h2: Vec<f64>,
    pub first: Membership,
    pub second: Membership,
    /// `max |h¹ − h² − (φh − ∫φh)|`.
    pub identity_error: f64,
    /// `|∫h¹ − ∫h²|`.
    pub integral_gap: f64,
}

struct Candidate {
    lambda: f64,
    v: f64,
    delta: f64,
    m1: f64,
    m2: f64,
}

impl Candidate {
    fn feasible(&self) -> bool {
        self.m1 >= -MEMBERSHIP_TOL && self.m2 >= -MEMBERSHIP_TOL
    }

    fn cost(&self) -> f64 {
        self.lambda.abs() + self.v + self.delta
    }
}

/// Find `(λ, v, δ)` putting both halves of `φh − ∫φh = h¹ − h²` in the
/// cone, minimizing `|λ| + v + δ` over `λ ∈ [−S, S]`, `v, δ ∈ [0, S]`,
/// `S = 10·max(K, sup|φ|, M, 1)`, by successively refined grid search.
pub fn cone_decompose(
    phi: &Observable,
    h: &[f64],
    grid: &ConeGrid,
    spec: &ConeSpec,
    lipschitz: f64,
    l1_bound: f64,
) -> Result<Decomposition> {
    if phi.dim() != 1 {
        return Err(Error::Dimension { expected: 1, got: phi.dim() });
    }
    if h.len() != grid.len() {
        return Err(Error::Dimension { expected: grid.len(), got: h.len() });
    }
    let f: Vec<f64> = grid.points().iter().map(|&x| phi.eval(x)[0]).collect();
    let fh: Vec<f64> = f.iter().zip(h).map(|(a, b)| a * b).collect();
    let mean = grid.integral(&fh);
    let xs = grid.points();
    let build = |lambda: f64, v: f64, delta: f64| {
        let h1: Vec<f64> = (0..h.len()).map(|i| (f[i] + lambda * xs[i] + v) * h[i] + delta).collect();
        let h2: Vec<f64> = (0..h.len()).map(|i| (lambda * xs[i] + v) * h[i] + delta + mean).collect();
        (h1, h2)
    };
    let eval = |lambda: f64, v: f64, delta: f64| {
        let (h1, h2) = build(lambda, v, delta);
        let m1 = cone_membership(grid, &h1, spec).map(|m| m.worst_margin).unwrap_or(f64::NEG_INFINITY);
        let m2 = cone_membership(grid, &h2, spec).map(|m| m.worst_margin).unwrap_or(f64::NEG_INFINITY);
        Candidate { lambda, v, delta, m1, m2 }
    };
    let sup = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let size = 10.0 * lipschitz.max(sup).max(l1_bound).max(1.0);

    let search = |lam: (f64, f64), vv: (f64, f64), dd: (f64, f64), steps: usize| -> Vec<Candidate> {
        let lin = |(lo, hi): (f64, f64), i: usize| lo + (hi - lo) * i as f64 / steps as f64;
        (0..=steps)
            .into_par_iter()
            .flat_map_iter(|i| {
                let l = lin(lam, i);
                (0..=steps).flat_map(move |j| (0..=steps).map(move |k| (l, lin(vv, j), lin(dd, k))))
            })
            .map(|(l, v, d)| eval(l, v, d))
            .collect()
    };
    let best_feasible = |cands: Vec<Candidate>| {
        cands.into_iter().filter(Candidate::feasible).min_by(|a, b| a.cost().total_cmp(&b.cost()))
    };

    let coarse = search((-size, size), (0.0, size), (0.0, size), 40);
    let fallback = coarse
        .iter()
        .max_by(|a, b| a.m1.min(a.m2).total_cmp(&b.m1.min(b.m2)))
        .map(|c| (c.lambda, c.v, c.delta, c.m1, c.m2));
    let mut best = best_feasible(coarse);
    let Some(mut cur) = best.take() else {
        let (lambda, v, delta, m1, m2) = fallback.expect("non-empty search");
        return Err(Error::ConeSearch(Box::new(SearchFailure {
            lambda,
            v,
            delta,
            margin_first: m1,
            margin_second: m2,
            box_size: size,
        })));
    };
    let mut step = 2.0 * size / 40.0;
    for _ in 0..4 {
        let around = |c: f64, lo: f64| ((c - step).max(lo), c + step);
        let refined = search(around(cur.lambda, -size), around(cur.v, 0.0), around(cur.delta, 0.0), 10);
        if let Some(b) = best_feasible(refined) {
            if b.cost() <= cur.cost() {
                cur = b;
            }
        }
        step /= 5.0;
    }
    let (h1, h2) = build(cur.lambda, cur.v, cur.delta);
    let identity_error = (0..h.len()).map(|i| (h1[i] - h2[i] - (fh[i] - mean)).abs()).fold(0.0, f64::max);
    let integral_gap = (grid.integral(&h1) - grid.integral(&h2)).abs();
    let first = cone_membership(grid, &h1, spec)?;
    let second = cone_membership(grid, &h2, spec)?;
    Ok(Decomposition {
        lambda: cur.lambda,
        v: cur.v,
        delta: cur.delta,
        h1,
        h2,
        first,
        second,
        identity_error,
        integral_gap,
    })
}

/// `Σ c_j x^{-s_j}` with `c_j ≥ 0`, `0 ≤ s_j < 1`; cell averages are exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSum {
    pub terms: Vec<(f64, f64)>,
}

impl PowerSum {
    pub fn new(terms: Vec<(f64, f64)>) -> Result<Self> {
        if terms.iter().any(|&(c, s)| !(c >= 0.0) || !(0.0..1.0).contains(&s)) {
            return Err(param("power-sum terms need c >= 0 and 0 <= s < 1"));
        }
        Ok(PowerSum { terms })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|&(c, s)| c * x.powf(-s)).sum()
    }

    /// Average over `[lo, hi]`.
    pub fn cell_average(&self, lo: f64, hi: f64) -> f64 {
        let integral: f64 =
            self.terms.iter().map(|&(c, s)| c * (hi.powf(1.0 - s) - lo.powf(1.0 - s)) / (1.0 - s)).sum();
        integral / (hi - lo)
    }

    /// The family `w + x^{-s}` for `s` evenly spread over `[0, alpha]` and
    /// `w` over `[0, 1]`.
    pub fn family(alpha: f64, count: usize) -> Vec<PowerSum> {
        (0..count)
            .map(|i| {
                let t = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.0 };
                let s = alpha * t;
                let w = ((i * 7) % count) as f64 / count as f64;
                PowerSum { terms: vec![(w, 0.0), (1.0, s)] }
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InvarianceReport {
    pub a: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n_bins: usize,
    /// Samples that were in the cone to begin with.
    pub tested: usize,
    pub skipped: usize,
    pub passed: usize,
    pub pass_rate: f64,
    pub margin_floor: f64,
    pub worst_margin: f64,
    pub condition_margins: BTreeMap<ConeCondition, f64>,
    pub sample_margins: Vec<f64>,
    pub pass: bool,
}

/// Push cell averages of each sample through the Ulam operator and re-test
/// membership at the bin centres; a sample passes when its worst margin is
/// at least `margin_floor`.
pub fn check_cone_invariance(
    p: &PmParam,
    spec: &ConeSpec,
    samples: &[PowerSum],
    n_bins: usize,
    margin_floor: f64,
) -> Result<InvarianceReport> {
    let op = UlamOperator::new(p, n_bins)?;
    let fine = ConeGrid::default();
    let bins = ConeGrid::uniform(n_bins);
    let mut tested = 0;
    let mut passed = 0;
    let mut worst = f64::INFINITY;
    let mut cond: BTreeMap<ConeCondition, f64> = BTreeMap::new();
    let mut sample_margins = Vec::new();
    for s in samples {
        if !cone_membership(&fine, &fine.sample(|x| s.eval(x)), spec)?.member {
            continue;
        }
        tested += 1;
        let avg: Vec<f64> =
            (0..n_bins).map(|i| s.cell_average(i as f64 / n_bins as f64, (i + 1) as f64 / n_bins as f64)).collect();
        let mut img = vec![0.0; n_bins];
        op.apply_into(&avg, &mut img);
        let m = membership_with_tol(&bins, &img, spec, -margin_floor)?;
        if m.worst_margin >= margin_floor {
            passed += 1;
        }
        worst = worst.min(m.worst_margin);
        for (c, v) in &m.condition_margins {
            let e = cond.entry(*c).or_insert(f64::INFINITY);
            *e = e.min(*v);
        }
        sample_margins.push(m.worst_margin);
    }
    let pass_rate = if tested > 0 { passed as f64 / tested as f64 } else { 0.0 };
    Ok(InvarianceReport {
        a: spec.a,
        alpha: spec.alpha,
        beta: p.beta(),
        n_bins,
        tested,
        skipped: samples.len() - tested,
        passed,
        pass_rate,
        margin_floor,
        worst_margin: worst,
        condition_margins: cond,
        sample_margins,
        pass: tested > 0 && pass_rate >= 0.95,
    })
}

/// First `a` in `candidates` (scanned in increasing order) whose invariance
/// check passes.
pub fn smallest_passing_a(
    p: &PmParam,
    alpha: f64,
    samples: &[PowerSum],
    n_bins: usize,
    margin_floor: f64,
    candidates: &[f64],
) -> Result<Option<f64>> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    for a in sorted {
        let spec = ConeSpec::new(a, alpha)?;
        if check_cone_invariance(p, &spec, samples, n_bins, margin_floor)?.pass {
            return Ok(Some(a));
        }
    }
    Ok(None)
}
