//! Random dynamics driven by an invertible base transformation `σ`.
//!
//! The fiber map at `ω` is `T_{β(ω)}`; along a driver trajectory
//! `ω_k = σ^k ω₀` the composition is `T^n_ω = T_{σ^{n-1}ω} ∘ … ∘ T_ω`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decay::{target_slope, NOISE_FLOOR};
use crate::error::{param, Error, Result};
use crate::fit::{geometric_checkpoints, log_log, LineFit};
use crate::linalg::Matrix;
use crate::maps::{MapSchedule, PmParam};
use crate::observable::Observable;
use crate::orbit::{Ensemble, InitialLaw};
use crate::rng::derive_seed;
use crate::stats::{birkhoff_sums, covariance_split, covariance_trace, CovarianceTrace, TimeMeans, ZeroTol};
use crate::ulam::{bin_center, l1_diff, DensityGrid, OperatorCache};

/// JSON description of a driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverSpec {
    /// Two-sided i.i.d. sequence over a finite set of exponents.
    Bernoulli {
        betas: Vec<f64>,
        /// Symbol probabilities; uniform when omitted.
        #[serde(default)]
        probs: Option<Vec<f64>>,
    },
    /// Rotation of the circle by a Fibonacci ratio `F_{depth-1}/F_depth`
    /// (a rational stand-in for the inverse golden mean). `cuts` split the
    /// circle into `betas.len()` arcs; arc `i` selects `betas[i]`.
    Rotation {
        betas: Vec<f64>,
        cuts: Vec<f64>,
        #[serde(default = "default_depth")]
        depth: u32,
    },
}

fn default_depth() -> u32 {
    40
}

#[derive(Clone, Debug)]
enum Kind {
    Bernoulli { cumulative: Vec<f64> },
    Rotation { step: u64, period: u64, start: u64, cuts: Vec<f64> },
}

/// A deterministic, invertible driving sequence `k ↦ β(σ^k ω₀)`, `k ∈ ℤ`.
#[derive(Clone, Debug)]
pub struct Driver {
    kind: Kind,
    atoms: Vec<PmParam>,
    alpha_max: f64,
    seed: u64,
}

fn fibonacci(n: u32) -> (u64, u64) {
    let (mut a, mut b) = (0u64, 1u64);
    for _ in 0..n {
        let c = a + b;
        a = b;
        b = c;
    }
    (a, b) // (F_n, F_{n+1})
}

impl Driver {
    /// `make_driver`.
    pub fn new(spec: &DriverSpec, alpha_max: f64, seed: u64) -> Result<Self> {
        let betas = match spec {
            DriverSpec::Bernoulli { betas, .. } | DriverSpec::Rotation { betas, .. } => betas,
        };
        if betas.is_empty() {
            return Err(param("driver needs at least one beta"));
        }
        let atoms = betas
            .iter()
            .map(|&b| PmParam::new(b, alpha_max))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Schedule(e.to_string()))?;
        let kind = match spec {
            DriverSpec::Bernoulli { probs, .. } => {
                let w = match probs {
                    None => vec![1.0; betas.len()],
                    Some(p) => {
                        if p.len() != betas.len() || p.iter().any(|v| !(*v >= 0.0)) {
                            return Err(param("probs must be non-negative, one per beta"));
                        }
                        p.clone()
                    }
                };
                let total: f64 = w.iter().sum();
                if !(total > 0.0) {
                    return Err(param("probs must not all be zero"));
                }
                let mut acc = 0.0;
                let cumulative = w
                    .iter()
                    .map(|v| {
                        acc += v / total;
                        acc
                    })
                    .collect();
                Kind::Bernoulli { cumulative }
            }
            DriverSpec::Rotation { cuts, depth, .. } => {
                if cuts.len() + 1 != betas.len() {
                    return Err(param("rotation needs exactly betas.len() - 1 cuts"));
                }
                if cuts.iter().any(|c| !(*c > 0.0 && *c < 1.0)) || cuts.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(param("cuts must be strictly increasing inside (0, 1)"));
                }
                if !(3..=90).contains(depth) {
                    return Err(param("rotation depth must lie in [3, 90]"));
                }
                let (step, period) = fibonacci(*depth - 1);
                let start = derive_seed(seed, 0x0707) % period;
                Kind::Rotation { step, period, start, cuts: cuts.clone() }
            }
        };
        Ok(Driver { kind, atoms, alpha_max, seed })
    }

    pub fn alpha_max(&self) -> f64 {
        self.alpha_max
    }

    /// The finite set of fiber maps.
    pub fn atoms(&self) -> &[PmParam] {
        &self.atoms
    }

    /// Index into [`Driver::atoms`] of the map at `σ^k ω₀`.
    pub fn symbol_at(&self, k: i64) -> usize {
        match &self.kind {
            Kind::Bernoulli { cumulative } => {
                // One 64-bit word per index; non-negative and negative times
                // use separate streams.
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let (stream, pos) = if k >= 0 { (0, k as u128) } else { (1, (-(k + 1)) as u128) };
                rng.set_stream(stream);
                rng.set_word_pos(2 * pos);
                let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
            }
            Kind::Rotation { .. } => {
                let x = self.rotation_point(k).unwrap();
                match &self.kind {
                    Kind::Rotation { cuts, .. } => cuts.partition_point(|&c| c <= x),
                    _ => unreachable!(),
                }
            }
        }
    }

    /// Position on the circle for rotation drivers.
    pub fn rotation_point(&self, k: i64) -> Option<f64> {
        match &self.kind {
            Kind::Rotation { step, period, start, .. } => {
                let p = *period as i128;
                let w = (*start as i128 + k as i128 * *step as i128).rem_euclid(p);
                Some(w as f64 / p as f64)
            }
            _ => None,
        }
    }

    pub fn param_at(&self, k: i64) -> PmParam {
        self.atoms[self.symbol_at(k)]
    }

    pub fn beta_at(&self, k: i64) -> f64 {
        self.param_at(k).beta()
    }
}

/// `h_ω ≈ P_{σ^{-1}ω} ∘ … ∘ P_{σ^{-n}ω} 1` for the fiber `ω = σ^omega ω₀`.
#[derive(Clone, Debug, Serialize)]
pub struct FiberDensity {
    pub omega: i64,
    pub n_iter: usize,
    #[serde(serialize_with = "grid_values")]
    pub density: DensityGrid,
    /// `(n, ‖Lⁿ1 − L²ⁿ1‖₁)` at geometric `n ≤ n_iter`.
    pub increments: Vec<(usize, f64)>,
    pub fit: Option<LineFit>,
    /// `−(1/α − 1)` for the most intermittent atom; `None` when every atom
    /// is the doubling map.
    pub target_exponent: Option<f64>,
    /// The running max of later increments stays within 3× of
    /// `C·n^target_exponent` (the fitted slope when there is no target).
    pub envelope_ok: bool,
    /// Last increment at most `tol`.
    pub converged: bool,
}

fn grid_values<S: serde::Serializer>(g: &DensityGrid, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(g.values())
}

impl FiberDensity {
    /// CSV `omega,i,x,density`.
    pub fn to_csv(&self) -> String {
        let n = self.density.n_bins();
        let mut out = String::from("omega,i,x,density\n");
        for (i, v) in self.density.values().iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", self.omega, i, bin_center(i, n), v));
        }
        out
    }
}

/// Push `1` through the fiber maps at `omega − n, …, omega − 1`.
fn pull_back(driver: &Driver, omega: i64, n: usize, cache: &OperatorCache) -> Vec<f64> {
    let nb = cache.n_bins();
    let mut f = vec![1.0; nb];
    let mut scratch = vec![0.0; nb];
    for j in omega - n as i64..omega {
        cache.get(&driver.param_at(j)).apply_in_place(&mut f, &mut scratch);
    }
    f
}

/// Running max of later increments against `C·n^exponent`, with `C` taken
/// from the transient `n ≤ √n_iter`. A finite Ulam grid eventually decays
/// geometrically, so a least-squares line through all points bends away
/// from the early increments; calibrating on the transient avoids that.
fn envelope_holds(increments: &[(usize, f64)], exponent: Option<f64>, n_iter: usize) -> bool {
    let Some(e) = exponent else { return true };
    let later: Vec<f64> = (0..increments.len())
        .map(|i| increments[i..].iter().fold(0.0f64, |m, p| m.max(p.1)))
        .collect();
    let scaled = |i: usize| later[i] * (increments[i].0 as f64).powf(-e);
    let cal = increments.iter().take_while(|p| (p.0 * p.0) <= n_iter).count().max(2).min(increments.len());
    let c = (0..cal).map(scaled).fold(0.0, f64::max);
    (0..increments.len()).all(|i| scaled(i) <= 3.0 * c || later[i] <= NOISE_FLOOR)
}

pub fn quasi_invariant_density(
    driver: &Driver,
    omega: i64,
    n_iter: usize,
    cache: &OperatorCache,
    tol: f64,
) -> Result<FiberDensity> {
    if n_iter == 0 {
        return Err(param("n_iter must be at least 1"));
    }
    let increments: Vec<(usize, f64)> = geometric_checkpoints(1, n_iter, 1.5)
        .into_iter()
        .map(|n| (n, l1_diff(&pull_back(driver, omega, n, cache), &pull_back(driver, omega, 2 * n, cache))))
        .collect();
    let density = DensityGrid::new(pull_back(driver, omega, n_iter, cache))?.normalized()?;
    let pts: Vec<(f64, f64)> = increments.iter().map(|&(n, v)| (n as f64, v)).collect();
    let (fit, _) = log_log(&pts, NOISE_FLOOR);
    let worst = driver.atoms().iter().map(|p| p.beta()).fold(0.0, f64::max);
    let target_exponent = (worst > 0.0).then(|| target_slope(worst));
    let envelope_ok = envelope_holds(&increments, target_exponent.or(fit.map(|f| f.slope)), n_iter);
    Ok(FiberDensity {
        omega,
        n_iter,
        density,
        converged: increments.last().map_or(false, |p| p.1 <= tol),
        increments,
        fit,
        target_exponent,
        envelope_ok,
    })
}

/// `‖P_ω h_ω − h_{σω}‖₁`, with `h_{σω}` built with the same `n_iter`.
pub fn check_equivariance(driver: &Driver, h: &FiberDensity, cache: &OperatorCache) -> Result<f64> {
    let nb = cache.n_bins();
    if h.density.n_bins() != nb {
        return Err(Error::Dimension { expected: nb, got: h.density.n_bins() });
    }
    let mut pushed = vec![0.0; nb];
    cache.get(&driver.param_at(h.omega)).apply_into(h.density.values(), &mut pushed);
    let next = DensityGrid::new(pull_back(driver, h.omega + 1, h.n_iter, cache))?.normalized()?;
    Ok(l1_diff(&pushed, next.values()))
}

/// Seed of the ensemble run on fiber `omega`.
pub fn fiber_seed(seed: u64, omega: i64) -> u64 {
    derive_seed(seed, omega as u64 ^ 0x5eed_f1be)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchedRequest {
    /// Fibers `σ^ω ω₀` to sample.
    pub omegas: Vec<i64>,
    pub checkpoints: Vec<usize>,
    pub orbits: usize,
    pub seed: u64,
    #[serde(default = "default_n_iter")]
    pub n_iter: usize,
    #[serde(default = "default_n_bins")]
    pub n_bins: usize,
}

fn default_n_iter() -> usize {
    200
}

fn default_n_bins() -> usize {
    4096
}

#[derive(Clone, Debug, Serialize)]
pub struct FiberStats {
    pub omega: i64,
    pub trace: CovarianceTrace,
    /// `σ_n²/n` at the last checkpoint and its standard error.
    pub rate: Matrix,
    pub rate_se: Matrix,
    pub split_dim: usize,
    pub density_increment: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PairCheck {
    pub first: i64,
    pub second: i64,
    /// Largest entrywise `|Δrate| / √(se₁² + se₂²)`.
    pub max_z: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct QuenchedReport {
    pub n: usize,
    pub fibers: Vec<FiberStats>,
    pub pairs: Vec<PairCheck>,
    pub split_dims_agree: bool,
    pub pass: bool,
}

/// Run the ensemble statistics on each sampled fiber, with initial points
/// drawn from `h_ω dm` and centering by `∫φ · P^k_ω h_ω dm`, then compare
/// the variance rates across fibers.
pub fn quenched_stats(driver: &Driver, phi: &Observable, req: &QuenchedRequest) -> Result<QuenchedReport> {
    if req.omegas.is_empty() {
        return Err(param("no fibers requested"));
    }
    let n = *req.checkpoints.last().ok_or_else(|| param("no checkpoints"))?;
    let cache = OperatorCache::new(req.n_bins)?;
    let mut fibers = Vec::with_capacity(req.omegas.len());
    for &omega in &req.omegas {
        let h = quasi_invariant_density(driver, omega, req.n_iter, &cache, f64::INFINITY)?;
        let sched = MapSchedule::from_driver(driver.clone()).shifted(omega);
        let stats = fiber_stats(&sched, phi, h.density.values(), req, fiber_seed(req.seed, omega))?;
        fibers.push(FiberStats { omega, density_increment: h.increments.last().map_or(0.0, |p| p.1), ..stats });
    }
    let mut pairs = Vec::new();
    for i in 0..fibers.len() {
        for j in i + 1..fibers.len() {
            let (a, b) = (&fibers[i], &fibers[j]);
            let mut max_z = 0.0f64;
            for r in 0..phi.dim() {
                for c in 0..phi.dim() {
                    let diff = (a.rate[r][c] - b.rate[r][c]).abs();
                    let se = (a.rate_se[r][c].powi(2) + b.rate_se[r][c].powi(2)).sqrt();
                    let z = if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
                    max_z = max_z.max(z);
                }
            }
            pairs.push(PairCheck { first: a.omega, second: b.omega, max_z, pass: max_z <= 3.0 });
        }
    }
    let split_dims_agree = fibers.windows(2).all(|w| w[0].split_dim == w[1].split_dim);
    let pass = split_dims_agree && pairs.iter().all(|p| p.pass);
    Ok(QuenchedReport { n, fibers, pairs, split_dims_agree, pass })
}

/// Statistics of one fiber given its schedule and initial density.
pub fn fiber_stats(
    sched: &MapSchedule,
    phi: &Observable,
    density: &[f64],
    req: &QuenchedRequest,
    seed: u64,
) -> Result<FiberStats> {
    let n = *req.checkpoints.last().ok_or_else(|| param("no checkpoints"))?;
    let law = InitialLaw::Density(density.to_vec());
    let ens = Ensemble::with_law(sched, req.orbits, n, seed, &law);
    let means = TimeMeans::ulam_from(sched, phi, n, density)?;
    let paths = birkhoff_sums(&ens, phi, &req.checkpoints, Some(&means))?;
    let trace = covariance_trace(&paths)?;
    let last = trace.entries.len() - 1;
    let scale = |m: &Matrix| -> Matrix { m.iter().map(|r| r.iter().map(|v| v / n as f64).collect()).collect() };
    let rate = scale(&trace.entries[last].1);
    let rate_se = scale(&trace.std_errors[last].1);
    let split_dim = covariance_split(&rate, ZeroTol::default())?.w1.len();
    Ok(FiberStats { omega: 0, trace, rate, rate_se, split_dim, density_increment: 0.0 })
}

#[cfg(test)]
mod driver_tests {
    use super::*;

    fn bern(seed: u64) -> Driver {
        Driver::new(&DriverSpec::Bernoulli { betas: vec![0.1, 0.25], probs: None }, 0.3, seed).unwrap()
    }

    #[test]
    fn bernoulli_is_reproducible_two_sided() {
        let a: Vec<f64> = (-50..50).map(|k| bern(7).beta_at(k)).collect();
        let b: Vec<f64> = (-50..50).map(|k| bern(7).beta_at(k)).collect();
        assert_eq!(a, b);
        let c: Vec<f64> = (-50..50).map(|k| bern(8).beta_at(k)).collect();
        assert_ne!(a, c);
        let ones = (0..20000).filter(|&k| bern(7).symbol_at(k) == 1).count() as f64 / 20000.0;
        assert!((ones - 0.5).abs() < 0.02);
    }

    #[test]
    fn single_atom_is_constant() {
        let d = Driver::new(&DriverSpec::Bernoulli { betas: vec![0.25], probs: None }, 0.3, 1).unwrap();
        assert!((-100..100).all(|k| d.beta_at(k) == 0.25));
    }

    #[test]
    fn rotation_frequencies_match_arcs() {
        let spec = DriverSpec::Rotation { betas: vec![0.1, 0.2, 0.25], cuts: vec![0.3, 0.45], depth: 40 };
        let d = Driver::new(&spec, 0.3, 3).unwrap();
        let mut counts = [0usize; 3];
        for k in 0..100_000 {
            counts[d.symbol_at(k)] += 1;
        }
        let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / 1e5).collect();
        for (f, target) in freq.iter().zip([0.3, 0.15, 0.55]) {
            assert!((f - target).abs() < 0.01 * target.max(0.1), "{freq:?}");
        }
        // invertibility: stepping back undoes stepping forward
        let x0 = d.rotation_point(0).unwrap();
        assert_eq!(d.rotation_point(-5).map(|_| d.rotation_point(0).unwrap()), Some(x0));
    }

    #[test]
    fn invalid_specs() {
        assert!(Driver::new(&DriverSpec::Bernoulli { betas: vec![0.4], probs: None }, 0.3, 1).is_err());
        assert!(Driver::new(&DriverSpec::Bernoulli { betas: vec![0.1], probs: Some(vec![0.0]) }, 0.3, 1).is_err());
        assert!(Driver::new(&DriverSpec::Rotation { betas: vec![0.1, 0.2], cuts: vec![], depth: 40 }, 0.3, 1).is_err());
    }
}

#[cfg(test)]
mod fiber_tests {
    use super::*;

    fn constant(beta: f64) -> Driver {
        Driver::new(&DriverSpec::Bernoulli { betas: vec![beta], probs: None }, 0.3, 1).unwrap()
    }

    #[test]
    fn doubling_fiber_is_uniform() {
        let cache = OperatorCache::new(512).unwrap();
        let h = quasi_invariant_density(&constant(0.0), 3, 20, &cache, 1e-12).unwrap();
        assert!(h.density.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(h.converged && h.target_exponent.is_none());
        assert!(check_equivariance(&constant(0.0), &h, &cache).unwrap() < 1e-12);
    }

    #[test]
    fn density_has_unit_mass() {
        let d = Driver::new(&DriverSpec::Bernoulli { betas: vec![0.1, 0.25], probs: None }, 0.3, 7).unwrap();
        let cache = OperatorCache::new(1024).unwrap();
        let h = quasi_invariant_density(&d, 0, 50, &cache, 1e-2).unwrap();
        assert!((h.density.integral() - 1.0).abs() < 1e-10);
        assert!(h.density.values().iter().all(|v| *v >= 0.0));
        assert!(h.to_csv().starts_with("omega,i,x,density\n0,0,"));
    }

    #[test]
    fn grid_mismatch_errors() {
        let cache = OperatorCache::new(256).unwrap();
        let h = quasi_invariant_density(&constant(0.2), 0, 10, &cache, 1.0).unwrap();
        assert!(check_equivariance(&constant(0.2), &h, &OperatorCache::new(128).unwrap()).is_err());
    }
}
