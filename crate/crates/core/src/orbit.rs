//! Orbit iteration and reproducible ensembles.

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::maps::{MapSchedule, PmParam};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Orbit {
    pub x0: f64,
    /// `points[k-1] = T^k(x0)`.
    pub points: Vec<f64>,
}

impl Orbit {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with header `k,x`; row 0 is the initial point.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,x\n");
        s.push_str(&format!("0,{}\n", self.x0));
        for (k, x) in self.points.iter().enumerate() {
            s.push_str(&format!("{},{}\n", k + 1, x));
        }
        s
    }
}

/// Deterministic orbit `T^1 x0, …, T^n x0`.
pub fn iterate_orbit(s: &MapSchedule, x0: f64, n: usize) -> Result<Orbit> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(domain(format!("x0 = {x0} outside [0, 1]")));
    }
    Ok(Orbit { x0, points: orbit_iter(s, x0).take(n).collect() })
}

/// Streaming version of [`iterate_orbit`]; nothing is stored.
pub fn orbit_iter(s: &MapSchedule, x0: f64) -> impl Iterator<Item = f64> + '_ {
    let mut x = x0;
    (1i64..).map(move |k| {
        x = s.map(k).apply(x);
        x
    })
}

/// Law of the initial points.
#[derive(Clone, Debug)]
pub enum InitialLaw {
    Lebesgue,
    /// Piecewise-constant density on uniform bins, sampled by inverse CDF.
    Density(Vec<f64>),
}

impl InitialLaw {
    /// Normalized cumulative weights for a density law.
    fn cdf(&self) -> Option<Vec<f64>> {
        match self {
            InitialLaw::Lebesgue => None,
            InitialLaw::Density(v) => {
                let mut acc = 0.0;
                let mut c: Vec<f64> = v
                    .iter()
                    .map(|w| {
                        acc += w.max(0.0);
                        acc
                    })
                    .collect();
                let total = acc;
                c.iter_mut().for_each(|x| *x /= total);
                Some(c)
            }
        }
    }
}

/// A single orbit being advanced step by step with its own random stream.
///
/// Steps that are exact binary shifts in floating point (the right branch,
/// or the left branch of the doubling map) discard the lowest binary digit;
/// the stepper refills the vacated `2^-53` digit from the orbit's stream.
/// For the doubling map this reproduces exactly the orbit of a uniformly
/// drawn real number, which plain `f64` iteration cannot (it reaches 0 after
/// about 53 steps). For `β > 0` the refill only acts after right-branch
/// steps and perturbs at the level of round-off.
pub struct Stepper<'a> {
    maps: &'a [PmParam],
    k: usize,
    x: f64,
    rng: ChaCha8Rng,
    bits: u64,
    nbits: u32,
}

const LOW_DIGIT: f64 = 1.0 / 9_007_199_254_740_992.0; // 2^-53

impl<'a> Stepper<'a> {
    /// Current time `k` (number of maps applied).
    pub fn time(&self) -> usize {
        self.k
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    /// Apply `T_{k+1}`; returns the new point. Panics past the horizon.
    #[inline]
    pub fn step(&mut self) -> f64 {
        let p = self.maps[self.k];
        let shift = p.is_shift_at(self.x);
        let mut y = p.apply(self.x);
        if shift {
            if self.nbits == 0 {
                self.bits = self.rng.next_u64();
                self.nbits = 64;
            }
            if self.bits & 1 == 1 && y + LOW_DIGIT <= 1.0 {
                y += LOW_DIGIT;
            }
            self.bits >>= 1;
            self.nbits -= 1;
        }
        self.k += 1;
        self.x = y;
        y
    }

    pub fn horizon(&self) -> usize {
        self.maps.len()
    }
}

/// `m` independent orbits of length `n` from i.i.d. initial points.
///
/// Orbit `i` draws everything from stream `i` of `seed`, so results do not
/// depend on how orbits are distributed over threads.
pub struct Ensemble {
    maps: Vec<PmParam>,
    m: usize,
    seed: u64,
    cdf: Option<Vec<f64>>,
}

impl Ensemble {
    pub fn new(s: &MapSchedule, m: usize, n: usize, seed: u64) -> Self {
        Self::with_law(s, m, n, seed, &InitialLaw::Lebesgue)
    }

    pub fn with_law(s: &MapSchedule, m: usize, n: usize, seed: u64, law: &InitialLaw) -> Self {
        Ensemble { maps: s.maps(n), m, seed, cdf: law.cdf() }
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn length(&self) -> usize {
        self.maps.len()
    }

    /// Stepper for orbit `i`, positioned at its initial point.
    pub fn stepper(&self, i: usize) -> Stepper<'_> {
        let mut rng = rng::stream(self.seed, i as u64);
        let u: f64 = rng.random();
        let x = match &self.cdf {
            None => u,
            Some(c) => {
                let n = c.len();
                let j = c.partition_point(|&v| v <= u).min(n - 1);
                let lo = if j == 0 { 0.0 } else { c[j - 1] };
                let w = c[j] - lo;
                let frac = if w > 0.0 { ((u - lo) / w).clamp(0.0, 1.0) } else { 0.5 };
                ((j as f64 + frac) / n as f64).min(1.0)
            }
        };
        Stepper { maps: &self.maps, k: 0, x, rng, bits: 0, nbits: 0 }
    }

    /// Full orbit `i`.
    pub fn orbit(&self, i: usize) -> Orbit {
        let mut st = self.stepper(i);
        let x0 = st.x();
        let points = (0..self.length()).map(|_| st.step()).collect();
        Orbit { x0, points }
    }

    /// All orbits in index order.
    pub fn orbits(&self) -> impl Iterator<Item = Orbit> + '_ {
        (0..self.m).map(|i| self.orbit(i))
    }

    /// Run `f` on every orbit in parallel; results come back in index order.
    pub fn par_map<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, Stepper<'_>) -> T + Sync,
    {
        (0..self.m).into_par_iter().map(|i| f(i, self.stepper(i))).collect()
    }
}

/// Build an ensemble (`sample_ensemble`); validates sizes.
pub fn sample_ensemble(s: &MapSchedule, m: usize, n: usize, seed: u64) -> Result<Ensemble> {
    if m == 0 {
        return Err(domain("ensemble size must be at least 1"));
    }
    Ok(Ensemble::new(s, m, n, seed))
}
