//! Ulam discretization of the transfer operators on a uniform grid.
//!
//! Densities are piecewise constant on `N` equal bins. The matrix entry
//! `(i, j)` is `m(B_i ∩ T⁻¹B_j) / m(B_i)`, so rows sum to one and a density
//! `f` is pushed forward as `(Pf)_j = Σ_i f_i M_ij`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::maps::{MapSchedule, PmParam};

/// Piecewise-constant function on `N` uniform bins of `[0,1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    values: Vec<f64>,
}

impl DensityGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(domain("empty grid"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(domain("non-finite grid value"));
        }
        Ok(DensityGrid { values })
    }

    pub fn uniform(n: usize) -> Self {
        DensityGrid { values: vec![1.0; n] }
    }

    /// Sample `f` at bin centers.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Self {
        DensityGrid { values: (0..n).map(|i| f(bin_center(i, n))).collect() }
    }

    pub fn n_bins(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn integral(&self) -> f64 {
        mean(&self.values)
    }

    pub fn l1_norm(&self) -> f64 {
        l1(&self.values)
    }

    pub fn l1_distance(&self, other: &DensityGrid) -> Result<f64> {
        check_dim(self.n_bins(), other.n_bins())?;
        Ok(l1_diff(&self.values, &other.values))
    }

    /// Scaled to unit integral.
    pub fn normalized(&self) -> Result<DensityGrid> {
        let s = self.integral();
        if s <= 0.0 {
            return Err(domain("cannot normalize a grid with non-positive integral"));
        }
        Ok(DensityGrid { values: self.values.iter().map(|v| v / s).collect() })
    }

    /// CSV `i,x,value` with bin centers.
    pub fn to_csv(&self) -> String {
        let n = self.n_bins();
        let mut s = String::from("i,x,value\n");
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", i, bin_center(i, n), v));
        }
        s
    }
}

#[inline]
pub fn bin_center(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `∫|f| dm` for a grid function.
pub(crate) fn l1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64
}

pub(crate) fn l1_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}

/// Sparse Ulam matrix for one map of the family.
#[derive(Clone, Debug)]
pub struct UlamOperator {
    n_bins: usize,
    param: PmParam,
    // Row-major (i -> j) storage, used for export and row checks.
    row_ptr: Vec<usize>,
    row_col: Vec<u32>,
    row_val: Vec<f64>,
    // Column-major copy so that the push-forward is a gather.
    col_ptr: Vec<usize>,
    col_row: Vec<u32>,
    col_val: Vec<f64>,
}

/// Overlap of `[a, b]` with consecutive cells `[pts[j], pts[j+1]]`,
/// accumulated into `(j, length)` pairs.
fn overlaps(a: f64, b: f64, pts: &[f64], out: &mut Vec<(usize, f64)>) {
    if b <= a {
        return;
    }
    let n = pts.len() - 1;
    let mut j = pts.partition_point(|&p| p <= a).saturating_sub(1);
    while j < n && pts[j] < b {
        let len = pts[j + 1].min(b) - pts[j].max(a);
        if len > 0.0 {
            out.push((j, len));
        }
        j += 1;
    }
}

impl UlamOperator {
    /// Assemble the matrix for `T_β` on `n_bins` bins (`ulam_matrix`).
    pub fn new(p: &PmParam, n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(domain("n_bins must be at least 2"));
        }
        let nf = n_bins as f64;
        // Preimages of the grid points under each branch.
        let mut left: Vec<f64> =
            (0..=n_bins).into_par_iter().map(|j| p.left_inverse(j as f64 / nf)).collect();
        left[0] = 0.0;
        left[n_bins] = 0.5;
        let right: Vec<f64> = (0..=n_bins).map(|j| 0.5 + 0.5 * (j as f64 / nf)).collect();

        let rows: Vec<Vec<(u32, f64)>> = (0..n_bins)
            .into_par_iter()
            .map(|i| {
                let a = i as f64 / nf;
                let b = (i + 1) as f64 / nf;
                let mut acc = Vec::with_capacity(6);
                overlaps(a, b.min(0.5), &left, &mut acc);
                overlaps(a.max(0.5), b, &right, &mut acc);
                acc.sort_by_key(|e| e.0);
                let mut merged: Vec<(u32, f64)> = Vec::with_capacity(acc.len());
                for (j, len) in acc {
                    match merged.last_mut() {
                        Some(last) if last.0 as usize == j => last.1 += len,
                        _ => merged.push((j as u32, len)),
                    }
                }
                let total: f64 = merged.iter().map(|e| e.1).sum();
                merged.iter_mut().for_each(|e| e.1 /= total);
                merged
            })
            .collect();

        let mut row_ptr = Vec::with_capacity(n_bins + 1);
        let mut row_col = Vec::new();
        let mut row_val = Vec::new();
        row_ptr.push(0);
        let mut counts = vec![0usize; n_bins];
        for r in &rows {
            for &(j, v) in r {
                row_col.push(j);
                row_val.push(v);
                counts[j as usize] += 1;
            }
            row_ptr.push(row_col.len());
        }
        let mut col_ptr = vec![0usize; n_bins + 1];
        for j in 0..n_bins {
            col_ptr[j + 1] = col_ptr[j] + counts[j];
        }
        let mut fill = col_ptr.clone();
        let mut col_row = vec![0u32; row_col.len()];
        let mut col_val = vec![0f64; row_col.len()];
        for (i, r) in rows.iter().enumerate() {
            for &(j, v) in r {
                let slot = &mut fill[j as usize];
                col_row[*slot] = i as u32;
                col_val[*slot] = v;
                *slot += 1;
            }
        }
        Ok(UlamOperator { n_bins, param: *p, row_ptr, row_col, row_val, col_ptr, col_row, col_val })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn param(&self) -> PmParam {
        self.param
    }

    pub fn nnz(&self) -> usize {
        self.row_val.len()
    }

    /// Entries of row `i` as `(j, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.row_col[r.clone()].iter().zip(&self.row_val[r]).map(|(&j, &v)| (j as usize, v))
    }

    /// All nonzero entries `(i, j, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_bins).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// Dense copy; only sensible for small grids.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n_bins]; self.n_bins];
        for (i, j, v) in self.entries() {
            m[i][j] = v;
        }
        m
    }

    /// Coordinate list CSV `i,j,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j,value\n");
        for (i, j, v) in self.entries() {
            s.push_str(&format!("{i},{j},{v}\n"));
        }
        s
    }

    /// Push-forward into a caller buffer; no allocation.
    #[inline]
    pub fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.n_bins);
        for (j, o) in out.iter_mut().enumerate() {
            let r = self.col_ptr[j]..self.col_ptr[j + 1];
            let mut acc = 0.0;
            for (&i, &v) in self.col_row[r.clone()].iter().zip(&self.col_val[r]) {
                acc += f[i as usize] * v;
            }
            *o = acc;
        }
    }

    /// In-place push-forward using a scratch buffer.
    pub fn apply_in_place(&self, f: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        scratch.resize(self.n_bins, 0.0);
        self.apply_into(f, scratch);
        std::mem::swap(f, scratch);
    }

    /// Discretized `P f` (`apply`).
    pub fn apply(&self, f: &DensityGrid) -> Result<DensityGrid> {
        check_dim(self.n_bins, f.n_bins())?;
        let mut out = vec![0.0; self.n_bins];
        self.apply_into(f.values(), &mut out);
        Ok(DensityGrid { values: out })
    }

    /// Fixed density by power iteration from the uniform density; stops when
    /// successive iterates differ by less than `tol` in L¹.
    pub fn fixed_density(&self, tol: f64, max_iter: usize) -> (DensityGrid, usize) {
        let mut f = vec![1.0; self.n_bins];
        let mut g = vec![0.0; self.n_bins];
        for it in 1..=max_iter {
            self.apply_into(&f, &mut g);
            let diff = l1_diff(&f, &g);
            std::mem::swap(&mut f, &mut g);
            if diff < tol {
                return (DensityGrid { values: f }, it);
            }
        }
        (DensityGrid { values: f }, max_iter)
    }
}

/// Sequential application `P_n ∘ … ∘ P_1` (`compose_sequential`): the first
/// operator in the list is applied first. Only matrix–vector products.
pub struct Pipeline<'a> {
    ops: Vec<&'a UlamOperator>,
}

impl<'a> Pipeline<'a> {
    pub fn new(ops: Vec<&'a UlamOperator>) -> Result<Self> {
        if let Some(first) = ops.first() {
            for op in &ops {
                check_dim(first.n_bins, op.n_bins)?;
            }
        }
        Ok(Pipeline { ops })
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn apply(&self, f: &DensityGrid) -> Result<DensityGrid> {
        let mut cur = f.values.clone();
        let mut scratch = vec![0.0; cur.len()];
        for op in &self.ops {
            check_dim(op.n_bins, cur.len())?;
            op.apply_in_place(&mut cur, &mut scratch);
        }
        Ok(DensityGrid { values: cur })
    }
}

/// Shared cache of operators keyed by `β`, for schedules that revisit a
/// finite set of maps.
#[derive(Clone)]
pub struct OperatorCache {
    n_bins: usize,
    ops: Arc<Mutex<HashMap<u64, Arc<UlamOperator>>>>,
}

impl OperatorCache {
    pub fn new(n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(domain("n_bins must be at least 2"));
        }
        Ok(OperatorCache { n_bins, ops: Arc::default() })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn get(&self, p: &PmParam) -> Arc<UlamOperator> {
        let key = p.beta().to_bits();
        if let Some(op) = self.ops.lock().unwrap().get(&key) {
            return op.clone();
        }
        // Built outside the lock; a racing duplicate build is harmless.
        let op = Arc::new(UlamOperator::new(p, self.n_bins).expect("n_bins checked"));
        self.ops.lock().unwrap().entry(key).or_insert(op).clone()
    }

    /// `P_k` of a schedule.
    pub fn step(&self, s: &MapSchedule, k: i64) -> Arc<UlamOperator> {
        self.get(&s.map(k))
    }
}

/// Iterates `P^k 1` along a schedule, exposing each step.
pub struct Pushforward<'a> {
    schedule: &'a MapSchedule,
    cache: &'a OperatorCache,
    k: i64,
    density: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> Pushforward<'a> {
    pub fn new(schedule: &'a MapSchedule, cache: &'a OperatorCache) -> Self {
        let n = cache.n_bins();
        Pushforward { schedule, cache, k: 0, density: vec![1.0; n], scratch: vec![0.0; n] }
    }

    /// Start from `initial` instead of `1`.
    pub fn from_density(schedule: &'a MapSchedule, cache: &'a OperatorCache, initial: &[f64]) -> Result<Self> {
        check_dim(cache.n_bins(), initial.len())?;
        Ok(Pushforward { schedule, cache, k: 0, density: initial.to_vec(), scratch: vec![0.0; initial.len()] })
    }

    /// Current time `k`; the density is `P^k 1`.
    pub fn time(&self) -> i64 {
        self.k
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn advance(&mut self) {
        self.k += 1;
        let op = self.cache.step(self.schedule, self.k);
        op.apply_in_place(&mut self.density, &mut self.scratch);
    }

    pub fn advance_to(&mut self, k: i64) {
        while self.k < k {
            self.advance();
        }
    }
}
