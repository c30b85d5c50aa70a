//! Splitting `ℝ^d = W₁ ⊕ W₂` into directions of positive and vanishing
//! asymptotic variance.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::linalg::{from_dmatrix, sym_eigen, to_dmatrix, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroTol {
    /// Eigenvalues below `tol · trace/d` count as zero.
    Relative(f64),
    Absolute(f64),
}

impl Default for ZeroTol {
    fn default() -> Self {
        ZeroTol::Relative(1e-6)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CovarianceSplit {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub threshold: f64,
    /// Orthonormal basis vectors of `W₁` and `W₂`.
    pub w1: Vec<Vec<f64>>,
    pub w2: Vec<Vec<f64>>,
    pub pi1: Matrix,
    pub pi2: Matrix,
}

pub fn covariance_split(sigma2: &Matrix, zero_tol: ZeroTol) -> Result<CovarianceSplit> {
    let a = to_dmatrix(sigma2)?;
    let d = a.nrows();
    let (values, vectors) = sym_eigen(&a)?;
    let threshold = match zero_tol {
        ZeroTol::Relative(t) if t >= 0.0 => t * a.trace().max(0.0) / d.max(1) as f64,
        ZeroTol::Absolute(t) if t >= 0.0 => t,
        _ => return Err(param("zero tolerance must be non-negative")),
    };
    let mut w1 = Vec::new();
    let mut w2 = Vec::new();
    for (i, v) in values.iter().enumerate() {
        let col: Vec<f64> = vectors.column(i).iter().copied().collect();
        if *v > threshold {
            w1.push(col);
        } else {
            w2.push(col);
        }
    }
    let mut p1 = DMatrix::zeros(d, d);
    for v in &w1 {
        let v = nalgebra::DVector::from_column_slice(v);
        p1 += &v * v.transpose();
    }
    let p2 = DMatrix::identity(d, d) - &p1;
    Ok(CovarianceSplit { eigenvalues: values, threshold, w1, w2, pi1: from_dmatrix(&p1), pi2: from_dmatrix(&p2) })
}
