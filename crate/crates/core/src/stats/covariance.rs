//! Sample covariance `σ_n²` of Birkhoff sums across orbits.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{log_log, LineFit};
use crate::linalg::{lambda_min, Matrix};
use crate::stats::sums::SumPaths;

#[derive(Clone, Debug, Serialize)]
pub struct CovarianceTrace {
    pub d: usize,
    pub orbits: usize,
    pub entries: Vec<(usize, Matrix)>,
    /// Jackknife standard errors, entrywise.
    pub std_errors: Vec<(usize, Matrix)>,
    pub lambda_min: Vec<(usize, f64)>,
}

pub fn covariance_trace(paths: &SumPaths) -> Result<CovarianceTrace> {
    let m = paths.orbits();
    if m < 2 {
        return Err(Error::Insufficient(format!("covariance needs at least 2 orbits, got {m}")));
    }
    let d = paths.dim();
    let mf = m as f64;
    let mut entries = Vec::new();
    let mut std_errors = Vec::new();
    let mut lmin = Vec::new();
    for (c, &n) in paths.checkpoints().iter().enumerate() {
        let mean: Vec<f64> = (0..d).map(|a| (0..m).map(|i| paths.sum(i, c)[a]).sum::<f64>() / mf).collect();
        let dev: Vec<Vec<f64>> = (0..m).map(|i| paths.sum(i, c).iter().zip(&mean).map(|(s, u)| s - u).collect()).collect();
        let mut cov = vec![vec![0.0; d]; d];
        let mut se = vec![vec![f64::NAN; d]; d];
        for a in 0..d {
            for b in a..d {
                let total: f64 = dev.iter().map(|u| u[a] * u[b]).sum();
                let v = total / (mf - 1.0);
                cov[a][b] = v;
                cov[b][a] = v;
                if m >= 3 {
                    // Leave-one-out covariance: (total − u_i w_i · m/(m−1)) / (m−2).
                    let loo: Vec<f64> =
                        dev.iter().map(|u| (total - u[a] * u[b] * mf / (mf - 1.0)) / (mf - 2.0)).collect();
                    let lm = loo.iter().sum::<f64>() / mf;
                    let s = ((mf - 1.0) / mf * loo.iter().map(|x| (x - lm).powi(2)).sum::<f64>()).sqrt();
                    se[a][b] = s;
                    se[b][a] = s;
                }
            }
        }
        let dm = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        lmin.push((n, lambda_min(&dm)?));
        entries.push((n, cov));
        std_errors.push((n, se));
    }
    Ok(CovarianceTrace { d, orbits: m, entries, std_errors, lambda_min: lmin })
}

impl CovarianceTrace {
    /// Deterministic trace `σ_n² = n · rate`, e.g. from a Green–Kubo value.
    pub fn from_rate(rate: &Matrix, checkpoints: &[usize]) -> Result<Self> {
        let d = rate.len();
        let dm = DMatrix::from_fn(d, d, |i, j| rate[i][j]);
        let l = lambda_min(&dm)?;
        let scale = |n: usize| rate.iter().map(|r| r.iter().map(|v| v * n as f64).collect()).collect();
        Ok(CovarianceTrace {
            d,
            orbits: 0,
            entries: checkpoints.iter().map(|&n| (n, scale(n))).collect(),
            std_errors: checkpoints.iter().map(|&n| (n, vec![vec![0.0; d]; d])).collect(),
            lambda_min: checkpoints.iter().map(|&n| (n, l * n as f64)).collect(),
        })
    }

    pub fn index_of(&self, n: usize) -> Option<usize> {
        self.entries.iter().position(|(k, _)| *k == n)
    }

    pub fn at(&self, n: usize) -> Option<&Matrix> {
        self.index_of(n).map(|i| &self.entries[i].1)
    }

    /// Log–log slope of `λ(σ_n²)` in `n`.
    pub fn growth_fit(&self) -> Option<LineFit> {
        let pts: Vec<(f64, f64)> = self.lambda_min.iter().map(|&(n, l)| (n as f64, l)).collect();
        log_log(&pts, 0.0).0
    }

    /// CSV `n,σ11,σ12,…,lambda_min` (all entries, row-major).
    pub fn to_csv(&self) -> String {
        let sep = if self.d >= 10 { "_" } else { "" };
        let mut head = vec!["n".to_string()];
        for a in 1..=self.d {
            for b in 1..=self.d {
                head.push(format!("σ{a}{sep}{b}"));
            }
        }
        head.push("lambda_min".into());
        let mut out = head.join(",") + "\n";
        for ((n, m), (_, l)) in self.entries.iter().zip(&self.lambda_min) {
            let mut row = vec![n.to_string()];
            row.extend(m.iter().flatten().map(|v| v.to_string()));
            row.push(l.to_string());
            out.push_str(&(row.join(",") + "\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::sums::gaussian_paths;

    #[test]
    fn identical_sums_have_zero_variance() {
        let p = SumPaths::new(vec![5], 1, vec![2.0; 10], vec![2.0; 10]).unwrap();
        let t = covariance_trace(&p).unwrap();
        assert_eq!(t.entries[0].1[0][0], 0.0);
        assert_eq!(t.lambda_min[0].1, 0.0);
    }

    #[test]
    fn needs_two_orbits() {
        let p = SumPaths::new(vec![5], 1, vec![2.0], vec![2.0]).unwrap();
        assert!(matches!(covariance_trace(&p), Err(Error::Insufficient(_))));
    }

    #[test]
    fn jackknife_matches_brute_force() {
        let p = gaussian_paths(2, 40, &[3, 8], 4).unwrap();
        let t = covariance_trace(&p).unwrap();
        let m = 40;
        let cov = |skip: usize, a: usize, b: usize| {
            let idx: Vec<usize> = (0..m).filter(|&i| i != skip).collect();
            let k = idx.len() as f64;
            let ma = idx.iter().map(|&i| p.sum(i, 1)[a]).sum::<f64>() / k;
            let mb = idx.iter().map(|&i| p.sum(i, 1)[b]).sum::<f64>() / k;
            idx.iter().map(|&i| (p.sum(i, 1)[a] - ma) * (p.sum(i, 1)[b] - mb)).sum::<f64>() / (k - 1.0)
        };
        let loo: Vec<f64> = (0..m).map(|i| cov(i, 0, 1)).collect();
        let lm = loo.iter().sum::<f64>() / m as f64;
        let se = ((m as f64 - 1.0) / m as f64 * loo.iter().map(|x| (x - lm).powi(2)).sum::<f64>()).sqrt();
        assert!((t.std_errors[1].1[0][1] - se).abs() < 1e-10);
    }

    #[test]
    fn csv_header() {
        let p = gaussian_paths(2, 10, &[3], 4).unwrap();
        let csv = covariance_trace(&p).unwrap().to_csv();
        assert!(csv.starts_with("n,σ11,σ12,σ21,σ22,lambda_min\n3,"));
    }
}
