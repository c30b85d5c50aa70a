//! Vector observables `φ: [0,1] → ℝ^d` built from simple Lipschitz pieces.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::maps::{lsv, ALPHA_CEILING};

/// One scalar component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Component {
    /// Coefficients `c0 + c1 x + c2 x² + …`.
    Polynomial(Vec<f64>),
    /// Knots `(x, y)` with strictly increasing `x` from 0 to 1.
    PiecewiseLinear(Vec<[f64; 2]>),
    /// `ψ − ψ∘T_β`, whose Birkhoff sums under `T_β` telescope.
    Coboundary { psi: Box<Component>, beta: f64 },
}

impl Component {
    fn validate(&self) -> Result<()> {
        match self {
            Component::Polynomial(c) => {
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(domain("non-finite polynomial coefficient"));
                }
            }
            Component::PiecewiseLinear(k) => {
                if k.len() < 2 {
                    return Err(domain("piecewise-linear component needs at least two knots"));
                }
                if k[0][0] != 0.0 || k[k.len() - 1][0] != 1.0 {
                    return Err(domain("piecewise-linear knots must start at 0 and end at 1"));
                }
                if k.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err(domain("piecewise-linear knots must be strictly increasing"));
                }
                if k.iter().any(|p| !p[1].is_finite()) {
                    return Err(domain("non-finite knot value"));
                }
            }
            Component::Coboundary { psi, beta } => {
                if !(*beta >= 0.0 && *beta < ALPHA_CEILING) {
                    return Err(domain(format!("coboundary beta {beta} outside [0, 1/2)")));
                }
                psi.validate()?;
            }
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Component::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &v| acc * x + v),
            Component::PiecewiseLinear(k) => {
                let i = k.partition_point(|p| p[0] <= x).clamp(1, k.len() - 1);
                let ([x0, y0], [x1, y1]) = (k[i - 1], k[i]);
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
            Component::Coboundary { psi, beta } => psi.eval(x) - psi.eval(lsv(*beta, x)),
        }
    }

    /// A Lipschitz constant on `[0,1]`. Coboundaries are discontinuous at
    /// `x = 1/2` (where `T` jumps from 1 to 0) unless `ψ(0) = ψ(1)`, in which
    /// case the bound is `Lip(ψ)·(1 + Lip(T))`; otherwise it is infinite.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            Component::Polynomial(c) => {
                c.iter().enumerate().skip(1).map(|(k, v)| k as f64 * v.abs()).sum()
            }
            Component::PiecewiseLinear(k) => k
                .windows(2)
                .map(|w| ((w[1][1] - w[0][1]) / (w[1][0] - w[0][0])).abs())
                .fold(0.0, f64::max),
            Component::Coboundary { psi, beta } => {
                if psi.eval(0.0) == psi.eval(1.0) {
                    psi.lipschitz_bound() * (3.0 + beta)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Upper bound on `sup |component|` over `[0,1]`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            Component::Polynomial(c) => c.iter().map(|v| v.abs()).sum(),
            Component::PiecewiseLinear(k) => k.iter().map(|p| p[1].abs()).fold(0.0, f64::max),
            Component::Coboundary { psi, .. } => 2.0 * psi.sup_bound(),
        }
    }
}

/// `φ = (φ_1, …, φ_d)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observable {
    components: Vec<Component>,
}

impl Observable {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(domain("observable needs at least one component"));
        }
        for c in &components {
            c.validate()?;
        }
        Ok(Observable { components })
    }

    pub fn scalar(c: Component) -> Result<Self> {
        Self::new(vec![c])
    }

    /// `slope·x + intercept`.
    pub fn linear(slope: f64, intercept: f64) -> Self {
        Observable { components: vec![Component::Polynomial(vec![intercept, slope])] }
    }

    pub fn constant(c: f64) -> Self {
        Observable { components: vec![Component::Polynomial(vec![c])] }
    }

    /// `(x − 1/2) − (T_β x − 1/2)`.
    pub fn centered_identity_coboundary(beta: f64) -> Result<Self> {
        Self::scalar(Component::Coboundary {
            psi: Box::new(Component::Polynomial(vec![-0.5, 1.0])),
            beta,
        })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    #[inline]
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.eval(x);
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    /// Largest Lipschitz constant over the components.
    pub fn lipschitz_bound(&self) -> f64 {
        self.components.iter().map(Component::lipschitz_bound).fold(0.0, f64::max)
    }

    pub fn sup_bound(&self) -> f64 {
        self.components.iter().map(Component::sup_bound).fold(0.0, f64::max)
    }

    /// Component values sampled at the centers of `n` uniform bins,
    /// one vector per component.
    pub fn sample_bins(&self, n: usize) -> Vec<Vec<f64>> {
        self.components
            .iter()
            .map(|c| (0..n).map(|i| c.eval((i as f64 + 0.5) / n as f64)).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn evaluation() {
        let p = Component::Polynomial(vec![1.0, -2.0, 3.0]);
        assert_eq!(p.eval(2.0), 1.0 - 4.0 + 12.0);
        let pw = Component::PiecewiseLinear(vec![[0.0, 0.0], [0.5, 1.0], [1.0, 0.0]]);
        assert_eq!(pw.eval(0.25), 0.5);
        assert_eq!(pw.eval(0.75), 0.5);
        assert_eq!(pw.eval(1.0), 0.0);
        assert_eq!(pw.lipschitz_bound(), 2.0);
        let cb = Observable::centered_identity_coboundary(0.0).unwrap();
        assert_eq!(cb.eval(0.25), vec![-0.25]);
        assert_eq!(cb.eval(0.75), vec![0.25]);
        assert!(cb.lipschitz_bound().is_infinite());
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(Observable::scalar(Component::PiecewiseLinear(vec![[0.0, 0.0]])).is_err());
        assert!(Observable::scalar(Component::PiecewiseLinear(vec![[0.0, 0.0], [0.9, 1.0]])).is_err());
        assert!(Observable::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn lipschitz_bound_is_valid(
            coeffs in proptest::collection::vec(-3.0f64..3.0, 1..5),
            x in 0.0f64..1.0, y in 0.0f64..1.0,
        ) {
            let c = Component::Polynomial(coeffs);
            let lip = c.lipschitz_bound();
            prop_assert!((c.eval(x) - c.eval(y)).abs() <= lip * (x - y).abs() + 1e-12);
            prop_assert!(c.eval(x).abs() <= c.sup_bound() + 1e-12);
        }

        #[test]
        fn piecewise_lipschitz_is_valid(
            ys in proptest::collection::vec(-2.0f64..2.0, 2..6),
            x in 0.0f64..1.0, y in 0.0f64..1.0,
        ) {
            let n = ys.len() - 1;
            let knots: Vec<[f64; 2]> = ys.iter().enumerate().map(|(i, &v)| [i as f64 / n as f64, v]).collect();
            let c = Component::PiecewiseLinear(knots);
            prop_assert!((c.eval(x) - c.eval(y)).abs() <= c.lipschitz_bound() * (x - y).abs() + 1e-12);
        }
    }
}
