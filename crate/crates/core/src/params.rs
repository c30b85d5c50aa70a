//! Closed-form parameter chain for the block construction.
//!
//! Blocks have lengths `n^c`, inner gaps of relative size `a`, tail cut-offs
//! `T_n = n^κ`, and the covariance of the n-th block must grow at least like
//! `n^{γ(c+1)}`. [`vasip_gamma`] evaluates the admissible infimum of `γ`;
//! [`check_constraint_chain`] re-checks every inequality that the choice is
//! meant to satisfy.

use serde::Serialize;

use crate::error::{domain, param, Result};

/// Tail exponent of the block construction, fixed.
pub const KAPPA: f64 = 2.0;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(domain(format!("alpha must lie in (0, 1/2), got {alpha}")));
    }
    Ok(())
}

/// `min(1, 2 − 2α/(1−α))`.
pub fn moment_gain(alpha: f64) -> f64 {
    (2.0 - 2.0 * alpha / (1.0 - alpha)).min(1.0)
}

/// `max(3 − 1/α, 0)`, the exponent of the neighbouring-block correlation.
pub fn correlation_excess(alpha: f64) -> f64 {
    (3.0 - 1.0 / alpha).max(0.0)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VasipParams {
    pub alpha: f64,
    pub d: usize,
    pub eps0: f64,
    pub correlation_excess: f64,
    pub a: f64,
    pub a_branches: [f64; 3],
    /// Index of the branch attaining `a` (first one on ties).
    pub a_branch: usize,
    pub c: f64,
    pub c_branches: [f64; 2],
    pub c_branch: usize,
    pub kappa: f64,
    pub gamma_inf: f64,
    pub margin: f64,
    pub gamma: f64,
}

impl VasipParams {
    /// Same chain with `γ` overridden (the margin becomes `γ − γ_inf` and may be negative).
    pub fn with_gamma(&self, gamma: f64) -> Self {
        VasipParams { gamma, margin: gamma - self.gamma_inf, ..self.clone() }
    }
}

/// Evaluate the parameter chain for `α` and dimension `d`, with
/// `γ = γ_inf + margin`.
pub fn vasip_gamma(alpha: f64, d: usize, margin: f64) -> Result<VasipParams> {
    check_alpha(alpha)?;
    if d == 0 {
        return Err(param("dimension must be at least 1"));
    }
    if !(margin >= 0.0) {
        return Err(param(format!("margin must be non-negative, got {margin}")));
    }
    let e = moment_gain(alpha);
    let m = correlation_excess(alpha);
    let a_branches = [
        (e + 2.0 * alpha) / ((1.0 - alpha) * (2.0 * e + 2.0)),
        (2.0 + 2.0 * e) / (3.0 * e + 4.0),
        ((2.0 + e) * (1.0 + m) - 2.0) / (2.0 + 2.0 * e),
    ];
    let a_branch = argmax(&a_branches);
    let a = a_branches[a_branch];
    let df = d as f64;
    let c_branches = [
        (2.0 + e * a + (2.0 + e) * (8.0 * df + 12.0) - 2.0) / (e * (1.0 - a)),
        (1.0 - 2.0 / (2.0 + e) + m) / (1.0 - m),
    ];
    let c_branch = argmax(&c_branches);
    let c = c_branches[c_branch];
    let gamma_inf = c / (c + 1.0) + 2.0 / ((c + 1.0) * (2.0 + e));
    let gamma = gamma_inf + margin;
    if gamma >= 1.0 {
        return Err(param(format!("gamma = {gamma} is not below 1 (gamma_inf = {gamma_inf}, margin = {margin})")));
    }
    Ok(VasipParams {
        alpha,
        d,
        eps0: e,
        correlation_excess: m,
        a,
        a_branches,
        a_branch,
        c,
        c_branches,
        c_branch,
        kappa: KAPPA,
        gamma_inf,
        margin,
        gamma,
    })
}

/// Infimum of the admissible exponent for the scalar CLT.
pub fn clt_gamma1(alpha: f64) -> Result<f64> {
    Ok(clt_gamma1_detail(alpha)?.0)
}

/// `(γ₁, a, the three a-branches)`.
pub fn clt_gamma1_detail(alpha: f64) -> Result<(f64, f64, [f64; 3])> {
    check_alpha(alpha)?;
    let e = moment_gain(alpha);
    let m = correlation_excess(alpha);
    let r = e / (2.0 + e);
    let branches = [
        (e + (2.0 + e) * m) / (2.0 + 2.0 * e),
        r / (r + (1.0 - 2.0 * alpha) / (1.0 - alpha)),
        (2.0 + 2.0 * e) / (4.0 + 5.0 * e),
    ];
    let a = branches[argmax(&branches)];
    Ok(((2.0 + a * e) / (2.0 + e), a, branches))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Holds,
    Boundary,
    Fails,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstraintCheck {
    pub name: &'static str,
    /// Positive when the strict inequality holds.
    pub slack: f64,
    pub status: Status,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstraintReport {
    /// The five-way minimum rate `v` at `ε = ε₀`.
    pub v: f64,
    pub constraints: Vec<ConstraintCheck>,
    /// Lower bounds on `γ` from the intermediate reductions.
    pub intermediate: Vec<ConstraintCheck>,
    pub all_hold: bool,
}

fn judge(name: &'static str, slack: f64, scale: f64) -> ConstraintCheck {
    let status = if slack.abs() <= 1e-12 * scale.max(1.0) {
        Status::Boundary
    } else if slack > 0.0 {
        Status::Holds
    } else {
        Status::Fails
    };
    ConstraintCheck { name, slack, status }
}

/// Re-evaluate the block-construction inequalities at `params`.
pub fn check_constraint_chain(params: &VasipParams) -> ConstraintReport {
    let VasipParams { alpha, d, eps0: e, correlation_excess: m, a, c, kappa: k, gamma: g, .. } = *params;
    let d = d as f64;
    let q = alpha / (1.0 - alpha);
    let gc = g * (1.0 + c);
    let v = [
        gc / 2.0 - k - c * (1.0 - a),
        gc - 2.0 * k - c * (1.0 - a) - c * a * q,
        2.0 * gc - c * (1.0 - a) - 4.0 * k - 2.0 * c * a,
        gc * (2.0 + e) / 2.0 - k * (2.0 + e) - c * (1.0 - a) - c * a * (2.0 + e) / 2.0,
        gc - 2.0 * k - c * (1.0 - a) - c * m,
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    let rate = k.min(v / 2.0 - d * k);
    let scale = c + 1.0;
    let constraints = vec![
        judge("tail_rate_exceeds_one", rate - 1.0, scale),
        judge("matching_error_sublinear", gc / 2.0 - (1.0 + (c + 1.0) / 2.0 - rate), scale),
        judge("block_variance_dominates_length", gc - c, scale),
        judge("neighbour_correlation_negligible", -(1.0 + (c + 1.0) * (m - g)), scale),
        judge("variance_drift_sublinear", 1.0 - (1.0 + (c + 1.0) * m) / gc, scale),
        judge("block_length_sublinear", 1.0 - c / gc, scale),
        judge("maximal_inequality_summable", 0.5 * gc * (2.0 + e) - c * (1.0 + e / 2.0) - 1.0, scale),
    ];
    let lower = [
        ("split_tail", (4.0 * d + 6.0) * k / (c + 1.0) + 2.0 * c / (c + 1.0) * (1.0 - a)),
        (
            "split_correlation",
            (2.0 * d + 4.0) * k / (c + 1.0) + c / (c + 1.0) * a * q + c / (c + 1.0) * (1.0 - a),
        ),
        ("split_fourth_moment", (d + 3.0) * k / (c + 1.0) + c * (a + 1.0) / (2.0 * (c + 1.0))),
        (
            "split_higher_moment",
            2.0 * (2.0 * d + 4.0 + e) / ((1.0 + c) * (2.0 + e)) * k + (2.0 * c + c * a * e) / ((c + 1.0) * (2.0 + e)),
        ),
        ("split_neighbour", (2.0 * d + 4.0) / (1.0 + c) * k + c * (1.0 - a) / (c + 1.0) + c / (c + 1.0) * m),
        ("growth_tail", 1.0 - 2.0 / (c + 1.0) * (k - 1.0)),
        ("growth_neighbour", 1.0 / (c + 1.0) + m),
        ("growth_maximal", c / (c + 1.0) + 2.0 / ((c + 1.0) * (2.0 + e))),
    ];
    let intermediate: Vec<_> = lower.iter().map(|(n, b)| judge(n, g - b, 1.0)).collect();
    let all_hold = constraints.iter().chain(&intermediate).all(|c| c.status == Status::Holds);
    ConstraintReport { v, constraints, intermediate, all_hold }
}
