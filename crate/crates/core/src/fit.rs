//! Least-squares fits used by the decay and growth diagnostics.

use serde::Serialize;

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(LineFit { slope, intercept: my - slope * mx, points: n })
}

/// Slope of `ln y` against `ln n`. Points with `y <= floor` are skipped and
/// returned separately so callers can report them.
pub fn log_log(points: &[(f64, f64)], floor: f64) -> (Option<LineFit>, Vec<f64>) {
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    let mut dropped = Vec::new();
    for &(n, y) in points {
        if y > floor && n > 0.0 && y.is_finite() {
            xs.push(n.ln());
            ys.push(y.ln());
        } else {
            dropped.push(n);
        }
    }
    (least_squares(&xs, &ys), dropped)
}

/// Geometric checkpoints `floor(rho^k)` in `[lo, hi]`, deduplicated, always
/// including both ends.
pub fn geometric_checkpoints(lo: usize, hi: usize, rho: f64) -> Vec<usize> {
    assert!(rho > 1.0 && lo >= 1 && lo <= hi);
    let mut out = vec![lo];
    let mut v = lo as f64;
    loop {
        v *= rho;
        let k = v.floor() as usize;
        if k >= hi {
            break;
        }
        if k > *out.last().unwrap() {
            out.push(k);
        }
    }
    if *out.last().unwrap() != hi {
        out.push(hi);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_power_law() {
        let pts: Vec<(f64, f64)> = (1..50).map(|n| (n as f64, 3.0 * (n as f64).powf(-2.5))).collect();
        let (fit, dropped) = log_log(&pts, 0.0);
        let fit = fit.unwrap();
        assert!((fit.slope + 2.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(dropped.is_empty());
    }

    #[test]
    fn floor_drops_points() {
        let pts = [(1.0, 1.0), (2.0, 0.5), (3.0, 1e-20)];
        let (fit, dropped) = log_log(&pts, 1e-14);
        assert_eq!(fit.unwrap().points, 2);
        assert_eq!(dropped, vec![3.0]);
    }

    #[test]
    fn checkpoints_are_increasing() {
        let c = geometric_checkpoints(1, 1000, 1.3);
        assert_eq!(c[0], 1);
        assert_eq!(*c.last().unwrap(), 1000);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
    }
}
