use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use vasiplab::gauss::*;
use vasiplab::linalg::Matrix;
use vasiplab::rng;

fn to_m(a: &DMatrix<f64>) -> Matrix {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

fn random_psd(r: &mut impl Rng, d: usize) -> Matrix {
    let rank = r.random_range(0..=d);
    let b = DMatrix::from_fn(d, rank, |_, _| r.sample::<f64, _>(StandardNormal));
    let a = &b * b.transpose();
    to_m(&((&a + a.transpose()) * 0.5))
}

fn max_abs(a: &Matrix, b: &Matrix, scale: f64) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y * scale).abs()).fold(0.0, f64::max)
}

fn check_invariants(a: &Matrix, t: f64) {
    let s = split_covariance(a, t).unwrap();
    let d = a.len();
    let sum12: Matrix = (0..d).map(|i| (0..d).map(|j| s.a1[i][j] + s.a2[i][j]).collect()).collect();
    let sum13: Matrix = (0..d).map(|i| (0..d).map(|j| s.a1[i][j] + s.a3[i][j]).collect()).collect();
    let eye: Matrix = (0..d).map(|i| (0..d).map(|j| if i == j { t } else { 0.0 }).collect()).collect();
    let scale = t.max(a.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs())));
    assert!(max_abs(&sum12, a, 1.0) <= 1e-10 * scale);
    assert!(max_abs(&sum13, &eye, 1.0) <= 1e-10 * scale);
    for m in [&s.a1, &s.a2, &s.a3] {
        let dm = DMatrix::from_fn(d, d, |i, j| m[i][j]);
        let sym = (&dm + dm.transpose()) * 0.5;
        assert!(sym.symmetric_eigenvalues().min() >= -1e-10 * scale);
    }
    assert!(s.overlap() <= 1e-10 * scale);
}

#[test]
fn thousand_random_splits() {
    let mut r = rng::stream(21, 0);
    for _ in 0..1000 {
        let d = r.random_range(1..=5);
        let a = random_psd(&mut r, d);
        let t = 10f64.powf(r.random_range(-2.0..=2.0));
        check_invariants(&a, t);
    }
}

#[test]
fn rotated_example_has_disjoint_supports() {
    let th: f64 = 0.7;
    let rot = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
    let a = &rot * DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 0.2])) * rot.transpose();
    let a = to_m(&((&a + a.transpose()) * 0.5));
    check_invariants(&a, 1.0);
    let (m2, m3) = split_covariance(&a, 1.0).unwrap().eigenbasis_diagonals();
    // Ascending eigenvalues: 0.2 sits below t, 3 above.
    assert!((m2[0]).abs() < 1e-12 && (m2[1] - 2.0).abs() < 1e-12);
    assert!((m3[0] - 0.8).abs() < 1e-12 && m3[1].abs() < 1e-12);
}

#[test]
fn synthesized_covariances() {
    let split = split_covariance(&vec![vec![2.0, 0.0], vec![0.0, 0.5]], 1.0).unwrap();
    let synth = GaussianSynth::new(&split);
    let mut r = rng::stream(3, 0);
    let n = 100_000;
    let (mut c1, mut c13) = (DMatrix::<f64>::zeros(2, 2), DMatrix::<f64>::zeros(2, 2));
    for _ in 0..n {
        let [g1, _, g3] = synth.draw(&mut r);
        c1 += &g1 * g1.transpose();
        let s = &g1 + &g3;
        c13 += &s * s.transpose();
    }
    c1 /= n as f64;
    c13 /= n as f64;
    assert!((c1 - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5]))).abs().max() < 0.02);
    assert!((c13 - DMatrix::identity(2, 2)).abs().max() < 0.02);

    let no_excess = split_covariance(&vec![vec![0.5, 0.1], vec![0.1, 0.3]], 1.0).unwrap();
    let (_, g2, _) = synth_gaussians(&no_excess, 9);
    assert!(g2.iter().all(|v| *v == 0.0));
}

#[test]
fn embedding_error() {
    let exact = embed_matching_error(|_| CovarianceModel::identity(2).at(0), 2, 2.0, 20, 10, 1).unwrap();
    assert!(exact.rms_error.iter().all(|v| *v == 0.0) && exact.pass);

    let model = CovarianceModel {
        base: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        drift: Some(vec![vec![0.5, 0.0], vec![0.0, -0.3]]),
        exponent: 0.6,
    };
    let r = embed_matching_error(|k| model.at(k), 2, 4.0, 30, 200, 5).unwrap();
    assert!(r.fitted_exponent.unwrap() < 0.5 && r.pass, "{:?}", r.fitted_exponent);
    let again = embed_matching_error(|k| model.at(k), 2, 4.0, 30, 200, 5).unwrap();
    assert_eq!(r.first_replica, again.first_replica);
}

#[test]
fn berkes_philipp_terms() {
    let e = std::f64::consts::E;
    assert!((bp_alpha(e, 0.0, 0.0, 1).unwrap() - 16.0 / e).abs() < 1e-12);
    assert!((bp_alpha(100.0, 1e-8, 0.0, 1).unwrap() - (16.0 * 100f64.ln() / 100.0 + 0.04)).abs() < 1e-12);
    assert!((bp_alpha(100.0, 1e-8, 0.0, 1).unwrap() - 0.77683).abs() < 1e-5);
    assert!((bp_alpha(50.0, 0.0, 0.3, 3).unwrap() - (48.0 * 50f64.ln() / 50.0 + 0.3)).abs() < 1e-12);
    assert!(bp_alpha(1.0, 0.0, 0.0, 1).is_err());

    let two = bp_series_check(2.0, 16.0, 2, 1_000_000, None).unwrap();
    assert!(two.convergent && (two.predicted_exponent - 2.0).abs() < 1e-12);
    let bad = bp_series_check(2.0, 5.0, 1, 100_000, None).unwrap();
    assert!(!bad.convergent);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn diagonal_splits_clip_at_t(l1 in 0.0f64..5.0, l2 in 0.0f64..5.0, t in 0.0f64..5.0) {
        let s = split_covariance(&vec![vec![l1, 0.0], vec![0.0, l2]], t).unwrap();
        prop_assert!((s.a1[0][0] - l1.min(t)).abs() < 1e-12 && (s.a1[1][1] - l2.min(t)).abs() < 1e-12);
        prop_assert!((s.a2[0][0] - (l1 - t).max(0.0)).abs() < 1e-12);
        prop_assert!((s.a3[1][1] - (t - l2).max(0.0)).abs() < 1e-12);
    }
}
