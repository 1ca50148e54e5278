mod common;

use common::*;
use covdetect::covest::{
    ml_covariance, sample_covariance, sample_shrinkage_weight, shrink_with_weight, shrinkage_covariance,
    window_spectrum, Estimator, MlBounds,
};
use covdetect::hermitian::{HermitianMatrix, C64};
use covdetect::likelihood::RegularizedCov;
use covdetect::onering::ChannelSample;
use nalgebra::DMatrix;
use rand::RngExt;

fn bounds() -> MlBounds {
    MlBounds::new(0.5, 4.0).unwrap()
}

/// Objective of the constrained ML problem for a covariance sharing the
/// sample covariance's eigenvectors.
fn codiagonal_objective(cov_eigs: &[f64], sample_eigs: &[f64], reg: f64) -> f64 {
    cov_eigs
        .iter()
        .zip(sample_eigs)
        .map(|(c, l)| (c + reg).ln() + l / (c + reg))
        .sum()
}

/// Scalar minimizer on `[lo, hi]`: dense grid, then golden-section refinement
/// around the best grid point.
fn scalar_grid_minimizer(lambda: f64, reg: f64, lo: f64, hi: f64) -> f64 {
    let f = |c: f64| (c + reg).ln() + lambda / (c + reg);
    let steps = 10_000;
    let h = (hi - lo) / steps as f64;
    let best = (0..=steps)
        .map(|k| lo + k as f64 * h)
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap();
    let (mut a, mut b) = ((best - h).max(lo), (best + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if f(x1) <= f(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    0.5 * (a + b)
}

fn scalar_window(lambda: f64) -> covdetect::covest::SampleCovariance {
    sample_covariance(&[ChannelSample(vec![C64::new(lambda.sqrt(), 0.0)])]).unwrap()
}

#[test]
fn sample_covariance_matches_naive_loop() {
    let mut rng = rng(51);
    let xs: Vec<ChannelSample> = (0..50).map(|_| ChannelSample(random_vector(6, &mut rng))).collect();
    let s = sample_covariance(&xs).unwrap();
    assert_eq!(s.n_samples(), 50);
    let naive = naive_covariance(&xs);
    assert!(frob(&(s.matrix().as_matrix() - naive)) <= 1e-12);
}

#[test]
fn ml_scalar_cases_match_grid_search() {
    let b = bounds();
    for (lambda, expected) in [(10.0, 4.0), (0.8, 0.5), (2.0, 1.0)] {
        let c = ml_covariance(&scalar_window(lambda), b, 1.0).unwrap().get(0, 0).re;
        assert!((c - expected).abs() < 1e-12, "{lambda}: {c}");
        let grid = scalar_grid_minimizer(lambda, 1.0, 0.5, 4.0);
        assert!((c - grid).abs() <= 1e-6, "{lambda}: {c} vs {grid}");
    }
    let mut rng = rng(52);
    for _ in 0..50 {
        let lambda = rng.random_range(0.0..8.0);
        let reg = rng.random_range(0.01..1.0);
        let c = ml_covariance(&scalar_window(lambda), b, reg).unwrap().get(0, 0).re;
        let grid = scalar_grid_minimizer(lambda, reg, 0.5, 4.0);
        assert!((c - grid).abs() <= 1e-6, "{lambda} {reg}: {c} vs {grid}");
    }
}

#[test]
fn ml_estimate_is_bounded_and_codiagonal() {
    let mut rng = rng(53);
    let b = bounds();
    for n in [1, 3, 8, 40] {
        let c = law(random_pd(8, 0.0, &mut rng).scale(3.0), 0.05);
        let xs = samples(&c, n, &mut rng);
        let s = sample_covariance(&xs).unwrap();
        let est = ml_covariance(&s, b, 0.05).unwrap();
        for l in est.eigenvalues() {
            assert!((0.5 - 1e-9..=4.0 + 1e-9).contains(&l), "{l}");
        }
        // shared eigenvectors: Ĉ and S commute
        let (a, m) = (est.as_matrix(), s.matrix().as_matrix());
        assert!(frob(&(a * m - m * a)) <= 1e-9 * frob(a) * frob(m));
        assert!(RegularizedCov::new(est, 0.05).is_ok());
    }
}

#[test]
fn ml_estimate_beats_random_codiagonal_candidates() {
    let mut rng = rng(54);
    let reg = 0.05;
    for _ in 0..5 {
        let c = law(random_pd(6, 0.0, &mut rng).scale(2.0), reg);
        let xs = samples(&c, 10, &mut rng);
        let s = sample_covariance(&xs).unwrap();
        let eig = s.matrix().eig().unwrap();
        let est = ml_covariance(&s, bounds(), reg).unwrap();
        let est_eigs: Vec<f64> = (0..6)
            .map(|k| {
                let v = eig.eigenvectors.column(k);
                (v.adjoint() * est.as_matrix() * v)[(0, 0)].re
            })
            .collect();
        let best = codiagonal_objective(&est_eigs, &eig.eigenvalues, reg);
        for _ in 0..10_000 {
            let cand: Vec<f64> = (0..6).map(|_| rng.random_range(0.5..4.0)).collect();
            assert!(best <= codiagonal_objective(&cand, &eig.eigenvalues, reg) + 1e-12);
        }
    }
}

#[test]
fn ml_estimate_commutes_with_unitary_conjugation() {
    let mut rng = rng(55);
    for _ in 0..5 {
        let xs: Vec<ChannelSample> = (0..12).map(|_| ChannelSample(random_vector(5, &mut rng))).collect();
        let u = random_unitary(5, &mut rng);
        let rotated: Vec<ChannelSample> = xs
            .iter()
            .map(|h| ChannelSample((&u * nalgebra::DVector::from_column_slice(&h.0)).as_slice().to_vec()))
            .collect();
        let est = ml_covariance(&sample_covariance(&xs).unwrap(), bounds(), 0.1).unwrap();
        let est_rot = ml_covariance(&sample_covariance(&rotated).unwrap(), bounds(), 0.1).unwrap();
        assert!(est.conjugate_by(&u).unwrap().max_abs_diff(&est_rot) <= 1e-9);
    }
}

/// Shrinkage weight written out from explicit traces of `S` and `S·S`.
fn direct_weight(s: &DMatrix<C64>, n: usize) -> f64 {
    let m = s.nrows() as f64;
    let tr = s.trace().re;
    let tr_ss = (s * s).trace().re;
    let num = -tr_ss / m + tr * tr;
    let den = (n as f64 - 2.0) / m * (tr_ss - tr * tr / m);
    (num / den).min(1.0).max(0.0)
}

#[test]
fn shrinkage_weight_matches_direct_formula() {
    let mut rng = rng(56);
    for (n, m) in [(8, 16), (200, 4), (500, 3)] {
        // strongly anisotropic draws so long windows give an interior weight
        let xs: Vec<ChannelSample> = (0..n)
            .map(|_| {
                let v = random_vector(m, &mut rng);
                ChannelSample(v.iter().enumerate().map(|(k, z)| z * 10f64.powi(-(k as i32))).collect())
            })
            .collect();
        let s = sample_covariance(&xs).unwrap();
        let phi = sample_shrinkage_weight(&s);
        let direct = direct_weight(s.matrix().as_matrix(), n);
        assert!((phi - direct).abs() <= 1e-12, "n={n} M={m}: {phi} vs {direct}");
        if n > m + 2 {
            assert!(phi < 1.0, "n={n} M={m}: {phi}");
        }
    }
}

#[test]
fn shrinkage_saturates_whenever_the_window_is_short() {
    // (tr S)² ≥ tr S² for PSD S, so the weight is at least (M−1)/(n−2)
    let mut rng = rng(57);
    for _ in 0..20 {
        let n = rng.random_range(3..12);
        let c = law(random_pd(12, 0.0, &mut rng), 0.01);
        let s = sample_covariance(&samples(&c, n, &mut rng)).unwrap();
        assert_eq!(sample_shrinkage_weight(&s), 1.0);
    }
}

#[test]
fn shrinkage_degenerate_cases() {
    let e = |k: usize| {
        let mut v = vec![C64::new(0.0, 0.0); 2];
        v[k] = C64::new(1.0, 0.0);
        ChannelSample(v)
    };
    // S ∝ I: dispersion term vanishes
    let s = sample_covariance(&[e(0), e(1), e(0), e(1)]).unwrap();
    assert_eq!(sample_shrinkage_weight(&s), 1.0);
    let est = shrinkage_covariance(&s, 0.1).unwrap();
    assert!(est.max_abs_diff(&HermitianMatrix::identity(2).scale(0.4)) < 1e-15);
    // two samples or fewer
    let s = sample_covariance(&[e(0), e(0)]).unwrap();
    assert_eq!(sample_shrinkage_weight(&s), 1.0);
}

#[test]
fn shrinkage_endpoints_and_positive_definiteness() {
    let mut rng = rng(58);
    let c = law(random_pd(5, 0.0, &mut rng), 0.02);
    let s = sample_covariance(&samples(&c, 30, &mut rng)).unwrap();
    let reg = 0.02;
    let none = shrink_with_weight(&s, 0.0, reg);
    assert_eq!(none, s.matrix().add_identity(-reg));
    let full = shrink_with_weight(&s, 1.0, reg);
    let target = s.matrix().trace() / 5.0;
    assert!(full.max_abs_diff(&HermitianMatrix::identity(5).scale(target - reg)) < 1e-15);
    for phi in [0.01, 0.3, 1.0] {
        let est = shrink_with_weight(&s, phi, reg);
        assert!(RegularizedCov::new(est, reg).is_ok());
    }
    // rank-one window: still PD after adding the floor back for any φ > 0
    let s1 = sample_covariance(&samples(&c, 1, &mut rng)).unwrap();
    assert!(RegularizedCov::new(shrink_with_weight(&s1, 0.05, reg), reg).is_ok());
}

#[test]
fn window_spectrum_matches_sample_covariance_eigenvalues() {
    let mut rng = rng(59);
    for n in [1, 4, 7, 8, 20] {
        let xs: Vec<ChannelSample> = (0..n).map(|_| ChannelSample(random_vector(8, &mut rng))).collect();
        let fast = window_spectrum(&xs).unwrap();
        let slow = sample_covariance(&xs).unwrap().matrix().eigenvalues();
        assert_eq!(fast.len(), 8);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10, "n={n}: {a} vs {b}");
        }
    }
}

#[test]
fn regularized_spectrum_matches_full_estimate() {
    let mut rng = rng(60);
    let reg = 0.03;
    for est in [Estimator::Ml(bounds()), Estimator::Shrinkage] {
        for n in [2, 6, 30] {
            let c = law(random_pd(6, 0.0, &mut rng).scale(2.0), reg);
            let xs = samples(&c, n, &mut rng);
            let s = sample_covariance(&xs).unwrap();
            let full: Vec<f64> = est.estimate(&s, reg).unwrap().add_identity(reg).eigenvalues();
            let mut fast = window_spectrum(&xs).unwrap();
            est.regularized_spectrum(&mut fast, n, reg);
            fast.sort_by(f64::total_cmp);
            for (a, b) in fast.iter().zip(&full) {
                assert!((a - b).abs() < 1e-9, "{est:?} n={n}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn bounds_are_validated() {
    assert!(MlBounds::new(0.0, 1.0).is_err());
    assert!(MlBounds::new(2.0, 1.0).is_err());
    assert!(MlBounds::new(1.0, 1.0).is_err());
    assert!(sample_covariance(&[]).is_err());
}
