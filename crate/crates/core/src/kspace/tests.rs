use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::error::Error;
use crate::numerics::{fft2, ComplexImage, RandomStream};
use crate::testutil::{dft_matrix, random_image, random_sensitivities, to_vector};

fn rs(seed: u64) -> RandomStream {
    RandomStream::new(seed, 3)
}

fn mask(pattern: MaskPattern, r: f64, n: usize, seed: u64) -> SamplingMask {
    make_mask(pattern, r, n, n, 0.08f64.min(0.5 / r), &mut rs(seed)).unwrap()
}

#[test]
fn full_mask_forward_is_fft() {
    let x = random_image(16, 16, 1, 1);
    let m = SamplingMask::full(16, 16, MaskPattern::Random2d).unwrap();
    let y = forward(&x, &m, None, 0.0, &mut rs(1)).unwrap();
    assert_eq!(y.data, fft2(&x).unwrap());
}

#[test]
fn zero_image_gives_noise_on_kept_locations_only() {
    let x = ComplexImage::zeros(16, 16, 1).unwrap();
    let m = mask(MaskPattern::Random2d, 3.0, 16, 2);
    let y = forward(&x, &m, None, 0.1, &mut rs(2)).unwrap();
    for (v, &k) in y.data.data().iter().zip(m.keep()) {
        assert_eq!(k, v.norm() > 0.0);
    }
}

#[test]
fn delta_spectrum_is_masked_constant() {
    let mut x = ComplexImage::zeros(8, 8, 1).unwrap();
    x.data_mut()[0] = Complex64::new(1.0, 0.0);
    let m = mask(MaskPattern::Random2d, 2.0, 8, 3);
    let y = forward(&x, &m, None, 0.0, &mut rs(3)).unwrap();
    for (v, &k) in y.data.data().iter().zip(m.keep()) {
        let want = if k { 1.0 / 8.0 } else { 0.0 };
        assert!((v - Complex64::new(want, 0.0)).norm() < 1e-15);
    }
}

#[test]
fn forward_rejects_mismatches() {
    let m = mask(MaskPattern::Random2d, 2.0, 8, 4);
    assert!(forward(&random_image(16, 16, 1, 4), &m, None, 0.0, &mut rs(4)).is_err());
    assert!(forward(&random_image(8, 8, 2, 4), &m, None, 0.0, &mut rs(4)).is_err());
    let s = random_sensitivities(16, 16, 2, 4);
    assert!(forward(&random_image(8, 8, 1, 4), &m, Some(&s), 0.0, &mut rs(4)).is_err());
    assert!(forward(&random_image(8, 8, 1, 4), &m, None, -1.0, &mut rs(4)).is_err());
}

#[test]
fn zero_filled_inverts_full_sampling() {
    let x = random_image(16, 16, 1, 5);
    let m = SamplingMask::full(16, 16, MaskPattern::Cartesian1d).unwrap();
    let y = forward(&x, &m, None, 0.0, &mut rs(5)).unwrap();
    assert!(zero_filled(&y, None).unwrap().distance(&x) < 1e-12 * x.norm());

    let s = random_sensitivities(16, 16, 3, 5);
    let y = forward(&x, &m, Some(&s), 0.0, &mut rs(5)).unwrap();
    assert!(zero_filled(&y, Some(&s)).unwrap().distance(&x) < 1e-12 * x.norm());

    let zero = KSpaceMeasurement::new(m, ComplexImage::zeros(16, 16, 1).unwrap(), 0.0).unwrap();
    assert_eq!(zero_filled(&zero, None).unwrap().norm(), 0.0);
}

#[test]
fn hard_projection_replaces_measured_and_keeps_rest() {
    let x = random_image(16, 16, 1, 6);
    let m = mask(MaskPattern::PseudoRadial, 3.0, 16, 6);
    let y = forward(&x, &m, None, 0.0, &mut rs(6)).unwrap();
    let prior = random_image(16, 16, 1, 60);
    let out = dc_project_single(&prior, &y, 0.0).unwrap();
    let (kp, ko) = (fft2(&prior).unwrap(), fft2(&out).unwrap());
    for i in 0..256 {
        let want = if m.keep()[i] { y.data.data()[i] } else { kp.data()[i] };
        assert!((ko.data()[i] - want).norm() < 1e-12);
    }
    let again = dc_project_single(&out, &y, 0.0).unwrap();
    assert!(again.distance(&out) < 1e-12 * out.norm());
}

#[test]
fn huge_lambda_returns_prior() {
    let x = random_image(8, 8, 1, 7);
    let y = forward(&x, &mask(MaskPattern::Random2d, 2.0, 8, 7), None, 0.0, &mut rs(7)).unwrap();
    let prior = random_image(8, 8, 1, 70);
    let out = dc_project_single(&prior, &y, 1e9).unwrap();
    assert!(out.distance(&prior) <= 1e-6 * prior.norm());
    assert!(dc_project_single(&prior, &y, -1.0).is_err());
}

fn dense_single_oracle(prior: &ComplexImage, y: &KSpaceMeasurement, lambda: f64) -> Vec<Complex64> {
    let (h, w) = (prior.height(), prior.width());
    let f = dft_matrix(h, w);
    let kept: Vec<usize> = (0..h * w).filter(|&i| y.mask.keep()[i]).collect();
    let fp = DMatrix::from_fn(kept.len(), h * w, |r, c| f[(kept[r], c)]);
    let yk = nalgebra::DVector::from_iterator(kept.len(), kept.iter().map(|&i| y.data.data()[i]));
    let xt = to_vector(prior);
    let fph = fp.adjoint();
    let a = &fph * &fp + DMatrix::identity(h * w, h * w) * Complex64::new(lambda, 0.0);
    let b = &fph * &yk + &xt * Complex64::new(lambda, 0.0);
    a.lu().solve(&b).unwrap().iter().copied().collect()
}

#[test]
fn closed_form_matches_dense_solve() {
    let x = random_image(8, 8, 1, 8);
    let y = forward(&x, &mask(MaskPattern::Random2d, 2.0, 8, 8), None, 0.05, &mut rs(8)).unwrap();
    let prior = random_image(8, 8, 1, 80);
    let fast = dc_project_single(&prior, &y, 1.0).unwrap();
    let dense = dense_single_oracle(&prior, &y, 1.0);
    for (a, b) in fast.data().iter().zip(&dense) {
        assert!((a - b).norm() < 1e-10);
    }
}

#[test]
fn multicoil_reduces_to_single_coil() {
    let x = random_image(8, 8, 1, 9);
    let y = forward(&x, &mask(MaskPattern::Random2d, 3.0, 8, 9), None, 0.0, &mut rs(9)).unwrap();
    let prior = random_image(8, 8, 1, 90);
    let s = CoilSensitivities::uniform(8, 8).unwrap();
    let single = dc_project_single(&prior, &y, 0.5).unwrap();
    let multi = dc_project_multicoil(&prior, &y, &s, 0.5, 1e-12, 200).unwrap();
    assert!(single.distance(&multi) < 1e-8);
}

#[test]
fn multicoil_full_mask_recovers_image() {
    let x = random_image(16, 16, 1, 10);
    let s = random_sensitivities(16, 16, 4, 10);
    let m = SamplingMask::full(16, 16, MaskPattern::Random2d).unwrap();
    let y = forward(&x, &m, Some(&s), 0.0, &mut rs(10)).unwrap();
    let prior = random_image(16, 16, 1, 100);
    let out = dc_project_multicoil(&prior, &y, &s, 1e-6, 1e-12, 100).unwrap();
    assert!(out.distance(&x) < 1e-4 * x.norm());
}

#[test]
fn multicoil_matches_dense_normal_equations() {
    let (h, w) = (8, 8);
    let x = random_image(h, w, 1, 11);
    let s = random_sensitivities(h, w, 2, 11);
    let m = mask(MaskPattern::Random2d, 2.0, 8, 11);
    let y = forward(&x, &m, Some(&s), 0.02, &mut rs(11)).unwrap();
    let prior = random_image(h, w, 1, 110);
    let sol = dc_solve_multicoil(&prior, &y, &s, 1.0, 1e-13, 500).unwrap();
    assert!(sol.relative_residual <= 1e-13);

    let f = dft_matrix(h, w);
    let n = h * w;
    let mut a = DMatrix::<Complex64>::identity(n, n) * Complex64::new(1.0, 0.0);
    let mut b = to_vector(&prior);
    for c in 0..2 {
        let sc = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(s.map(c)));
        let p = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            n,
            m.keep().iter().map(|&k| Complex64::new(k as u8 as f64, 0.0)),
        ));
        let e = &p * &f * &sc;
        a += e.adjoint() * &e;
        b += e.adjoint() * to_vector(&y.data.coil(c));
    }
    let dense = a.lu().solve(&b).unwrap();
    for (u, v) in sol.image.data().iter().zip(dense.iter()) {
        assert!((u - v).norm() < 1e-8);
    }
}

#[test]
fn multicoil_reports_non_convergence() {
    let x = random_image(8, 8, 1, 12);
    let s = random_sensitivities(8, 8, 2, 12);
    let y = forward(&x, &mask(MaskPattern::Random2d, 2.0, 8, 12), Some(&s), 0.0, &mut rs(12)).unwrap();
    let err = dc_project_multicoil(&random_image(8, 8, 1, 120), &y, &s, 1.0, 1e-12, 1).unwrap_err();
    assert!(matches!(err, Error::NotConverged { iterations: 1, .. }));
    assert!(dc_project_multicoil(&x, &y, &s, 0.0, 1e-6, 10).is_err());
}

#[test]
fn calibfree_is_per_coil_single_projection() {
    let m = mask(MaskPattern::Cartesian1d, 2.0, 16, 13);
    let coils_img = random_image(16, 16, 3, 13);
    let mut k = fft2(&coils_img).unwrap();
    for c in 0..3 {
        for (v, &keep) in k.coil_data_mut(c).iter_mut().zip(m.keep()) {
            if !keep {
                *v = Complex64::new(0.0, 0.0);
            }
        }
    }
    let y = KSpaceMeasurement::new(m.clone(), k, 0.0).unwrap();
    let prior = random_image(16, 16, 3, 130);
    let out = dc_project_calibfree(&prior, &y, 0.3).unwrap();
    for c in 0..3 {
        let yc = KSpaceMeasurement::new(m.clone(), y.data.coil(c), 0.0).unwrap();
        let single = dc_project_single(&prior.coil(c), &yc, 0.3).unwrap();
        assert_eq!(out.coil_data(c), single.data());
    }
    assert!(dc_project_calibfree(&random_image(16, 16, 2, 1), &y, 0.3).is_err());

    let full = SamplingMask::full(16, 16, MaskPattern::Random2d).unwrap();
    let yf = KSpaceMeasurement::new(full, fft2(&coils_img).unwrap(), 0.0).unwrap();
    let exact = dc_project_calibfree(&prior, &yf, 0.0).unwrap();
    assert!(exact.distance(&coils_img) < 1e-12 * coils_img.norm());
}

#[test]
fn calibfree_single_coil_degenerates() {
    let x = random_image(8, 8, 1, 14);
    let y = forward(&x, &mask(MaskPattern::Random2d, 2.0, 8, 14), None, 0.0, &mut rs(14)).unwrap();
    let prior = random_image(8, 8, 1, 140);
    assert_eq!(
        dc_project_calibfree(&prior, &y, 0.2).unwrap(),
        dc_project_single(&prior, &y, 0.2).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_is_linear(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let x1 = random_image(8, 8, 1, seed);
        let x2 = random_image(8, 8, 1, seed + 5000);
        let s = random_sensitivities(8, 8, 2, seed);
        let m = mask(MaskPattern::Random2d, 2.0, 8, seed);
        let combo = ComplexImage::from_vec(8, 8, 1,
            x1.data().iter().zip(x2.data()).map(|(u, v)| u * a + v * b).collect()).unwrap();
        let y = forward(&combo, &m, Some(&s), 0.0, &mut rs(0)).unwrap();
        let y1 = forward(&x1, &m, Some(&s), 0.0, &mut rs(0)).unwrap();
        let y2 = forward(&x2, &m, Some(&s), 0.0, &mut rs(0)).unwrap();
        for ((v, v1), v2) in y.data.data().iter().zip(y1.data.data()).zip(y2.data.data()) {
            prop_assert!((v - (v1 * a + v2 * b)).norm() < 1e-12);
        }
    }

    #[test]
    fn projection_minimises_objective(seed in 0u64..1000, lambda in 0.0f64..5.0) {
        let x = random_image(8, 8, 1, seed);
        let y = forward(&x, &mask(MaskPattern::PoissonDisk, 2.0, 8, seed), None, 0.1, &mut rs(seed)).unwrap();
        let prior = random_image(8, 8, 1, seed + 1);
        let out = dc_project_single(&prior, &y, lambda).unwrap();
        let at_out = dc_objective(&out, &prior, &y, lambda).unwrap();
        let at_prior = dc_objective(&prior, &prior, &y, lambda).unwrap();
        let at_zf = dc_objective(&zero_filled(&y, None).unwrap(), &prior, &y, lambda).unwrap();
        prop_assert!(at_out <= at_prior * (1.0 + 1e-12) + 1e-12);
        prop_assert!(at_out <= at_zf * (1.0 + 1e-12) + 1e-12);
    }
}
