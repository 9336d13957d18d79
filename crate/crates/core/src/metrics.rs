//! Image quality metrics on magnitude images.

use crate::error::{arg_err, dim_err, Result};
use crate::numerics::ComplexImage;

/// PSNR reported for a zero-error comparison.
pub const PSNR_CAP: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub psnr_db: f64,
    pub ssim: f64,
}

fn check(reference: &ComplexImage, test: &ComplexImage) -> Result<()> {
    if !reference.same_shape(test) {
        return dim_err(format!(
            "reference is {}x{}x{}, test is {}x{}x{}",
            reference.coils(),
            reference.height(),
            reference.width(),
            test.coils(),
            test.height(),
            test.width()
        ));
    }
    Ok(())
}

/// `10·log10(max|ref|² / MSE(|ref|, |test|))`, capped at [`PSNR_CAP`].
pub fn psnr(reference: &ComplexImage, test: &ComplexImage) -> Result<f64> {
    check(reference, test)?;
    let (a, b) = (reference.magnitude(), test.magnitude());
    let mse = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    let peak = a.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return arg_err("PSNR is undefined for an all-zero reference");
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP))
}

/// Normalized 1-D Gaussian window.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of an `h×w` plane.
fn filter_valid(img: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = k.iter().enumerate().map(|(j, kv)| kv * img[r * w + c + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = k.iter().enumerate().map(|(j, kv)| kv * rows[(r + j) * ow + c]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, range: f64) -> f64 {
    let k = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mu_a = filter_valid(a, h, w, &k);
    let mu_b = filter_valid(b, h, w, &k);
    let aa = filter_valid(&prod(a, a), h, w, &k);
    let bb = filter_valid(&prod(b, b), h, w, &k);
    let ab = filter_valid(&prod(a, b), h, w, &k);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / n as f64
}

/// Mean local SSIM of magnitude images over all fully contained 11×11
/// Gaussian windows (σ = 1.5), with dynamic range set to the reference
/// maximum. Multi-coil images average the per-coil values.
pub fn ssim(reference: &ComplexImage, test: &ComplexImage) -> Result<f64> {
    check(reference, test)?;
    let (h, w) = (reference.height(), reference.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return dim_err(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"));
    }
    let (a, b) = (reference.magnitude(), test.magnitude());
    let range = a.iter().copied().fold(0.0, f64::max);
    if range == 0.0 {
        return arg_err("SSIM is undefined for an all-zero reference");
    }
    let p = h * w;
    let coils = reference.coils();
    let total: f64 = (0..coils)
        .map(|c| ssim_plane(&a[c * p..(c + 1) * p], &b[c * p..(c + 1) * p], h, w, range))
        .sum();
    Ok(total / coils as f64)
}

/// PSNR and SSIM of `result` against `reference`.
pub fn evaluate(result: &ComplexImage, reference: &ComplexImage) -> Result<MetricsReport> {
    Ok(MetricsReport {
        psnr_db: psnr(reference, result)?,
        ssim: ssim(reference, result)?,
    })
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;
    use proptest::prelude::*;

    use super::*;
    use crate::testutil::random_image;

    fn real(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> f64) -> ComplexImage {
        let data = (0..h * w).map(|i| Complex64::new(f(i / w, i % w), 0.0)).collect();
        ComplexImage::from_vec(h, w, 1, data).unwrap()
    }

    /// Direct per-window evaluation of the SSIM formula.
    fn ssim_naive(a: &ComplexImage, b: &ComplexImage) -> f64 {
        let (h, w) = (a.height(), a.width());
        let (ma, mb) = (a.magnitude(), b.magnitude());
        let l = ma.iter().cloned().fold(0.0, f64::max);
        let (c1, c2) = ((0.01 * l).powi(2), (0.03 * l).powi(2));
        let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
        let norm: f64 = g.iter().sum::<f64>().powi(2);
        let mut total = 0.0;
        let mut count = 0.0;
        for r in 0..=h - 11 {
            for c in 0..=w - 11 {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let wt = g[i] * g[j] / norm;
                        let (x, y) = (ma[(r + i) * w + c + j], mb[(r + i) * w + c + j]);
                        mx += wt * x;
                        my += wt * y;
                        sxx += wt * x * x;
                        syy += wt * y * y;
                        sxy += wt * x * y;
                    }
                }
                let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                total += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
        total / count
    }

    #[test]
    fn psnr_examples() {
        let x = real(16, 16, |r, c| ((r * 16 + c) as f64 / 255.0).max(0.2));
        assert_eq!(psnr(&x, &x).unwrap(), PSNR_CAP);
        let shifted = real(16, 16, |r, c| x.data()[r * 16 + c].re + 0.1);
        assert!((psnr(&x, &shifted).unwrap() - 20.0).abs() < 1e-9);
        let shifted = real(16, 16, |r, c| x.data()[r * 16 + c].re + 0.01);
        assert!((psnr(&x, &shifted).unwrap() - 40.0).abs() < 1e-9);
        assert!(psnr(&x, &real(8, 8, |_, _| 0.0)).is_err());
    }

    #[test]
    fn ssim_identity_is_exactly_one() {
        let x = random_image(32, 32, 1, 1);
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
        assert_eq!(evaluate(&x, &x).unwrap(), MetricsReport { psnr_db: 99.0, ssim: 1.0 });
    }

    #[test]
    fn ssim_matches_direct_formula() {
        let x = random_image(24, 20, 1, 2);
        let mut half = x.clone();
        half.scale(Complex64::new(0.5, 0.0));
        assert!((ssim(&x, &half).unwrap() - ssim_naive(&x, &half)).abs() < 1e-10);
        let y = random_image(24, 20, 1, 3);
        assert!((ssim(&x, &y).unwrap() - ssim_naive(&x, &y)).abs() < 1e-10);
    }

    #[test]
    fn heavy_noise_gives_low_ssim() {
        let x = real(64, 64, |r, c| if (r / 8 + c / 8) % 2 == 0 { 1.0 } else { 0.2 });
        let mut s = crate::numerics::RandomStream::new(4, 0);
        let noisy = real(64, 64, |r, c| x.data()[r * 64 + c].re + 0.5 * s.next_gaussian());
        assert!(ssim(&x, &noisy).unwrap() < 0.5);
    }

    #[test]
    fn ssim_rejects_small_or_mismatched() {
        let x = random_image(8, 8, 1, 5);
        assert!(ssim(&x, &x).is_err());
        assert!(ssim(&random_image(16, 16, 1, 5), &random_image(16, 16, 2, 5)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn metrics_ignore_common_global_phase(seed in 0u64..500, theta in 0.0f64..6.28) {
            let a = random_image(16, 16, 1, seed);
            let b = random_image(16, 16, 1, seed + 1);
            let rot = Complex64::from_polar(1.0, theta);
            let (mut ra, mut rb) = (a.clone(), b.clone());
            ra.scale(rot);
            rb.scale(rot);
            prop_assert!((psnr(&a, &b).unwrap() - psnr(&ra, &rb).unwrap()).abs() < 1e-10);
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&ra, &rb).unwrap()).abs() < 1e-10);
        }

        #[test]
        fn psnr_invariant_under_common_permutation(seed in 0u64..500) {
            let a = random_image(8, 8, 1, seed);
            let b = random_image(8, 8, 1, seed + 7);
            let perm: Vec<usize> = (0..64).map(|i| (i * 37 + 11) % 64).collect();
            let pa = ComplexImage::from_vec(8, 8, 1, perm.iter().map(|&i| a.data()[i]).collect()).unwrap();
            let pb = ComplexImage::from_vec(8, 8, 1, perm.iter().map(|&i| b.data()[i]).collect()).unwrap();
            prop_assert!((psnr(&a, &b).unwrap() - psnr(&pa, &pb).unwrap()).abs() < 1e-10);
        }
    }
}
