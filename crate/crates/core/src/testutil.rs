//! Shared helpers for unit tests.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::kspace::CoilSensitivities;
use crate::numerics::{ComplexImage, RandomStream};

pub fn random_image(h: usize, w: usize, coils: usize, seed: u64) -> ComplexImage {
    let mut s = RandomStream::new(seed, 77);
    let data = (0..h * w * coils)
        .map(|_| Complex64::new(s.next_gaussian(), s.next_gaussian()))
        .collect();
    ComplexImage::from_vec(h, w, coils, data).unwrap()
}

pub fn random_sensitivities(h: usize, w: usize, coils: usize, seed: u64) -> CoilSensitivities {
    CoilSensitivities::normalized(random_image(h, w, coils, seed)).unwrap()
}

/// Dense unitary 2-D DFT matrix acting on row-major vectorised images.
pub fn dft_matrix(h: usize, w: usize) -> DMatrix<Complex64> {
    let n = h * w;
    let s = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |k, p| {
        let (ky, kx) = (k / w, k % w);
        let (y, x) = (p / w, p % w);
        let a = -2.0 * std::f64::consts::PI * ((ky * y) as f64 / h as f64 + (kx * x) as f64 / w as f64);
        Complex64::new(a.cos(), a.sin()) * s
    })
}

pub fn to_vector(img: &ComplexImage) -> DVector<Complex64> {
    DVector::from_column_slice(img.data())
}
