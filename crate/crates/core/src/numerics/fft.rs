//! Unitary radix-2 2-D FFT.
//!
//! Both directions carry a `1/√(HW)` factor so the transform is unitary and
//! its adjoint is its inverse.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::ComplexImage;
use crate::error::{dim_err, Result};

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

struct Plan {
    n: usize,
    bits: u32,
    /// `exp(-2πik/n)` for `k < n/2`.
    twiddles: Vec<Complex64>,
}

impl Plan {
    fn new(n: usize) -> Self {
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex64::new(a.cos(), a.sin())
            })
            .collect();
        Self {
            n,
            bits: n.trailing_zeros(),
            twiddles,
        }
    }

    fn run(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        if n == 1 {
            return;
        }
        let shift = usize::BITS - self.bits;
        for i in 0..n {
            let j = i.reverse_bits() >> shift;
            if j > i {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

fn transform(img: &mut ComplexImage, inverse: bool) -> Result<()> {
    let (h, w) = (img.height(), img.width());
    if !is_power_of_two(h) || !is_power_of_two(w) {
        return dim_err(format!("FFT needs power-of-two dimensions, got {h}x{w}"));
    }
    let row_plan = Plan::new(w);
    let col_plan = Plan::new(h);
    let scale = 1.0 / ((h * w) as f64).sqrt();
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..img.coils() {
        let plane = img.coil_data_mut(c);
        for row in plane.chunks_exact_mut(w) {
            row_plan.run(row, inverse);
        }
        for x in 0..w {
            for y in 0..h {
                column[y] = plane[y * w + x];
            }
            col_plan.run(&mut column, inverse);
            for y in 0..h {
                plane[y * w + x] = column[y] * scale;
            }
        }
    }
    Ok(())
}

/// Forward unitary 2-D DFT of every coil.
pub fn fft2(img: &ComplexImage) -> Result<ComplexImage> {
    let mut out = img.clone();
    transform(&mut out, false)?;
    Ok(out)
}

/// Inverse unitary 2-D DFT of every coil.
pub fn ifft2(k: &ComplexImage) -> Result<ComplexImage> {
    let mut out = k.clone();
    transform(&mut out, true)?;
    Ok(out)
}

pub fn fft2_inplace(img: &mut ComplexImage) -> Result<()> {
    transform(img, false)
}

pub fn ifft2_inplace(img: &mut ComplexImage) -> Result<()> {
    transform(img, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(img: &ComplexImage) -> ComplexImage {
        let (h, w) = (img.height(), img.width());
        let d = img.data();
        let s = 1.0 / ((h * w) as f64).sqrt();
        let mut out = vec![Complex64::new(0.0, 0.0); h * w];
        for ky in 0..h {
            for kx in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let a = -2.0 * PI * ((ky * y) as f64 / h as f64 + (kx * x) as f64 / w as f64);
                        acc += d[y * w + x] * Complex64::new(a.cos(), a.sin());
                    }
                }
                out[ky * w + kx] = acc * s;
            }
        }
        ComplexImage::from_vec(h, w, 1, out).unwrap()
    }

    #[test]
    fn delta_maps_to_constant() {
        let mut im = ComplexImage::zeros(4, 4, 1).unwrap();
        im.data_mut()[0] = Complex64::new(1.0, 0.0);
        let k = fft2(&im).unwrap();
        for v in k.data() {
            assert!((v - Complex64::new(0.25, 0.0)).norm() < 1e-15);
        }
        let back = ifft2(&k).unwrap();
        assert!(back.distance(&im) < 1e-15);
    }

    #[test]
    fn matches_naive_dft_on_rectangular_input() {
        let data: Vec<_> = (0..8 * 16)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let im = ComplexImage::from_vec(8, 16, 1, data).unwrap();
        let fast = fft2(&im).unwrap();
        let slow = naive_dft(&im);
        assert!(fast.distance(&slow) < 1e-12);
    }

    #[test]
    fn rejects_non_power_of_two() {
        let im = ComplexImage::zeros(6, 8, 1).unwrap();
        assert!(fft2(&im).is_err());
        assert!(ifft2(&im).is_err());
    }
}
