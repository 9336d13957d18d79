use num_complex::Complex64;

use super::{CoilSensitivities, SamplingMask};
use crate::error::{arg_err, dim_err, Error, Result};
use crate::numerics::{fft2, fft2_inplace, ifft2, ifft2_inplace, ComplexImage, RandomStream};

/// Measured k-space on the full grid (zeros at unsampled locations), one
/// plane per coil.
#[derive(Clone, Debug, PartialEq)]
pub struct KSpaceMeasurement {
    pub mask: SamplingMask,
    pub data: ComplexImage,
    pub noise_std: f64,
}

impl KSpaceMeasurement {
    /// Wraps raw k-space, zeroing everything outside the mask.
    pub fn new(mask: SamplingMask, mut data: ComplexImage, noise_std: f64) -> Result<Self> {
        if data.height() != mask.height() || data.width() != mask.width() {
            return dim_err(format!(
                "k-space is {}x{}, mask is {}x{}",
                data.height(),
                data.width(),
                mask.height(),
                mask.width()
            ));
        }
        apply_mask(&mut data, &mask);
        Ok(Self { mask, data, noise_std })
    }

    pub fn coils(&self) -> usize {
        self.data.coils()
    }
}

fn apply_mask(k: &mut ComplexImage, mask: &SamplingMask) {
    let zero = Complex64::new(0.0, 0.0);
    for c in 0..k.coils() {
        for (v, &keep) in k.coil_data_mut(c).iter_mut().zip(mask.keep()) {
            if !keep {
                *v = zero;
            }
        }
    }
}

fn check_single(x: &ComplexImage, mask: &SamplingMask) -> Result<()> {
    if x.coils() != 1 {
        return dim_err(format!("expected a single-coil image, got {} coils", x.coils()));
    }
    if x.height() != mask.height() || x.width() != mask.width() {
        return dim_err(format!(
            "image is {}x{}, mask is {}x{}",
            x.height(),
            x.width(),
            mask.height(),
            mask.width()
        ));
    }
    Ok(())
}

/// Simulates `y_c = P·F(S_c ⊙ x) + n` with circularly symmetric complex
/// Gaussian noise of total standard deviation `noise_std` on kept locations.
pub fn forward(
    x: &ComplexImage,
    mask: &SamplingMask,
    coils: Option<&CoilSensitivities>,
    noise_std: f64,
    stream: &mut RandomStream,
) -> Result<KSpaceMeasurement> {
    check_single(x, mask)?;
    if !noise_std.is_finite() || noise_std < 0.0 {
        return arg_err(format!("noise std must be finite and >= 0, got {noise_std}"));
    }
    let mut k = match coils {
        Some(s) => s.expand(x)?,
        None => x.clone(),
    };
    fft2_inplace(&mut k)?;
    apply_mask(&mut k, mask);
    if noise_std > 0.0 {
        let s = noise_std / std::f64::consts::SQRT_2;
        for c in 0..k.coils() {
            for (v, &keep) in k.coil_data_mut(c).iter_mut().zip(mask.keep()) {
                if keep {
                    *v += Complex64::new(s * stream.next_gaussian(), s * stream.next_gaussian());
                }
            }
        }
    }
    KSpaceMeasurement::new(mask.clone(), k, noise_std)
}

/// Zero-filled baseline. Single coil: `F⁻¹y`. With sensitivities:
/// `Σ_c conj(S_c) F⁻¹y_c`. Several coils without sensitivities:
/// root-sum-of-squares of the per-coil images with the first coil's phase.
pub fn zero_filled(y: &KSpaceMeasurement, coils: Option<&CoilSensitivities>) -> Result<ComplexImage> {
    let per_coil = ifft2(&y.data)?;
    match coils {
        Some(s) => s.combine(&per_coil),
        None if y.coils() == 1 => Ok(per_coil),
        None => Ok(per_coil.rss_combine()),
    }
}

/// Per-coil zero-filled images (no coil combination).
pub fn zero_filled_coils(y: &KSpaceMeasurement) -> Result<ComplexImage> {
    ifft2(&y.data)
}

/// Objective `‖P F x − y‖² + λ‖x − x̃‖²` for a single-coil problem.
pub fn dc_objective(x: &ComplexImage, x_prior: &ComplexImage, y: &KSpaceMeasurement, lambda: f64) -> Result<f64> {
    check_single(x, &y.mask)?;
    let k = fft2(x)?;
    let fit: f64 = k
        .data()
        .iter()
        .zip(y.data.data())
        .zip(y.mask.keep())
        .filter(|(_, &keep)| keep)
        .map(|((a, b), _)| (a - b).norm_sqr())
        .sum();
    Ok(fit + lambda * x.distance(x_prior).powi(2))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return arg_err(format!("λ must be finite and >= 0, got {lambda}"));
    }
    Ok(())
}

/// Closed-form minimiser of `‖P F x − y‖² + λ‖x − x̃‖²`: measured k-space
/// locations become `(y + λ F x̃)/(1 + λ)`, the rest keep `F x̃`.
pub fn dc_project_single(x_prior: &ComplexImage, y: &KSpaceMeasurement, lambda: f64) -> Result<ComplexImage> {
    check_lambda(lambda)?;
    check_single(x_prior, &y.mask)?;
    if y.coils() != 1 {
        return dim_err(format!("single-coil projection got {} measurement coils", y.coils()));
    }
    let mut k = fft2(x_prior)?;
    project_plane(k.data_mut(), y.data.data(), y.mask.keep(), lambda);
    ifft2_inplace(&mut k)?;
    Ok(k)
}

fn project_plane(k: &mut [Complex64], y: &[Complex64], keep: &[bool], lambda: f64) {
    let denom = 1.0 / (1.0 + lambda);
    for ((kv, yv), &m) in k.iter_mut().zip(y).zip(keep) {
        if m {
            *kv = if lambda == 0.0 { *yv } else { (yv + *kv * lambda) * denom };
        }
    }
}

/// Applies [`dc_project_single`] independently to each coil channel.
pub fn dc_project_calibfree(x_prior: &ComplexImage, y: &KSpaceMeasurement, lambda: f64) -> Result<ComplexImage> {
    check_lambda(lambda)?;
    if x_prior.coils() != y.coils() {
        return dim_err(format!(
            "per-coil estimate has {} coils, measurement has {}",
            x_prior.coils(),
            y.coils()
        ));
    }
    if x_prior.height() != y.mask.height() || x_prior.width() != y.mask.width() {
        return dim_err("per-coil estimate and mask differ in size");
    }
    let mut k = fft2(x_prior)?;
    for c in 0..k.coils() {
        project_plane(k.coil_data_mut(c), y.data.coil_data(c), y.mask.keep(), lambda);
    }
    ifft2_inplace(&mut k)?;
    Ok(k)
}

/// Outcome of the multi-coil conjugate-gradient solve.
#[derive(Clone, Debug)]
pub struct CgSolution {
    pub image: ComplexImage,
    pub iterations: usize,
    /// `‖(EᴴE + λI)x − b‖ / ‖b‖`, recomputed from scratch at exit.
    pub relative_residual: f64,
}

/// `(EᴴE + λI) x` with `E = P F S`.
fn normal_op(x: &ComplexImage, coils: &CoilSensitivities, mask: &SamplingMask, lambda: f64) -> Result<ComplexImage> {
    let mut k = coils.expand(x)?;
    fft2_inplace(&mut k)?;
    apply_mask(&mut k, mask);
    ifft2_inplace(&mut k)?;
    let mut out = coils.combine(&k)?;
    for (o, v) in out.data_mut().iter_mut().zip(x.data()) {
        *o += v * lambda;
    }
    Ok(out)
}

fn inner(a: &ComplexImage, b: &ComplexImage) -> Complex64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x.conj() * y).sum()
}

fn axpy(y: &mut ComplexImage, a: Complex64, x: &ComplexImage) {
    for (yv, xv) in y.data_mut().iter_mut().zip(x.data()) {
        *yv += a * xv;
    }
}

/// Solves `(EᴴE + λI) x = Eᴴy + λx̃` by conjugate gradients, warm-started
/// at `x̃`, and reports the final relative residual.
pub fn dc_solve_multicoil(
    x_prior: &ComplexImage,
    y: &KSpaceMeasurement,
    coils: &CoilSensitivities,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<CgSolution> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return arg_err(format!("multi-coil projection needs λ > 0, got {lambda}"));
    }
    if !(tol > 0.0) {
        return arg_err(format!("tolerance must be positive, got {tol}"));
    }
    check_single(x_prior, &y.mask)?;
    if y.coils() != coils.n_coils() {
        return dim_err(format!(
            "measurement has {} coils, sensitivities have {}",
            y.coils(),
            coils.n_coils()
        ));
    }
    coils.check_plane(x_prior)?;

    let mut b = coils.combine(&ifft2(&y.data)?)?;
    axpy(&mut b, Complex64::new(lambda, 0.0), x_prior);
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(CgSolution {
            image: ComplexImage::zeros(x_prior.height(), x_prior.width(), 1)?,
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let mut x = x_prior.clone();
    let mut r = b.clone();
    axpy(&mut r, Complex64::new(-1.0, 0.0), &normal_op(&x, coils, &y.mask, lambda)?);
    let mut p = r.clone();
    let mut rr = inner(&r, &r).re;
    let mut iterations = 0;
    while rr.sqrt() / b_norm > tol && iterations < max_iter {
        let ap = normal_op(&p, coils, &y.mask, lambda)?;
        let alpha = rr / inner(&p, &ap).re;
        axpy(&mut x, Complex64::new(alpha, 0.0), &p);
        axpy(&mut r, Complex64::new(-alpha, 0.0), &ap);
        let rr_new = inner(&r, &r).re;
        let beta = rr_new / rr;
        for (pv, rv) in p.data_mut().iter_mut().zip(r.data()) {
            *pv = rv + *pv * beta;
        }
        rr = rr_new;
        iterations += 1;
    }
    let mut true_r = b;
    axpy(&mut true_r, Complex64::new(-1.0, 0.0), &normal_op(&x, coils, &y.mask, lambda)?);
    let relative_residual = true_r.norm() / b_norm;
    if !x.is_finite() {
        return Err(Error::NonFinite("multi-coil CG iterate".into()));
    }
    if relative_residual > tol {
        return Err(Error::NotConverged {
            iterations,
            residual: relative_residual,
        });
    }
    Ok(CgSolution {
        image: x,
        iterations,
        relative_residual,
    })
}

/// [`dc_solve_multicoil`] returning only the image.
pub fn dc_project_multicoil(
    x_prior: &ComplexImage,
    y: &KSpaceMeasurement,
    coils: &CoilSensitivities,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ComplexImage> {
    dc_solve_multicoil(x_prior, y, coils, lambda, tol, max_iter).map(|s| s.image)
}
