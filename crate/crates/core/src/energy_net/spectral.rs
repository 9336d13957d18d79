//! Spectral normalization by power iteration.

use super::EnergyParams;
use crate::error::{arg_err, Result};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Runs `iterations` power-iteration steps on the row-major `rows × cols`
/// matrix `w`, warm-started from `u`, and returns the estimate of the
/// largest singular value. Returns 0 for a zero matrix.
pub fn power_iteration(w: &[f64], rows: usize, cols: usize, u: &mut [f64], iterations: usize) -> f64 {
    debug_assert_eq!(w.len(), rows * cols);
    if norm(u) == 0.0 {
        u.fill(1.0 / (rows as f64).sqrt());
    }
    let mut v = vec![0.0; cols];
    let mut sigma = 0.0;
    for _ in 0..iterations {
        v.fill(0.0);
        for (r, row) in w.chunks_exact(cols).enumerate() {
            let ur = u[r];
            for (vc, wc) in v.iter_mut().zip(row) {
                *vc += wc * ur;
            }
        }
        let nv = norm(&v);
        if nv == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        for (r, row) in w.chunks_exact(cols).enumerate() {
            u[r] = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        let nu = norm(u);
        if nu == 0.0 {
            return 0.0;
        }
        u.iter_mut().for_each(|x| *x /= nu);
        sigma = nu;
    }
    sigma
}

/// Divides `w` by its power-iteration estimate of `σ_max`; zero matrices
/// pass through. Returns the estimate.
pub fn normalize_matrix(w: &mut [f64], rows: usize, cols: usize, u: &mut [f64], iterations: usize) -> f64 {
    let sigma = power_iteration(w, rows, cols, u, iterations);
    if sigma > 0.0 {
        w.iter_mut().for_each(|x| *x /= sigma);
    }
    sigma
}

pub(crate) fn normalize_all_mut(params: &mut EnergyParams, iterations: usize) -> Result<()> {
    if iterations == 0 {
        return arg_err("spectral normalization needs at least one iteration");
    }
    for i in 0..params.tensors.len() {
        let spec = &params.specs()[i];
        if !spec.normalized {
            continue;
        }
        let (rows, cols) = spec.matrix_dims();
        let u = params.sn_u[i].as_mut().expect("normalized tensor has u");
        normalize_matrix(&mut params.tensors[i], rows, cols, u, iterations);
    }
    Ok(())
}

/// Returns a copy of `params` with every weight matrix (convolutions viewed
/// as `out × (in·k·k)`) divided by its estimated largest singular value and
/// the power-iteration vectors advanced.
pub fn spectral_normalize_all(params: &EnergyParams, iterations: usize) -> Result<EnergyParams> {
    let mut out = params.clone();
    normalize_all_mut(&mut out, iterations)?;
    Ok(out)
}

/// In-place variant of [`spectral_normalize_all`].
pub fn spectral_normalize_all_mut(params: &mut EnergyParams, iterations: usize) -> Result<()> {
    normalize_all_mut(params, iterations)
}
