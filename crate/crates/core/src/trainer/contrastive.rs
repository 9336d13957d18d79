use rayon::prelude::*;

use crate::energy_net::{energy_and_grad_params, EnergyParams, NetInput, ParamGrads};
use crate::error::{arg_err, Result};
use crate::numerics::{RandomStream, RealTensor};

/// Batch statistics of one contrastive evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContrastiveStats {
    pub mean_pos: f64,
    pub mean_neg: f64,
    /// `mean_pos − mean_neg`.
    pub gap: f64,
    /// The regularized loss whose gradient is returned.
    pub loss: f64,
}

/// `∂L/∂E` for every positive and negative sample of
/// `L = Σ_n a_n (βE⁺_n² + E⁺_n) + Σ_m b_m (βE⁻_m² − E⁻_m)`.
///
/// Positives carry mass `a_n = 1/N`; negatives carry `b_m = 1/M` or, when
/// `neg_mass` is given, those probabilities (e.g. an exact model
/// expectation over a finite domain).
pub fn contrastive_weights(e_pos: &[f64], e_neg: &[f64], neg_mass: Option<&[f64]>, beta: f64) -> (Vec<f64>, Vec<f64>) {
    let a = 1.0 / e_pos.len() as f64;
    let b = 1.0 / e_neg.len() as f64;
    let wp = e_pos.iter().map(|&e| a * (2.0 * beta * e + 1.0)).collect();
    let wn = e_neg
        .iter()
        .enumerate()
        .map(|(m, &e)| neg_mass.map_or(b, |q| q[m]) * (2.0 * beta * e - 1.0))
        .collect();
    (wp, wn)
}

/// Gradient of `(1/N)Σ_n [β(E(x⁺_n)² + E(x⁻_n)²) + E(x⁺_n) − E(x⁻_n)]`
/// with respect to the parameters.
pub fn contrastive_grad(
    params: &EnergyParams,
    positives: &[NetInput],
    negatives: &[NetInput],
    beta: f64,
) -> Result<(ParamGrads, ContrastiveStats)> {
    contrastive_grad_weighted(params, positives, negatives, beta, None)
}

/// [`contrastive_grad`] with the `n`-th pair's terms scaled by
/// `pair_weights[n]`. Statistics are unweighted.
pub fn contrastive_grad_weighted(
    params: &EnergyParams,
    positives: &[NetInput],
    negatives: &[NetInput],
    beta: f64,
    pair_weights: Option<&[f64]>,
) -> Result<(ParamGrads, ContrastiveStats)> {
    if let Some(w) = pair_weights {
        if w.len() != positives.len() || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return arg_err("pair weights must be finite, >= 0 and one per pair");
        }
    }
    if positives.is_empty() || positives.len() != negatives.len() {
        return arg_err(format!(
            "contrastive batches must be equal and non-empty, got {} and {}",
            positives.len(),
            negatives.len()
        ));
    }
    if !(beta.is_finite() && beta >= 0.0) {
        return arg_err(format!("β must be >= 0, got {beta}"));
    }
    let evals: Vec<(f64, ParamGrads)> = positives
        .par_iter()
        .chain(negatives.par_iter())
        .map(|input| energy_and_grad_params(params, input))
        .collect::<Result<_>>()?;
    let n = positives.len();
    let e_pos: Vec<f64> = evals[..n].iter().map(|e| e.0).collect();
    let e_neg: Vec<f64> = evals[n..].iter().map(|e| e.0).collect();
    let (wp, wn) = contrastive_weights(&e_pos, &e_neg, None, beta);
    // Pair terms are combined first so identical pairs cancel exactly.
    let mut total = params.grads_like();
    for i in 0..n {
        let scale = pair_weights.map_or(1.0, |w| w[i]);
        let mut pair = evals[i].1.clone();
        pair.scale(scale * wp[i]);
        pair.axpy(scale * wn[i], &evals[n + i].1);
        total.axpy(1.0, &pair);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mean_pos, mean_neg) = (mean(&e_pos), mean(&e_neg));
    let reg = e_pos.iter().chain(&e_neg).map(|e| e * e).sum::<f64>() / n as f64;
    Ok((
        total,
        ContrastiveStats {
            mean_pos,
            mean_neg,
            gap: mean_pos - mean_neg,
            loss: beta * reg + mean_pos - mean_neg,
        },
    ))
}

/// Adds `N(0, σ²)` noise to each sample with `σ` drawn uniformly from
/// `amplitudes`; returns the noisy batch and the chosen levels.
pub fn perturb_positives(
    batch: &[RealTensor],
    amplitudes: &[f64],
    stream: &mut RandomStream,
) -> Result<(Vec<RealTensor>, Vec<f64>)> {
    if amplitudes.is_empty() {
        return arg_err("need at least one perturbation amplitude");
    }
    if amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return arg_err("perturbation amplitudes must be finite and >= 0");
    }
    let mut out = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    for x in batch {
        let sigma = amplitudes[stream.next_index(amplitudes.len())];
        let mut y = x.clone();
        if sigma > 0.0 {
            y.data_mut().iter_mut().for_each(|v| *v += sigma * stream.next_gaussian());
        }
        out.push(y);
        labels.push(sigma);
    }
    Ok((out, labels))
}
