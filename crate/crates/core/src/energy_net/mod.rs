//! The residual energy network `E_θ(x, σ)`: forward evaluation, exact
//! reverse-mode gradients with respect to input and parameters, spectral
//! normalization and checkpoint I/O.
//!
//! The density modelled is `p_θ(x) ∝ exp(−E_θ(x))`; low energy means likely.

mod arch;
mod checkpoint;
mod layers;
mod net;
mod params;
mod spectral;

use rayon::prelude::*;

pub use arch::{Architecture, Conditioning, Stage, TensorSpec};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, NamedTensor};
pub use params::{EnergyParams, ParamGrads};
pub use spectral::{normalize_matrix, power_iteration, spectral_normalize_all, spectral_normalize_all_mut};

use crate::error::{arg_err, Result};
use crate::numerics::RealTensor;

/// Network input: the `(2, H, W)` real/imaginary image and, for
/// noise-conditioned networks, the noise level fed as a constant channel.
#[derive(Clone, Debug, PartialEq)]
pub struct NetInput {
    pub image: RealTensor,
    pub sigma: Option<f64>,
}

impl NetInput {
    pub fn new(image: RealTensor, sigma: f64) -> Self {
        Self {
            image,
            sigma: Some(sigma),
        }
    }

    pub fn unconditional(image: RealTensor) -> Self {
        Self { image, sigma: None }
    }
}

/// Anything Langevin dynamics can be run on.
pub trait EnergyModel: Sync {
    /// Energy of a `(2, H, W)` image at noise level `sigma`.
    fn energy_at(&self, image: &RealTensor, sigma: f64) -> Result<f64>;

    /// Gradient of [`EnergyModel::energy_at`] with respect to the image.
    fn grad_at(&self, image: &RealTensor, sigma: f64) -> Result<RealTensor>;
}

impl EnergyModel for EnergyParams {
    fn energy_at(&self, image: &RealTensor, sigma: f64) -> Result<f64> {
        Ok(net::forward(self, image, Some(sigma))?.energy)
    }

    fn grad_at(&self, image: &RealTensor, sigma: f64) -> Result<RealTensor> {
        let tape = net::forward(self, image, Some(sigma))?;
        Ok(net::backward(self, &tape, 1.0, None, true)?.expect("input gradient requested"))
    }
}

/// `E(x) = ½‖x‖²`, independent of σ. A test harness with an analytic
/// gradient and a Gaussian stationary law.
#[derive(Clone, Copy, Debug, Default)]
pub struct QuadraticEnergy;

impl EnergyModel for QuadraticEnergy {
    fn energy_at(&self, image: &RealTensor, _sigma: f64) -> Result<f64> {
        Ok(0.5 * image.dot(image))
    }

    fn grad_at(&self, image: &RealTensor, _sigma: f64) -> Result<RealTensor> {
        Ok(image.clone())
    }
}

/// `E(x, σ) = ‖x‖²/(2σ²)`: the exact energy of `N(0, σ²I)`, whose
/// annealed chains settle at the scale of the current noise level.
#[derive(Clone, Copy, Debug, Default)]
pub struct ScaledQuadraticEnergy;

impl EnergyModel for ScaledQuadraticEnergy {
    fn energy_at(&self, image: &RealTensor, sigma: f64) -> Result<f64> {
        Ok(0.5 * image.dot(image) / (sigma * sigma))
    }

    fn grad_at(&self, image: &RealTensor, sigma: f64) -> Result<RealTensor> {
        Ok(image.map(|v| v / (sigma * sigma)))
    }
}

pub fn energy(params: &EnergyParams, input: &NetInput) -> Result<f64> {
    Ok(net::forward(params, &input.image, input.sigma)?.energy)
}

/// Energies of many inputs, evaluated in parallel.
pub fn energy_batch(params: &EnergyParams, inputs: &[NetInput]) -> Result<Vec<f64>> {
    inputs.par_iter().map(|i| energy(params, i)).collect()
}

/// `∂E/∂x` for the two image channels; the σ channel gets no gradient.
pub fn grad_input(params: &EnergyParams, input: &NetInput) -> Result<RealTensor> {
    let tape = net::forward(params, &input.image, input.sigma)?;
    Ok(net::backward(params, &tape, 1.0, None, true)?.expect("input gradient requested"))
}

/// Energy and its gradient with respect to every parameter.
pub fn energy_and_grad_params(params: &EnergyParams, input: &NetInput) -> Result<(f64, ParamGrads)> {
    let tape = net::forward(params, &input.image, input.sigma)?;
    let mut g = params.grads_like();
    net::backward(params, &tape, 1.0, Some(&mut g), false)?;
    Ok((tape.energy, g))
}

/// Gradient of `Σ_n weights[n] · E(batch[n])` with respect to the
/// parameters. Samples are processed in parallel and reduced in batch order.
pub fn grad_params(params: &EnergyParams, batch: &[NetInput], weights: &[f64]) -> Result<ParamGrads> {
    if batch.is_empty() {
        return arg_err("grad_params needs a non-empty batch");
    }
    if batch.len() != weights.len() {
        return arg_err(format!(
            "batch has {} inputs but {} weights",
            batch.len(),
            weights.len()
        ));
    }
    let parts: Vec<Option<ParamGrads>> = batch
        .par_iter()
        .zip(weights)
        .map(|(input, &w)| {
            let tape = net::forward(params, &input.image, input.sigma)?;
            if w == 0.0 {
                return Ok(None);
            }
            let mut g = params.grads_like();
            net::backward(params, &tape, w, Some(&mut g), false)?;
            Ok(Some(g))
        })
        .collect::<Result<_>>()?;
    let mut total = params.grads_like();
    for g in parts.iter().flatten() {
        total.axpy(1.0, g);
    }
    Ok(total)
}
