//! Unadjusted Langevin dynamics, annealed noise schedules and the replay
//! buffer of past negative samples.

mod buffer;
mod schedule;
mod tiling;

pub use buffer::{ReplayBuffer, DEFAULT_CAPACITY, DEFAULT_REUSE_PROBABILITY};
pub use schedule::{anneal_step_size, NoiseSchedule};
pub use tiling::{tiled_grad, Tiled, Tiling};

use crate::energy_net::EnergyModel;
use crate::error::{arg_err, Error, Result};
use crate::numerics::{gaussian, RandomStream, RealTensor};

/// One step `x − (λ/2)∇E(x) + N(0, λ)`.
pub fn langevin_step<M: EnergyModel + ?Sized>(
    model: &M,
    x: &RealTensor,
    step: f64,
    sigma: f64,
    stream: &mut RandomStream,
) -> Result<RealTensor> {
    if !(step > 0.0) || !step.is_finite() {
        return arg_err(format!("Langevin step must be positive, got {step}"));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("Langevin state".into()));
    }
    let grad = model.grad_at(x, sigma)?;
    if !grad.is_finite() {
        return Err(Error::NonFinite("energy gradient during Langevin step".into()));
    }
    let mut out = gaussian(stream, x.shape(), step.sqrt())?;
    out.axpy(1.0, x);
    out.axpy(-0.5 * step, &grad);
    Ok(out)
}

/// `steps` composed Langevin steps.
pub fn run_chain<M: EnergyModel + ?Sized>(
    model: &M,
    x0: &RealTensor,
    steps: usize,
    step: f64,
    sigma: f64,
    stream: &mut RandomStream,
) -> Result<RealTensor> {
    run_chain_clamped(model, x0, steps, step, sigma, None, stream)
}

/// [`run_chain`] with the state clamped to `[lo, hi]` after every step.
pub fn run_chain_clamped<M: EnergyModel + ?Sized>(
    model: &M,
    x0: &RealTensor,
    steps: usize,
    step: f64,
    sigma: f64,
    clamp: Option<(f64, f64)>,
    stream: &mut RandomStream,
) -> Result<RealTensor> {
    if steps == 0 {
        return arg_err("a Langevin chain needs at least one step");
    }
    let mut x = x0.clone();
    for t in 0..steps {
        x = langevin_step(model, &x, step, sigma, stream).map_err(|e| match e {
            Error::NonFinite(what) => Error::Diverged {
                iteration: t,
                reason: format!("non-finite {what}"),
            },
            other => other,
        })?;
        if let Some((lo, hi)) = clamp {
            x.clamp(lo, hi);
        }
    }
    Ok(x)
}
