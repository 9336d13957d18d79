//! Energy-based image priors for under-sampled MRI.
//!
//! A residual convolutional energy network is trained by maximum likelihood
//! with Langevin-sampled negatives, then used as the prior in an annealed
//! Langevin reconstruction that alternates prior steps with a k-space
//! data-consistency projection.

pub mod energy_net;
pub mod error;
pub mod io;
pub mod kspace;
pub mod metrics;
pub mod numerics;
pub mod phantom;
pub mod recon;
pub mod sampler;
pub mod trainer;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use numerics::{ComplexImage, RandomStream, RealTensor};
