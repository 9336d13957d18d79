//! Tensor and complex-image containers, the unitary 2-D FFT, and seeded
//! random streams. Everything else in the crate is built on these.

mod fft;
mod image;
mod rng;
mod tensor;

pub use fft::{fft2, fft2_inplace, ifft2, ifft2_inplace, is_power_of_two};
pub use image::ComplexImage;
pub use rng::{gaussian, uniform, RandomStream};
pub use tensor::RealTensor;

pub use num_complex::Complex64;
