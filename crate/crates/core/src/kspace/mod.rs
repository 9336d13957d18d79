//! Sampling masks, the k-space measurement operator and data-consistency
//! projections for single-coil, sensitivity-encoded and calibration-free
//! acquisitions.

mod coils;
mod mask;
mod ops;

pub use coils::CoilSensitivities;
pub use mask::{make_mask, MaskPattern, SamplingMask, FRACTION_TOLERANCE};
pub use ops::{
    dc_objective, dc_project_calibfree, dc_project_multicoil, dc_project_single, dc_solve_multicoil, forward,
    zero_filled, zero_filled_coils, CgSolution, KSpaceMeasurement,
};

#[cfg(test)]
mod tests;
