//! Shared fixtures for the benchmarks.

use ebmrec_core::energy_net::{Architecture, EnergyParams};
use ebmrec_core::kspace::{forward, make_mask, CoilSensitivities, KSpaceMeasurement, MaskPattern};
use ebmrec_core::phantom::{make_phantom, simulate_sensitivities, PhantomSpec};
use ebmrec_core::{ComplexImage, RandomStream};

pub fn phantom(size: usize) -> ComplexImage {
    let spec = PhantomSpec { height: size, width: size, ..PhantomSpec::default() };
    make_phantom(&spec, &mut RandomStream::new(7, 0)).expect("phantom")
}

pub fn params(widths: &[usize]) -> EnergyParams {
    EnergyParams::init(&Architecture::with_widths(widths), &mut RandomStream::new(7, 1), 10).expect("params")
}

/// R = 3 pseudo-radial measurement of a phantom, with optional coils.
pub fn measurement(size: usize, coils: usize) -> (ComplexImage, KSpaceMeasurement, Option<CoilSensitivities>) {
    let x = phantom(size);
    let mask = make_mask(MaskPattern::PseudoRadial, 3.0, size, size, 0.04, &mut RandomStream::new(7, 2)).expect("mask");
    let sens = (coils > 1).then(|| simulate_sensitivities(coils, size, size).expect("coils"));
    let y = forward(&x, &mask, sens.as_ref(), 0.0, &mut RandomStream::new(7, 3)).expect("forward");
    (x, y, sens)
}
