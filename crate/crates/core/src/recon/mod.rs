//! Annealed Langevin reconstruction alternating prior steps with k-space
//! data consistency, plus the zero-filled baseline.

use std::time::Instant;

use crate::energy_net::EnergyModel;
use crate::error::{arg_err, dim_err, Error, Result};
use crate::kspace::{
    dc_project_calibfree, dc_project_multicoil, dc_project_single, zero_filled, zero_filled_coils, CoilSensitivities,
    KSpaceMeasurement,
};
pub use crate::metrics::{evaluate, MetricsReport};
use crate::metrics::psnr;
use crate::numerics::{uniform, ComplexImage, RandomStream};
use crate::sampler::{langevin_step, NoiseSchedule, Tiled, Tiling};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReconMode {
    SingleCoil,
    /// Known coil sensitivities, solved by conjugate gradients.
    ParallelSens,
    /// Per-coil images combined by root-sum-of-squares at the end.
    CalibFree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    UniformNoise,
    ZeroFilled,
}

/// Where the data-consistency projection sits in the annealing loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DcPlacement {
    /// After every Langevin step.
    PerStep,
    /// Once at the end of each noise level.
    PerLevel,
}

macro_rules! named_enum {
    ($t:ty { $($v:ident => $s:literal),+ $(,)? }) => {
        impl std::str::FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok(<$t>::$v),)+
                    _ => arg_err(format!("unknown {} '{s}'", stringify!($t))),
                }
            }
        }

        impl std::fmt::Display for $t {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self {
                    $(<$t>::$v => $s,)+
                })
            }
        }
    };
}

named_enum!(ReconMode { SingleCoil => "single_coil", ParallelSens => "parallel_sens", CalibFree => "calib_free" });
named_enum!(InitKind { UniformNoise => "uniform_noise", ZeroFilled => "zero_filled" });
named_enum!(DcPlacement { PerStep => "per_step", PerLevel => "per_level" });

#[derive(Clone, Debug, PartialEq)]
pub struct ReconConfig {
    pub mode: ReconMode,
    /// Weight of the prior-proximity term in the data-consistency solve.
    pub lambda: f64,
    pub schedule: NoiseSchedule,
    pub init: InitKind,
    pub dc: DcPlacement,
    /// Conjugate-gradient tolerance and iteration cap for `ParallelSens`.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Evaluate the prior tile by tile.
    pub tiling: Option<Tiling>,
    /// Ground truth for the per-iteration PSNR trace.
    pub log_reference: Option<ComplexImage>,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            mode: ReconMode::SingleCoil,
            lambda: 0.1,
            schedule: NoiseSchedule::default(),
            init: InitKind::UniformNoise,
            dc: DcPlacement::PerStep,
            cg_tol: 1e-8,
            cg_max_iter: 200,
            tiling: None,
            log_reference: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReconReport {
    pub image: ComplexImage,
    /// PSNR after every Langevin step (`I·T` entries) when a reference was
    /// configured.
    pub trace: Vec<f64>,
    pub wallclock_s: f64,
    pub config: ReconConfig,
}

fn check(y: &KSpaceMeasurement, config: &ReconConfig, coils: Option<&CoilSensitivities>) -> Result<()> {
    if !(config.lambda.is_finite() && config.lambda >= 0.0) {
        return arg_err(format!("λ must be >= 0, got {}", config.lambda));
    }
    match config.mode {
        ReconMode::SingleCoil if y.coils() != 1 => {
            dim_err(format!("single-coil mode got {} coils of k-space", y.coils()))
        }
        ReconMode::ParallelSens => match coils {
            None => arg_err("parallel_sens mode needs coil sensitivities"),
            Some(s) if s.n_coils() != y.coils() => dim_err(format!(
                "{} sensitivity maps for {} coils of k-space",
                s.n_coils(),
                y.coils()
            )),
            Some(_) if config.lambda == 0.0 => arg_err("parallel_sens mode needs λ > 0"),
            Some(_) => Ok(()),
        },
        ReconMode::CalibFree if y.coils() < 2 => arg_err("calib_free mode needs at least 2 coils"),
        _ => Ok(()),
    }
}

/// Zero-filled reconstruction for the given mode.
pub fn zero_filled_baseline(y: &KSpaceMeasurement, mode: ReconMode, coils: Option<&CoilSensitivities>) -> Result<ComplexImage> {
    match mode {
        ReconMode::SingleCoil => zero_filled(y, None),
        ReconMode::ParallelSens => zero_filled(y, coils),
        ReconMode::CalibFree => Ok(zero_filled_coils(y)?.rss_combine()),
    }
}

/// Starting point of the chain: uniform noise on `[−1, 1]` per real and
/// imaginary part, or the zero-filled image (per coil in `CalibFree`).
pub fn init_state(
    config: &ReconConfig,
    y: &KSpaceMeasurement,
    coils: Option<&CoilSensitivities>,
    stream: &mut RandomStream,
) -> Result<ComplexImage> {
    let (h, w) = (y.data.height(), y.data.width());
    let planes = if config.mode == ReconMode::CalibFree { y.coils() } else { 1 };
    match config.init {
        InitKind::UniformNoise => {
            let stack = (0..planes)
                .map(|_| ComplexImage::from_channels(&uniform(stream, &[2, h, w], -1.0, 1.0)?))
                .collect::<Result<Vec<_>>>()?;
            ComplexImage::stack(&stack)
        }
        InitKind::ZeroFilled => match config.mode {
            ReconMode::SingleCoil => zero_filled(y, None),
            ReconMode::ParallelSens => zero_filled(y, coils),
            ReconMode::CalibFree => zero_filled_coils(y),
        },
    }
}

fn project(
    x: &ComplexImage,
    y: &KSpaceMeasurement,
    config: &ReconConfig,
    coils: Option<&CoilSensitivities>,
) -> Result<ComplexImage> {
    match config.mode {
        ReconMode::SingleCoil => dc_project_single(x, y, config.lambda),
        ReconMode::ParallelSens => dc_project_multicoil(
            x,
            y,
            coils.expect("checked"),
            config.lambda,
            config.cg_tol,
            config.cg_max_iter,
        ),
        ReconMode::CalibFree => dc_project_calibfree(x, y, config.lambda),
    }
}

fn combined(x: &ComplexImage, mode: ReconMode) -> ComplexImage {
    match mode {
        ReconMode::CalibFree => x.rss_combine(),
        _ => x.clone(),
    }
}

/// Annealed Langevin reconstruction: for each level `σ_i` with step
/// `α_i = ε·σ_i²/σ_I²`, `T` Langevin steps on every image plane, each
/// followed (or, with `DcPlacement::PerLevel`, each level followed) by the
/// mode's data-consistency projection.
pub fn reconstruct<M: EnergyModel + ?Sized>(
    y: &KSpaceMeasurement,
    model: &M,
    config: &ReconConfig,
    coils: Option<&CoilSensitivities>,
    stream: &mut RandomStream,
) -> Result<ReconReport> {
    check(y, config, coils)?;
    if let Some(r) = &config.log_reference {
        if r.coils() != 1 || !r.same_plane(&y.data) {
            return dim_err("log reference must be a single-coil image of the k-space size");
        }
    }
    let started = Instant::now();
    let tiled;
    let model: &dyn EnergyModel = match config.tiling {
        Some(tiling) => {
            tiled = Tiled { model, tiling };
            &tiled
        }
        None => &ModelRef(model),
    };
    let mut x = init_state(config, y, coils, stream)?;
    let schedule = &config.schedule;
    let steps = schedule.step_sizes();
    let mut trace = Vec::new();
    let mut iteration = 0usize;
    for (&sigma, &alpha) in schedule.sigmas().iter().zip(&steps) {
        for t in 0..schedule.inner_steps() {
            let planes = (0..x.coils())
                .map(|c| {
                    let next = langevin_step(model, &x.to_channels(c), alpha, sigma, stream).map_err(|e| match e {
                        Error::NonFinite(what) => Error::Diverged {
                            iteration,
                            reason: format!("non-finite {what}"),
                        },
                        other => other,
                    })?;
                    ComplexImage::from_channels(&next)
                })
                .collect::<Result<Vec<_>>>()?;
            x = ComplexImage::stack(&planes)?;
            if config.dc == DcPlacement::PerStep || t + 1 == schedule.inner_steps() {
                x = project(&x, y, config, coils)?;
            }
            if !x.is_finite() {
                return Err(Error::Diverged {
                    iteration,
                    reason: "non-finite reconstruction state".into(),
                });
            }
            if let Some(r) = &config.log_reference {
                trace.push(psnr(r, &combined(&x, config.mode))?);
            }
            iteration += 1;
        }
    }
    Ok(ReconReport {
        image: combined(&x, config.mode),
        trace,
        wallclock_s: started.elapsed().as_secs_f64(),
        config: config.clone(),
    })
}

/// Lets a generic `?Sized` model be used as a trait object.
struct ModelRef<'a, M: ?Sized>(&'a M);

impl<M: EnergyModel + ?Sized> EnergyModel for ModelRef<'_, M> {
    fn energy_at(&self, x: &crate::numerics::RealTensor, sigma: f64) -> Result<f64> {
        self.0.energy_at(x, sigma)
    }

    fn grad_at(&self, x: &crate::numerics::RealTensor, sigma: f64) -> Result<crate::numerics::RealTensor> {
        self.0.grad_at(x, sigma)
    }
}

/// Standard deviation of the first and last `fraction` of a trace.
pub fn trace_spread(trace: &[f64], fraction: f64) -> (f64, f64) {
    let k = ((trace.len() as f64 * fraction).round() as usize).max(2).min(trace.len());
    let std = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    (std(&trace[..k]), std(&trace[trace.len() - k..]))
}
