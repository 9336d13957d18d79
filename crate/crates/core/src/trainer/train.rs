use std::time::Instant;

use rayon::prelude::*;

use super::adam::{AdamState, DEFAULT_LEARNING_RATE};
use super::contrastive::{contrastive_grad_weighted, perturb_positives};
use crate::energy_net::{spectral_normalize_all_mut, Checkpoint, EnergyParams, NamedTensor, NetInput};
use crate::error::{arg_err, dim_err, Error, Result};
use crate::numerics::{ComplexImage, RandomStream, RealTensor};
use crate::sampler::{run_chain_clamped, NoiseSchedule, ReplayBuffer, DEFAULT_CAPACITY, DEFAULT_REUSE_PROBABILITY};

/// Stream id of the training loop; iteration `t` draws from `derive(t)`.
const TRAIN_STREAM: u64 = 0x7261_696e;

/// Checkpoint extra holding the replay buffer, oldest sample first.
const BUFFER_EXTRA: &str = "buffer.samples";

pub const LOG_HEADER: &str = "iter,mean_E_pos,mean_E_neg,gap,grad_norm,wallclock_s";

/// How the training Langevin step depends on the chain's noise level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    /// The configured step at every level.
    Fixed,
    /// `step · σ²/reference²`, matching the annealed reconstruction rule.
    NoiseScaled { reference: f64 },
}

/// Noise level(s) used to condition the negative chains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NegativeSigma {
    /// One level per batch, drawn from the perturbation amplitudes.
    PerBatch,
    /// Each negative uses the level of the positive at the same index.
    Paired,
}

/// Where negative chains start.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NegativeStart {
    /// Replay buffer entries or uniform noise.
    Buffer,
    /// The perturbed positive at the same batch index.
    Positives,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Weight of the squared-energy regularizer.
    pub beta: f64,
    pub iterations: u64,
    pub learning_rate: f64,
    /// Noise levels for positive perturbation and negative conditioning.
    pub amplitudes: Vec<f64>,
    pub negative_sigma: NegativeSigma,
    pub negative_start: NegativeStart,
    pub langevin_steps: usize,
    pub langevin_step: f64,
    pub step_rule: StepRule,
    /// Weight each pair's loss terms by `σ²` of its noise level.
    pub sigma_weighting: bool,
    /// Clamp negatives to `[−1, 1]` after every Langevin step.
    pub clamp_negatives: bool,
    /// Global gradient-norm clip applied before Adam.
    pub grad_clip: f64,
    pub buffer_capacity: usize,
    pub reuse_probability: f64,
    /// Side of the random square crops used as positives; `None` uses
    /// whole images.
    pub patch: Option<usize>,
    /// Random flips and transposes of the positives.
    pub augment: bool,
    /// Power iterations per spectral normalization after each update.
    pub sn_iterations: usize,
    /// Abort when `|mean E⁻|` exceeds this.
    pub divergence_limit: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            beta: 1.0,
            iterations: 1000,
            learning_rate: DEFAULT_LEARNING_RATE,
            amplitudes: NoiseSchedule::default().sigmas().to_vec(),
            negative_sigma: NegativeSigma::PerBatch,
            negative_start: NegativeStart::Buffer,
            langevin_steps: 10,
            langevin_step: 1e-2,
            step_rule: StepRule::Fixed,
            sigma_weighting: false,
            clamp_negatives: true,
            grad_clip: 100.0,
            buffer_capacity: DEFAULT_CAPACITY,
            reuse_probability: DEFAULT_REUSE_PROBABILITY,
            patch: None,
            augment: true,
            sn_iterations: 1,
            divergence_limit: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return arg_err("batch size must be at least 1");
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return arg_err(format!("β must be >= 0, got {}", self.beta));
        }
        if self.amplitudes.is_empty() || self.amplitudes.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return arg_err("amplitudes must be a non-empty list of finite values >= 0");
        }
        if self.langevin_steps == 0 || !(self.langevin_step.is_finite() && self.langevin_step > 0.0) {
            return arg_err("training chains need at least one step of positive size");
        }
        if let StepRule::NoiseScaled { reference } = self.step_rule {
            if !(reference.is_finite() && reference > 0.0) {
                return arg_err(format!("step reference level must be positive, got {reference}"));
            }
        }
        if !(self.grad_clip > 0.0) || !(self.divergence_limit > 0.0) {
            return arg_err("gradient clip and divergence limit must be positive");
        }
        if self.sn_iterations == 0 {
            return arg_err("spectral normalization needs at least one power iteration");
        }
        if self.patch == Some(0) {
            return arg_err("patch size must be positive");
        }
        ReplayBuffer::new(self.buffer_capacity, self.reuse_probability)?;
        Ok(())
    }

    fn step_for(&self, sigma: f64) -> f64 {
        match self.step_rule {
            StepRule::Fixed => self.langevin_step,
            StepRule::NoiseScaled { reference } => self.langevin_step * sigma * sigma / (reference * reference),
        }
    }
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iter: u64,
    pub mean_e_pos: f64,
    pub mean_e_neg: f64,
    pub gap: f64,
    pub grad_norm: f64,
    pub wallclock_s: f64,
}

impl LogRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3}",
            self.iter, self.mean_e_pos, self.mean_e_neg, self.gap, self.grad_norm, self.wallclock_s
        )
    }
}

/// Real/imaginary channels of a single-coil training image.
pub fn image_to_sample(image: &ComplexImage) -> Result<RealTensor> {
    if image.coils() != 1 {
        return dim_err(format!("training images must be single-coil, got {} coils", image.coils()));
    }
    Ok(image.to_channels(0))
}

fn crop(x: &RealTensor, patch: usize, stream: &mut RandomStream) -> Result<RealTensor> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if patch > h || patch > w {
        return dim_err(format!("patch {patch} larger than image {h}x{w}"));
    }
    let y0 = stream.next_index(h - patch + 1);
    let x0 = stream.next_index(w - patch + 1);
    let mut data = Vec::with_capacity(c * patch * patch);
    for ch in 0..c {
        for r in y0..y0 + patch {
            let base = (ch * h + r) * w + x0;
            data.extend_from_slice(&x.data()[base..base + patch]);
        }
    }
    RealTensor::from_vec(&[c, patch, patch], data)
}

/// Random vertical/horizontal flip, plus a transpose for square inputs.
fn augment(x: &RealTensor, stream: &mut RandomStream) -> RealTensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let flip_v = stream.next_unit() < 0.5;
    let flip_h = stream.next_unit() < 0.5;
    let transpose = h == w && stream.next_unit() < 0.5;
    let mut out = x.clone();
    for ch in 0..c {
        for r in 0..h {
            for q in 0..w {
                let (mut sr, mut sq) = (r, q);
                if transpose {
                    (sr, sq) = (sq, sr);
                }
                if flip_v {
                    sr = h - 1 - sr;
                }
                if flip_h {
                    sq = w - 1 - sq;
                }
                out.data_mut()[(ch * h + r) * w + q] = x.data()[(ch * h + sr) * w + sq];
            }
        }
    }
    out
}

/// Stateful training loop; one call to [`Trainer::step`] is one parameter
/// update.
pub struct Trainer {
    config: TrainConfig,
    data: Vec<RealTensor>,
    params: EnergyParams,
    adam: AdamState,
    buffer: ReplayBuffer,
    iteration: u64,
    seed: u64,
    started: Instant,
}

impl Trainer {
    pub fn new(params: EnergyParams, data: Vec<RealTensor>, config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if data.is_empty() {
            return arg_err("training set is empty");
        }
        let shape = data[0].shape().to_vec();
        if shape.len() != 3 || shape[0] != 2 || data.iter().any(|d| d.shape() != shape.as_slice()) {
            return dim_err("training samples must share one (2, H, W) shape");
        }
        if let Some(p) = config.patch {
            if p > shape[1] || p > shape[2] {
                return dim_err(format!("patch {p} larger than images {}x{}", shape[1], shape[2]));
            }
        }
        if params.arch().noise_scaled && config.amplitudes.iter().any(|&a| a <= 0.0) {
            return arg_err("a noise-scaled network needs strictly positive amplitudes");
        }
        let adam = AdamState::for_params(&params, config.learning_rate)?;
        let buffer = ReplayBuffer::new(config.buffer_capacity, config.reuse_probability)?;
        Ok(Self {
            config,
            data,
            params,
            adam,
            buffer,
            iteration: 0,
            seed,
            started: Instant::now(),
        })
    }

    /// Continues from a checkpoint written by [`Trainer::extras`],
    /// including the replay buffer contents.
    pub fn resume(checkpoint: Checkpoint, data: Vec<RealTensor>, config: TrainConfig, seed: u64) -> Result<Self> {
        let iteration = checkpoint
            .extra("meta.iteration")
            .and_then(|t| t.data.first().copied())
            .ok_or_else(|| Error::Format("checkpoint lacks 'meta.iteration'".into()))?;
        let lens: Vec<usize> = checkpoint.params.tensors().iter().map(Vec::len).collect();
        let mut adam = AdamState::from_extras(&checkpoint.extras, &lens)?;
        adam.learning_rate = config.learning_rate;
        let mut t = Self::new(checkpoint.params, data, config, seed)?;
        t.adam = adam;
        t.iteration = iteration as u64;
        if let Some(stored) = checkpoint.extras.iter().find(|e| e.name == BUFFER_EXTRA) {
            t.buffer.push(unstack(stored)?)?;
        }
        Ok(t)
    }

    pub fn params(&self) -> &EnergyParams {
        &self.params
    }

    pub fn into_params(self) -> EnergyParams {
        self.params
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Trainer state to store alongside the parameters.
    pub fn extras(&self) -> Vec<NamedTensor> {
        let mut out = vec![NamedTensor::scalar("meta.iteration", self.iteration as f64)];
        out.extend(self.adam.to_extras());
        if !self.buffer.is_empty() {
            out.push(stack(BUFFER_EXTRA, self.buffer.entries()));
        }
        out
    }

    fn positives(&self, stream: &mut RandomStream) -> Result<Vec<RealTensor>> {
        (0..self.config.batch_size)
            .map(|_| {
                let mut x = self.data[stream.next_index(self.data.len())].clone();
                if let Some(p) = self.config.patch {
                    x = crop(&x, p, stream)?;
                }
                if self.config.augment {
                    x = augment(&x, stream);
                }
                Ok(x)
            })
            .collect()
    }

    /// One update: perturbed positives, buffered Langevin negatives,
    /// contrastive gradient, clipping, Adam and spectral normalization.
    pub fn step(&mut self) -> Result<LogRow> {
        let cfg = &self.config;
        let mut stream = RandomStream::new(self.seed, TRAIN_STREAM).derive(self.iteration);
        let clean = self.positives(&mut stream)?;
        let (pos, labels) = perturb_positives(&clean, &cfg.amplitudes, &mut stream)?;
        let neg_sigmas = match cfg.negative_sigma {
            NegativeSigma::PerBatch => vec![cfg.amplitudes[stream.next_index(cfg.amplitudes.len())]; cfg.batch_size],
            NegativeSigma::Paired => labels.clone(),
        };
        let starts = match cfg.negative_start {
            NegativeStart::Buffer => self.buffer.init_negatives(cfg.batch_size, pos[0].shape(), &mut stream)?,
            NegativeStart::Positives => pos.clone(),
        };
        let clamp = cfg.clamp_negatives.then_some((-1.0, 1.0));
        let params = &self.params;
        let negs: Vec<RealTensor> = starts
            .par_iter()
            .zip(&neg_sigmas)
            .enumerate()
            .map(|(n, (x0, &s))| {
                let mut chain = stream.derive(n as u64);
                run_chain_clamped(params, x0, cfg.langevin_steps, cfg.step_for(s), s, clamp, &mut chain)
            })
            .collect::<Result<_>>()
            .map_err(|e| match e {
                Error::Diverged { reason, .. } => Error::Diverged {
                    iteration: self.iteration as usize,
                    reason: format!("negative chain: {reason}"),
                },
                other => other,
            })?;
        let pos_in: Vec<NetInput> = pos.into_iter().zip(&labels).map(|(x, &s)| NetInput::new(x, s)).collect();
        let neg_in: Vec<NetInput> = negs.iter().zip(&neg_sigmas).map(|(x, &s)| NetInput::new(x.clone(), s)).collect();
        let weights: Option<Vec<f64>> = cfg.sigma_weighting.then(|| {
            labels.iter().zip(&neg_sigmas).map(|(a, b)| a.max(*b) * a.max(*b)).collect()
        });
        let (mut grads, stats) = contrastive_grad_weighted(params, &pos_in, &neg_in, cfg.beta, weights.as_deref())?;
        if !(stats.mean_neg.abs() <= cfg.divergence_limit) {
            return Err(Error::Diverged {
                iteration: self.iteration as usize,
                reason: format!("mean negative energy {} beyond {}", stats.mean_neg, cfg.divergence_limit),
            });
        }
        let grad_norm = grads.norm();
        if grad_norm > cfg.grad_clip {
            grads.scale(cfg.grad_clip / grad_norm);
        }
        self.adam.update(&mut self.params, &grads)?;
        spectral_normalize_all_mut(&mut self.params, self.config.sn_iterations)?;
        if cfg.negative_start == NegativeStart::Buffer {
            self.buffer.push(negs)?;
        }
        let row = LogRow {
            iter: self.iteration,
            mean_e_pos: stats.mean_pos,
            mean_e_neg: stats.mean_neg,
            gap: stats.gap,
            grad_norm,
            wallclock_s: self.started.elapsed().as_secs_f64(),
        };
        self.iteration += 1;
        Ok(row)
    }

    /// Runs until `config.iterations` updates have been made in total,
    /// handing each log row to `on_row`.
    pub fn run(&mut self, mut on_row: impl FnMut(&LogRow) -> Result<()>) -> Result<()> {
        while self.iteration < self.config.iterations {
            let row = self.step()?;
            on_row(&row)?;
        }
        Ok(())
    }
}

fn stack<'a>(name: &str, samples: impl Iterator<Item = &'a RealTensor>) -> NamedTensor {
    let mut shape = vec![0];
    let mut data = Vec::new();
    for s in samples {
        if shape.len() == 1 {
            shape.extend_from_slice(s.shape());
        }
        shape[0] += 1;
        data.extend_from_slice(s.data());
    }
    NamedTensor { name: name.into(), shape, data }
}

fn unstack(t: &NamedTensor) -> Result<Vec<RealTensor>> {
    if t.shape.len() < 2 {
        return Err(Error::Format(format!("'{}' must have a leading sample axis", t.name)));
    }
    let inner = &t.shape[1..];
    let size: usize = inner.iter().product();
    if size == 0 || t.data.len() != t.shape[0] * size {
        return Err(Error::Format(format!("'{}' has {} values for shape {:?}", t.name, t.data.len(), t.shape)));
    }
    t.data.chunks(size).map(|c| RealTensor::from_vec(inner, c.to_vec())).collect()
}
