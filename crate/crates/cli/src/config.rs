//! Experiment configuration: a sectioned TOML file whose every key has a
//! default. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ebmrec_core::energy_net::{Architecture, Conditioning, Stage};
use ebmrec_core::kspace::MaskPattern;
use ebmrec_core::phantom::{PhantomKind, PhantomSpec};
use ebmrec_core::recon::{DcPlacement, InitKind, ReconConfig, ReconMode};
use ebmrec_core::sampler::{NoiseSchedule, Tiling};
use ebmrec_core::trainer::{NegativeSigma, NegativeStart, StepRule, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Global seed; every command derives its streams from it.
    pub seed: u64,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub sample: SampleSection,
    pub recon: ReconSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            sample: SampleSection::default(),
            recon: ReconSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// "ellipses" or "blobs".
    pub kind: String,
    pub height: usize,
    pub width: usize,
    /// Number of phantoms; a tenth (at least one) is held out for testing.
    pub count: usize,
    pub shapes_min: usize,
    pub shapes_max: usize,
    pub intensity_min: f64,
    pub intensity_max: f64,
    pub phase_amplitude: f64,
    /// Dataset manifest written by `phantom`. When empty, commands that
    /// need data generate it in memory from the fields above.
    pub manifest: String,
}

impl Default for DataSection {
    fn default() -> Self {
        let p = PhantomSpec::default();
        Self {
            kind: p.kind.to_string(),
            height: p.height,
            width: p.width,
            count: 222,
            shapes_min: p.count.0,
            shapes_max: p.count.1,
            intensity_min: p.intensity.0,
            intensity_max: p.intensity.1,
            phase_amplitude: p.phase_amplitude,
            manifest: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Channel width per stage; every stage after the first halves the
    /// resolution.
    pub widths: Vec<usize>,
    pub blocks_per_stage: usize,
    /// "noise_channel" or "unconditional".
    pub conditioning: String,
    /// Energy is the network output divided by σ².
    pub noise_scaled: bool,
    /// Power iterations used for the initial spectral normalization.
    pub init_sn_iterations: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            widths: vec![8, 16, 16],
            blocks_per_stage: 1,
            conditioning: "noise_channel".into(),
            noise_scaled: true,
            init_sn_iterations: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub beta: f64,
    pub iterations: u64,
    pub learning_rate: f64,
    pub amplitudes: Vec<f64>,
    /// "paired" or "per_batch".
    pub negative_sigma: String,
    /// "positives" or "buffer".
    pub negative_start: String,
    pub langevin_steps: usize,
    pub langevin_step: f64,
    /// Scale the step by σ²/step_reference²; 0 keeps it fixed.
    pub step_reference: f64,
    pub sigma_weighting: bool,
    pub clamp_negatives: bool,
    pub grad_clip: f64,
    /// Side of random training crops; 0 trains on whole images.
    pub patch: usize,
    pub augment: bool,
    pub sn_iterations: usize,
    pub divergence_limit: f64,
    /// Save the checkpoint every this many iterations; 0 only at the end.
    pub checkpoint_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            batch_size: 16,
            beta: 1e-4,
            iterations: 2000,
            learning_rate: 3e-4,
            amplitudes: vec![0.5, 0.3, 0.2, 0.1, 0.05, 0.03, 0.02, 0.01],
            negative_sigma: "paired".into(),
            negative_start: "buffer".into(),
            langevin_steps: 10,
            langevin_step: 1e-4,
            step_reference: 0.01,
            sigma_weighting: true,
            clamp_negatives: false,
            grad_clip: 100.0,
            patch: 16,
            augment: true,
            sn_iterations: 1,
            divergence_limit: 1e6,
            checkpoint_every: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub sigma_first: f64,
    pub sigma_last: f64,
    pub levels: usize,
    /// Base step ε of the annealing rule.
    pub eps: f64,
    /// Langevin steps per noise level.
    pub steps: usize,
    pub buffer_capacity: usize,
    pub reuse_probability: f64,
    /// Number of images drawn by `sample`.
    pub count: usize,
}

impl Default for SampleSection {
    fn default() -> Self {
        let s = NoiseSchedule::default();
        Self {
            sigma_first: s.sigmas()[0],
            sigma_last: s.last_sigma(),
            levels: s.levels(),
            eps: 1e-4,
            steps: s.inner_steps(),
            buffer_capacity: 10_000,
            reuse_probability: 0.5,
            count: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSection {
    /// "single_coil", "parallel_sens" or "calib_free".
    pub mode: String,
    pub lambda: f64,
    /// "uniform_noise" or "zero_filled".
    pub init: String,
    /// "per_step" or "per_level".
    pub dc: String,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Tile side for patch-wise prior evaluation; 0 evaluates whole images.
    pub tile: usize,
    pub tile_overlap: usize,
    pub pattern: String,
    pub acceleration: f64,
    pub center_fraction: f64,
    /// Simulated receive coils for the multi-coil modes.
    pub coils: usize,
    pub noise_std: f64,
    /// Held-out images reconstructed in batch mode; 0 means all.
    pub images: usize,
}

impl Default for ReconSection {
    fn default() -> Self {
        Self {
            mode: ReconMode::SingleCoil.to_string(),
            lambda: 0.1,
            init: InitKind::UniformNoise.to_string(),
            dc: DcPlacement::PerStep.to_string(),
            cg_tol: 1e-8,
            cg_max_iter: 200,
            tile: 0,
            tile_overlap: 8,
            pattern: MaskPattern::PseudoRadial.to_string(),
            acceleration: 3.0,
            center_fraction: 0.04,
            coils: 1,
            noise_std: 0.0,
            images: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    /// Write magnitude and error-map PNGs next to reconstructions.
    pub png: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            png: true,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.output.dir)
    }

    pub fn phantom_spec(&self) -> Result<PhantomSpec> {
        let d = &self.data;
        let spec = PhantomSpec {
            kind: d.kind.parse::<PhantomKind>()?,
            height: d.height,
            width: d.width,
            count: (d.shapes_min, d.shapes_max),
            intensity: (d.intensity_min, d.intensity_max),
            phase_amplitude: d.phase_amplitude,
            seed: self.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let m = &self.model;
        if m.widths.is_empty() || m.blocks_per_stage == 0 {
            bail!("model needs at least one stage with at least one block");
        }
        let conditioning = match m.conditioning.as_str() {
            "noise_channel" => Conditioning::NoiseChannel,
            "unconditional" => Conditioning::Unconditional,
            other => bail!("unknown conditioning '{other}'"),
        };
        let stages = m
            .widths
            .iter()
            .enumerate()
            .map(|(i, &width)| Stage {
                width,
                blocks: m.blocks_per_stage,
                downsample: i > 0,
            })
            .collect();
        let arch = Architecture {
            conditioning,
            noise_scaled: m.noise_scaled,
            stem_width: m.widths[0],
            stages,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let cfg = TrainConfig {
            batch_size: t.batch_size,
            beta: t.beta,
            iterations: t.iterations,
            learning_rate: t.learning_rate,
            amplitudes: t.amplitudes.clone(),
            negative_sigma: match t.negative_sigma.as_str() {
                "paired" => NegativeSigma::Paired,
                "per_batch" => NegativeSigma::PerBatch,
                other => bail!("unknown negative_sigma '{other}'"),
            },
            negative_start: match t.negative_start.as_str() {
                "positives" => NegativeStart::Positives,
                "buffer" => NegativeStart::Buffer,
                other => bail!("unknown negative_start '{other}'"),
            },
            langevin_steps: t.langevin_steps,
            langevin_step: t.langevin_step,
            step_rule: if t.step_reference > 0.0 {
                StepRule::NoiseScaled {
                    reference: t.step_reference,
                }
            } else {
                StepRule::Fixed
            },
            sigma_weighting: t.sigma_weighting,
            clamp_negatives: t.clamp_negatives,
            grad_clip: t.grad_clip,
            buffer_capacity: self.sample.buffer_capacity,
            reuse_probability: self.sample.reuse_probability,
            patch: (t.patch > 0).then_some(t.patch),
            augment: t.augment,
            sn_iterations: t.sn_iterations,
            divergence_limit: t.divergence_limit,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        let s = &self.sample;
        Ok(NoiseSchedule::geometric(s.sigma_first, s.sigma_last, s.levels, s.eps, s.steps)?)
    }

    pub fn mask_pattern(&self) -> Result<MaskPattern> {
        Ok(self.recon.pattern.parse()?)
    }

    pub fn recon_config(&self) -> Result<ReconConfig> {
        let r = &self.recon;
        Ok(ReconConfig {
            mode: r.mode.parse()?,
            lambda: r.lambda,
            schedule: self.schedule()?,
            init: r.init.parse()?,
            dc: r.dc.parse()?,
            cg_tol: r.cg_tol,
            cg_max_iter: r.cg_max_iter,
            tiling: (r.tile > 0).then_some(Tiling {
                tile: r.tile,
                overlap: r.tile_overlap,
            }),
            log_reference: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("colour = 1").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[recon]\nlamda = 0.5").is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg: ExperimentConfig = toml::from_str("seed = 9\n[recon]\nlambda = 0.5").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.recon.lambda, 0.5);
        assert_eq!(cfg.recon.acceleration, 3.0);
        assert_eq!(cfg.train, TrainSection::default());
    }

    #[test]
    fn defaults_build_valid_core_configs() {
        let cfg = ExperimentConfig::default();
        cfg.phantom_spec().unwrap();
        cfg.architecture().unwrap();
        cfg.train_config().unwrap();
        cfg.recon_config().unwrap();
        cfg.mask_pattern().unwrap();
    }

    #[test]
    fn bad_enum_values_are_reported() {
        let mut cfg = ExperimentConfig::default();
        cfg.recon.init = "warm".into();
        assert!(cfg.recon_config().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.train.negative_sigma = "sometimes".into();
        assert!(cfg.train_config().is_err());
    }
}
