use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use ebmrec_core::energy_net::{load_checkpoint, save_checkpoint, EnergyParams};
use ebmrec_core::io::{load_cimg, save_cimg};
use ebmrec_core::kspace::{forward, make_mask, KSpaceMeasurement, SamplingMask};
use ebmrec_core::metrics::evaluate;
use ebmrec_core::numerics::uniform;
use ebmrec_core::phantom::{make_dataset, simulate_sensitivities, Dataset};
use ebmrec_core::recon::{reconstruct, zero_filled_baseline, ReconMode};
use ebmrec_core::sampler::run_chain;
use ebmrec_core::trainer::{image_to_sample, Trainer, LOG_HEADER};
use ebmrec_core::{ComplexImage, RandomStream};

use crate::config::ExperimentConfig;
use crate::output::{
    csv, ensure_dir, manifest_text, metrics_row, reference_peak, write_error_png, write_magnitude_png, write_text,
    Manifest, ManifestEntry, METRICS_HEADER,
};

const DATA_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const MASK_STREAM: u64 = 3;
const MEASURE_STREAM: u64 = 4;
const RECON_STREAM: u64 = 5;
const SAMPLE_STREAM: u64 = 6;

pub const CHECKPOINT_FILE: &str = "checkpoint.ebmw";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const MASK_FILE: &str = "mask.mask";

/// Creates the output directory and echoes the effective config into it.
fn prepare(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    write_text(&out.join("config.toml"), &cfg.to_toml()?)?;
    Ok(out)
}

fn generate_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let spec = cfg.phantom_spec()?;
    Ok(make_dataset(&spec, cfg.data.count, &mut RandomStream::new(cfg.seed, DATA_STREAM))?)
}

fn image_id(i: usize) -> String {
    format!("img{i:04}")
}

pub fn phantom(cfg: &ExperimentConfig) -> Result<()> {
    let out = prepare(cfg)?;
    let data = generate_dataset(cfg)?;
    let img_dir = out.join("images");
    ensure_dir(&img_dir)?;
    let mut entries = Vec::with_capacity(data.images.len());
    for (split, indices) in [("train", &data.train), ("test", &data.test)] {
        for &i in indices {
            let file = format!("images/{}.cimg", image_id(i));
            save_cimg(&out.join(&file), &data.images[i]).with_context(|| format!("writing {file}"))?;
            entries.push(ManifestEntry {
                id: image_id(i),
                split: split.into(),
                file,
            });
        }
    }
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    write_text(&out.join(MANIFEST_FILE), &manifest_text(&entries))?;
    println!(
        "wrote {} phantoms ({} train, {} test) to {}",
        entries.len(),
        data.train.len(),
        data.test.len(),
        out.display()
    );
    Ok(())
}

fn build_mask(cfg: &ExperimentConfig) -> Result<SamplingMask> {
    let r = &cfg.recon;
    Ok(make_mask(
        cfg.mask_pattern()?,
        r.acceleration,
        cfg.data.height,
        cfg.data.width,
        r.center_fraction,
        &mut RandomStream::new(cfg.seed, MASK_STREAM),
    )?)
}

pub fn mask(cfg: &ExperimentConfig) -> Result<()> {
    let out = prepare(cfg)?;
    let m = build_mask(cfg)?;
    let path = out.join(MASK_FILE);
    m.save(&path).with_context(|| format!("writing {}", path.display()))?;
    println!(
        "pattern={} R={} kept={}/{} fraction={:.4} target={:.4}",
        m.pattern(),
        m.acceleration(),
        m.kept_count(),
        m.height() * m.width(),
        m.kept_fraction(),
        1.0 / m.acceleration()
    );
    Ok(())
}

fn manifest_path(cfg: &ExperimentConfig, flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| (!cfg.data.manifest.is_empty()).then(|| PathBuf::from(&cfg.data.manifest)))
}

/// `(id, image)` pairs of one split, from a manifest or generated in memory.
fn split_images(cfg: &ExperimentConfig, manifest: Option<&Path>, split: &str) -> Result<Vec<(String, ComplexImage)>> {
    match manifest_path(cfg, manifest) {
        Some(path) => {
            let m = Manifest::read(&path)?;
            m.split(split).map(|e| Ok((e.id.clone(), m.load(e)?))).collect()
        }
        None => {
            let data = generate_dataset(cfg)?;
            let idx = if split == "train" { &data.train } else { &data.test };
            Ok(idx.iter().map(|&i| (image_id(i), data.images[i].clone())).collect())
        }
    }
}

/// Log rows of an earlier run that precede `iteration`.
fn previous_log(path: &Path, iteration: u64) -> Result<Vec<String>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        bail!("{}: not a training log", path.display());
    }
    Ok(lines
        .filter(|l| {
            l.split(',')
                .next()
                .and_then(|v| v.parse::<u64>().ok())
                .is_some_and(|it| it < iteration)
        })
        .map(str::to_owned)
        .collect())
}

pub fn train(cfg: &ExperimentConfig, manifest: Option<&Path>, resume: Option<&Path>) -> Result<()> {
    let out = prepare(cfg)?;
    let train_cfg = cfg.train_config()?;
    let data: Vec<_> = split_images(cfg, manifest, "train")?
        .iter()
        .map(|(_, img)| image_to_sample(img))
        .collect::<ebmrec_core::Result<_>>()?;
    let log_path = out.join(TRAIN_LOG_FILE);
    let ckpt_path = out.join(CHECKPOINT_FILE);
    let (mut trainer, mut rows) = match resume {
        Some(path) => {
            let ckpt = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
            let t = Trainer::resume(ckpt, data, train_cfg, cfg.seed)?;
            let rows = previous_log(&log_path, t.iteration())?;
            (t, rows)
        }
        None => {
            let arch = cfg.architecture()?;
            let params = EnergyParams::init(
                &arch,
                &mut RandomStream::new(cfg.seed, INIT_STREAM),
                cfg.model.init_sn_iterations,
            )?;
            (Trainer::new(params, data, train_cfg, cfg.seed)?, Vec::new())
        }
    };
    let save = |t: &Trainer, rows: &[String]| -> Result<()> {
        save_checkpoint(&ckpt_path, t.params(), &t.extras())
            .with_context(|| format!("writing {}", ckpt_path.display()))?;
        write_text(&log_path, &csv(LOG_HEADER, rows))
    };
    let every = cfg.train.checkpoint_every;
    let total = cfg.train.iterations;
    while trainer.iteration() < total {
        let row = trainer.step()?;
        rows.push(row.to_csv());
        let done = trainer.iteration();
        if done % 100 == 0 || done == total {
            eprintln!("iter {done}/{total}  gap {:.4e}  |g| {:.3e}  {:.1}s", row.gap, row.grad_norm, row.wallclock_s);
        }
        if every > 0 && done % every == 0 && done < total {
            save(&trainer, &rows)?;
        }
    }
    save(&trainer, &rows)?;
    println!(
        "trained to iteration {} ({} parameters); checkpoint {}",
        trainer.iteration(),
        trainer.params().parameter_count(),
        ckpt_path.display()
    );
    Ok(())
}

/// Explicit inputs of `recon`; anything absent comes from the config.
pub struct ReconInputs<'a> {
    pub checkpoint: &'a Path,
    pub reference: Option<&'a Path>,
    pub kspace: Option<&'a Path>,
    pub mask: Option<&'a Path>,
    pub manifest: Option<&'a Path>,
}

struct Job {
    id: String,
    reference: Option<ComplexImage>,
    kspace: Option<ComplexImage>,
}

struct Outcome {
    id: String,
    metrics: Option<(f64, f64)>,
    zero_filled: Option<(f64, f64)>,
    wallclock: f64,
}

pub fn recon(cfg: &ExperimentConfig, inputs: &ReconInputs) -> Result<()> {
    let out = prepare(cfg)?;
    let ckpt = load_checkpoint(inputs.checkpoint)
        .with_context(|| format!("loading checkpoint {}", inputs.checkpoint.display()))?;
    let params = ckpt.params;
    let base = cfg.recon_config()?;
    let mask = match inputs.mask {
        Some(p) => SamplingMask::load(p).with_context(|| format!("loading mask {}", p.display()))?,
        None => build_mask(cfg)?,
    };
    let mut jobs = Vec::new();
    if let Some(k) = inputs.kspace {
        let kspace = load_cimg(k).with_context(|| format!("loading k-space {}", k.display()))?;
        let reference = inputs
            .reference
            .map(|p| load_cimg(p).with_context(|| format!("loading reference {}", p.display())))
            .transpose()?;
        jobs.push(Job { id: "img".into(), reference, kspace: Some(kspace) });
    } else if let Some(p) = inputs.reference {
        let reference = load_cimg(p).with_context(|| format!("loading reference {}", p.display()))?;
        let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "img".into());
        jobs.push(Job { id, reference: Some(reference), kspace: None });
    } else {
        let mut test = split_images(cfg, inputs.manifest, "test")?;
        if cfg.recon.images > 0 {
            test.truncate(cfg.recon.images);
        }
        jobs.extend(test.into_iter().map(|(id, img)| Job { id, reference: Some(img), kspace: None }));
    }
    if jobs.is_empty() {
        bail!("no images to reconstruct");
    }
    let n_coils = cfg.recon.coils;
    let sens = match base.mode {
        ReconMode::SingleCoil => None,
        _ => Some(simulate_sensitivities(n_coils, mask.height(), mask.width())?),
    };
    let outcomes: Vec<Outcome> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, job)| -> Result<Outcome> {
            let y = match (&job.kspace, &job.reference) {
                (Some(k), _) => KSpaceMeasurement::new(mask.clone(), k.clone(), cfg.recon.noise_std)?,
                (None, Some(x)) => forward(
                    x,
                    &mask,
                    sens.as_ref(),
                    cfg.recon.noise_std,
                    &mut RandomStream::new(cfg.seed, MEASURE_STREAM).derive(i as u64),
                )?,
                (None, None) => unreachable!("jobs carry k-space or a reference"),
            };
            let coils = if base.mode == ReconMode::ParallelSens { sens.as_ref() } else { None };
            let mut rc = base.clone();
            rc.log_reference = job.reference.clone();
            let report = reconstruct(&y, &params, &rc, coils, &mut RandomStream::new(cfg.seed, RECON_STREAM).derive(i as u64))?;
            let zf = zero_filled_baseline(&y, base.mode, coils)?;
            save_cimg(&out.join(format!("recon_{}.cimg", job.id)), &report.image)?;
            let mut outcome = Outcome { id: job.id.clone(), metrics: None, zero_filled: None, wallclock: report.wallclock_s };
            if let Some(x) = &job.reference {
                let trace: Vec<String> = report.trace.iter().enumerate().map(|(t, p)| format!("{},{p:.6}", t + 1)).collect();
                write_text(&out.join(format!("trace_{}.csv", job.id)), &csv("iter,psnr_db", &trace))?;
                let m = evaluate(&report.image, x)?;
                let z = evaluate(&zf, x)?;
                outcome.metrics = Some((m.psnr_db, m.ssim));
                outcome.zero_filled = Some((z.psnr_db, z.ssim));
                if cfg.output.png {
                    write_magnitude_png(&out.join(format!("recon_{}.png", job.id)), &report.image, reference_peak(x))?;
                    write_error_png(&out.join(format!("error_{}.png", job.id)), &report.image, x)?;
                }
            } else if cfg.output.png {
                write_magnitude_png(&out.join(format!("recon_{}.png", job.id)), &report.image, reference_peak(&report.image))?;
            }
            Ok(outcome)
        })
        .collect::<Result<_>>()?;

    let mask_name = mask.pattern().to_string();
    let r = format!("{}", mask.acceleration());
    let rows = |pick: fn(&Outcome) -> Option<(f64, f64)>| -> Vec<String> {
        outcomes
            .iter()
            .filter_map(|o| pick(o).map(|(p, s)| metrics_row(&o.id, &mask_name, &r, p, s)))
            .collect()
    };
    let ebm_rows = rows(|o| o.metrics);
    if !ebm_rows.is_empty() {
        write_text(&out.join("metrics.csv"), &csv(METRICS_HEADER, &ebm_rows))?;
        write_text(&out.join("metrics_zero_filled.csv"), &csv(METRICS_HEADER, &rows(|o| o.zero_filled)))?;
    }
    let timing: Vec<String> = outcomes.iter().map(|o| format!("{},{:.3}", o.id, o.wallclock)).collect();
    write_text(&out.join("timing.csv"), &csv("image_id,wallclock_s", &timing))?;

    let scored: Vec<_> = outcomes.iter().filter_map(|o| Some((o.metrics?, o.zero_filled?))).collect();
    if scored.is_empty() {
        println!("reconstructed {} image(s) into {}", outcomes.len(), out.display());
    } else {
        let n = scored.len() as f64;
        let mean = |f: fn(&((f64, f64), (f64, f64))) -> f64| scored.iter().map(f).sum::<f64>() / n;
        println!(
            "{} image(s), {} R={}: EBM {:.2} dB / {:.4}  zero-filled {:.2} dB / {:.4}",
            scored.len(),
            mask_name,
            r,
            mean(|s| s.0 .0),
            mean(|s| s.0 .1),
            mean(|s| s.1 .0),
            mean(|s| s.1 .1)
        );
    }
    Ok(())
}

/// Inputs of `eval`: a single pair, or every test entry of a manifest
/// matched with `recon_<id>.cimg` under `results`.
pub struct EvalInputs<'a> {
    pub result: Option<&'a Path>,
    pub reference: Option<&'a Path>,
    pub results: Option<&'a Path>,
    pub manifest: Option<&'a Path>,
    pub mask: Option<&'a Path>,
}

pub fn eval(cfg: &ExperimentConfig, inputs: &EvalInputs) -> Result<()> {
    let out = prepare(cfg)?;
    let (mask_name, r) = match inputs.mask {
        Some(p) => {
            let m = SamplingMask::load(p).with_context(|| format!("loading mask {}", p.display()))?;
            (m.pattern().to_string(), format!("{}", m.acceleration()))
        }
        None => ("none".to_string(), "1".to_string()),
    };
    let load = |p: &Path| load_cimg(p).with_context(|| format!("loading {}", p.display()));
    let pairs: Vec<(String, PathBuf, PathBuf)> = match (inputs.result, inputs.reference) {
        (Some(res), Some(reference)) => {
            let id = res.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            vec![(id, res.to_path_buf(), reference.to_path_buf())]
        }
        (None, None) => {
            let Some(path) = manifest_path(cfg, inputs.manifest) else {
                bail!("eval needs RESULT and REFERENCE, or --data with --results");
            };
            let Some(results) = inputs.results else {
                bail!("batch eval needs --results");
            };
            let m = Manifest::read(&path)?;
            m.split("test")
                .map(|e| (e.id.clone(), results.join(format!("recon_{}.cimg", e.id)), m.dir.join(&e.file)))
                .collect()
        }
        _ => bail!("eval needs both RESULT and REFERENCE"),
    };
    let rows: Vec<String> = pairs
        .par_iter()
        .map(|(id, res, reference)| {
            let m = evaluate(&load(res)?, &load(reference)?)?;
            Ok(metrics_row(id, &mask_name, &r, m.psnr_db, m.ssim))
        })
        .collect::<Result<_>>()?;
    let text = csv(METRICS_HEADER, &rows);
    write_text(&out.join("metrics_eval.csv"), &text)?;
    print!("{text}");
    Ok(())
}

/// Unconditional annealed Langevin samples from a checkpoint.
pub fn sample(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<()> {
    let out = prepare(cfg)?;
    let params = load_checkpoint(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?
        .params;
    let schedule = cfg.schedule()?;
    let steps = schedule.step_sizes();
    let shape = [2, cfg.data.height, cfg.data.width];
    let samples: Vec<ComplexImage> = (0..cfg.sample.count)
        .into_par_iter()
        .map(|k| -> Result<ComplexImage> {
            let mut stream = RandomStream::new(cfg.seed, SAMPLE_STREAM).derive(k as u64);
            let mut x = uniform(&mut stream, &shape, -1.0, 1.0)?;
            for (&sigma, &step) in schedule.sigmas().iter().zip(&steps) {
                x = run_chain(&params, &x, schedule.inner_steps(), step, sigma, &mut stream)?;
            }
            Ok(ComplexImage::from_channels(&x)?)
        })
        .collect::<Result<_>>()?;
    for (k, s) in samples.iter().enumerate() {
        save_cimg(&out.join(format!("sample_{k:03}.cimg")), s)?;
        if cfg.output.png {
            write_magnitude_png(&out.join(format!("sample_{k:03}.png")), s, reference_peak(s))?;
        }
    }
    println!("wrote {} sample(s) to {}", samples.len(), out.display());
    Ok(())
}
