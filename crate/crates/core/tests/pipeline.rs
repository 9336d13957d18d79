use ebmrec_core::energy_net::{load_checkpoint, save_checkpoint, Architecture, Checkpoint, EnergyParams};
use ebmrec_core::io::{decode_cimg, encode_cimg, load_cimg, save_cimg};
use ebmrec_core::kspace::{dc_project_single, forward, make_mask, zero_filled, MaskPattern, SamplingMask};
use ebmrec_core::metrics::{evaluate, PSNR_CAP};
use ebmrec_core::numerics::{fft2, ifft2, Complex64};
use ebmrec_core::phantom::{make_dataset, make_phantom, PhantomSpec};
use ebmrec_core::recon::{reconstruct, InitKind, ReconConfig};
use ebmrec_core::sampler::NoiseSchedule;
use ebmrec_core::trainer::{image_to_sample, NegativeStart, TrainConfig, Trainer};
use ebmrec_core::{ComplexImage, RandomStream};
use proptest::prelude::*;

fn small_spec() -> PhantomSpec {
    PhantomSpec { height: 16, width: 16, ..PhantomSpec::default() }
}

fn tiny_arch() -> Architecture {
    Architecture::with_widths(&[4, 8])
}

fn short_schedule() -> NoiseSchedule {
    NoiseSchedule::geometric(0.3, 0.02, 3, 1e-4, 4).unwrap()
}

fn train(iterations: u64, start: NegativeStart) -> Trainer {
    let data = make_dataset(&small_spec(), 12, &mut RandomStream::new(1, 0)).unwrap();
    let samples = data.train_images().map(|x| image_to_sample(x).unwrap()).collect();
    let params = EnergyParams::init(&tiny_arch(), &mut RandomStream::new(1, 1), 10).unwrap();
    let cfg = TrainConfig {
        batch_size: 4,
        beta: 1e-3,
        iterations,
        amplitudes: vec![0.3, 0.1, 0.03],
        negative_start: start,
        buffer_capacity: 16,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(params, samples, cfg, 5).unwrap();
    t.run(|_| Ok(())).unwrap();
    t
}

#[test]
fn checkpoint_file_resumes_training_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ebmw");
    let full = train(4, NegativeStart::Buffer);

    let half = train(2, NegativeStart::Buffer);
    save_checkpoint(&path, half.params(), &half.extras()).unwrap();
    let ckpt = load_checkpoint(&path).unwrap();
    assert_eq!(&ckpt.params, half.params());

    let data = make_dataset(&small_spec(), 12, &mut RandomStream::new(1, 0)).unwrap();
    let samples = data.train_images().map(|x| image_to_sample(x).unwrap()).collect();
    let cfg = TrainConfig { iterations: 4, ..full.config().clone() };
    let mut resumed = Trainer::resume(Checkpoint { params: ckpt.params, extras: ckpt.extras }, samples, cfg, 5).unwrap();
    resumed.run(|_| Ok(())).unwrap();
    assert_eq!(resumed.params(), full.params());
}

#[test]
fn trained_prior_with_full_mask_and_hard_dc_returns_the_reference() {
    let params = train(3, NegativeStart::Positives).into_params();
    let x = make_phantom(&small_spec(), &mut RandomStream::new(2, 0)).unwrap();
    let mask = SamplingMask::full(16, 16, MaskPattern::Random2d).unwrap();
    let y = forward(&x, &mask, None, 0.0, &mut RandomStream::new(2, 1)).unwrap();
    let cfg = ReconConfig { lambda: 0.0, schedule: short_schedule(), log_reference: Some(x.clone()), ..ReconConfig::default() };
    let report = reconstruct(&y, &params, &cfg, None, &mut RandomStream::new(2, 2)).unwrap();
    let err = report.image.data().iter().zip(x.data()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-6, "max error {err}");
    assert_eq!(report.trace.len(), 3 * 4);
    assert_eq!(evaluate(&report.image, &x).unwrap().psnr_db, PSNR_CAP);
}

#[test]
fn reconstruction_is_deterministic_for_both_inits() {
    let params = train(2, NegativeStart::Positives).into_params();
    let x = make_phantom(&small_spec(), &mut RandomStream::new(3, 0)).unwrap();
    let mask = make_mask(MaskPattern::PseudoRadial, 3.0, 16, 16, 0.04, &mut RandomStream::new(3, 1)).unwrap();
    let y = forward(&x, &mask, None, 0.0, &mut RandomStream::new(3, 2)).unwrap();
    for init in [InitKind::UniformNoise, InitKind::ZeroFilled] {
        let cfg = ReconConfig { init, schedule: short_schedule(), ..ReconConfig::default() };
        let a = reconstruct(&y, &params, &cfg, None, &mut RandomStream::new(3, 3)).unwrap();
        let b = reconstruct(&y, &params, &cfg, None, &mut RandomStream::new(3, 3)).unwrap();
        assert_eq!(a.image, b.image);
        assert!(a.image.is_finite());
    }
}

#[test]
fn cimg_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let x = make_phantom(&small_spec(), &mut RandomStream::new(4, 0)).unwrap();
    let path = dir.path().join("x.cimg");
    save_cimg(&path, &x).unwrap();
    assert_eq!(load_cimg(&path).unwrap(), x);
}

fn image(h: usize, w: usize, values: &[(f64, f64)]) -> ComplexImage {
    let data = (0..h * w).map(|i| Complex64::new(values[i % values.len()].0, values[i % values.len()].1)).collect();
    ComplexImage::from_vec(h, w, 1, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hard_dc_restores_measured_coefficients(
        values in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 64),
        prior in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 64),
        seed in 0u64..1000,
        r in 1.5f64..4.0,
    ) {
        let x = image(8, 8, &values);
        let mask = make_mask(MaskPattern::Random2d, r, 8, 8, 0.1, &mut RandomStream::new(seed, 0)).unwrap();
        let y = forward(&x, &mask, None, 0.0, &mut RandomStream::new(seed, 1)).unwrap();
        let out = fft2(&dc_project_single(&image(8, 8, &prior), &y, 0.0).unwrap()).unwrap();
        let prior_k = fft2(&image(8, 8, &prior)).unwrap();
        for (i, &keep) in mask.keep().iter().enumerate() {
            let want = if keep { y.data.data()[i] } else { prior_k.data()[i] };
            prop_assert!((out.data()[i] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_filled_is_the_inverse_of_full_sampling(values in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 64)) {
        let x = image(8, 8, &values);
        let y = forward(&x, &SamplingMask::full(8, 8, MaskPattern::Cartesian1d).unwrap(), None, 0.0, &mut RandomStream::new(0, 0)).unwrap();
        let back = zero_filled(&y, None).unwrap();
        let err = back.data().iter().zip(x.data()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12);
        let round = ifft2(&fft2(&x).unwrap()).unwrap();
        prop_assert!((round.norm() - x.norm()).abs() < 1e-12);
    }

    #[test]
    fn cimg_encoding_round_trips(values in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40), h in 4usize..9, w in 4usize..9) {
        let x = image(h, w, &values);
        prop_assert_eq!(decode_cimg(&encode_cimg(&x)).unwrap(), x);
    }
}
