//! Synthetic complex-valued phantoms and simulated coil sensitivities.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{arg_err, Result};
use crate::kspace::CoilSensitivities;
use crate::numerics::{ComplexImage, RandomStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhantomKind {
    /// Anti-aliased ellipses inside a head-like outer ellipse.
    Ellipses,
    /// Sums of isotropic Gaussian blobs.
    Blobs,
}

impl std::str::FromStr for PhantomKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ellipses" => Ok(PhantomKind::Ellipses),
            "blobs" => Ok(PhantomKind::Blobs),
            _ => arg_err(format!("unknown phantom kind '{s}'")),
        }
    }
}

impl std::fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PhantomKind::Ellipses => "ellipses",
            PhantomKind::Blobs => "blobs",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub height: usize,
    pub width: usize,
    /// Inclusive range of the number of shapes.
    pub count: (usize, usize),
    /// Range of shape intensities before normalization.
    pub intensity: (f64, f64),
    /// Peak absolute phase in radians.
    pub phase_amplitude: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            kind: PhantomKind::Ellipses,
            height: 64,
            width: 64,
            count: (3, 8),
            intensity: (0.1, 0.6),
            phase_amplitude: 0.5,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < 4 || self.width < 4 {
            return arg_err(format!("phantom must be at least 4x4, got {}x{}", self.height, self.width));
        }
        if self.count.0 > self.count.1 {
            return arg_err(format!("bad shape count range {:?}", self.count));
        }
        let (lo, hi) = self.intensity;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return arg_err(format!("bad intensity range {:?}", self.intensity));
        }
        if !(self.phase_amplitude.is_finite() && self.phase_amplitude >= 0.0) {
            return arg_err(format!("phase amplitude must be >= 0, got {}", self.phase_amplitude));
        }
        Ok(())
    }
}

/// Supersampling factor per axis for ellipse coverage.
const SUPERSAMPLE: usize = 4;

struct Ellipse {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    value: f64,
}

impl Ellipse {
    fn contains(&self, y: f64, x: f64) -> bool {
        let (dy, dx) = (y - self.cy, x - self.cx);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

fn range(stream: &mut RandomStream, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        stream.next_range(lo, hi)
    }
}

/// Coordinates run over `[−1, 1]` on both axes.
fn coord(i: f64, n: usize) -> f64 {
    2.0 * i / n as f64 - 1.0
}

fn ellipses(spec: &PhantomSpec, n: usize, stream: &mut RandomStream) -> Vec<f64> {
    let (h, w) = (spec.height, spec.width);
    let mut shapes = Vec::with_capacity(n + 1);
    if n > 0 {
        shapes.push(Ellipse {
            cy: range(stream, -0.05, 0.05),
            cx: range(stream, -0.05, 0.05),
            a: range(stream, 0.7, 0.9),
            b: range(stream, 0.75, 0.95),
            cos: 1.0,
            sin: 0.0,
            value: range(stream, spec.intensity.0, spec.intensity.1),
        });
    }
    for _ in 0..n.saturating_sub(1) {
        let t = range(stream, 0.0, PI);
        shapes.push(Ellipse {
            cy: range(stream, -0.5, 0.5),
            cx: range(stream, -0.5, 0.5),
            a: range(stream, 0.08, 0.35),
            b: range(stream, 0.08, 0.35),
            cos: t.cos(),
            sin: t.sin(),
            value: range(stream, spec.intensity.0, spec.intensity.1) * if stream.next_unit() < 0.3 { -0.5 } else { 1.0 },
        });
    }
    let sub = SUPERSAMPLE as f64;
    let mut img = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for i in 0..SUPERSAMPLE {
                for j in 0..SUPERSAMPLE {
                    let y = coord(r as f64 + (i as f64 + 0.5) / sub, h);
                    let x = coord(c as f64 + (j as f64 + 0.5) / sub, w);
                    acc += shapes.iter().filter(|e| e.contains(y, x)).map(|e| e.value).sum::<f64>();
                }
            }
            img[r * w + c] = (acc / (sub * sub)).max(0.0);
        }
    }
    img
}

fn blobs(spec: &PhantomSpec, n: usize, stream: &mut RandomStream) -> Vec<f64> {
    let (h, w) = (spec.height, spec.width);
    let params: Vec<(f64, f64, f64, f64)> = (0..n)
        .map(|_| {
            (
                range(stream, -0.6, 0.6),
                range(stream, -0.6, 0.6),
                range(stream, 0.05, 0.3),
                range(stream, spec.intensity.0, spec.intensity.1),
            )
        })
        .collect();
    let mut img = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let (y, x) = (coord(r as f64 + 0.5, h), coord(c as f64 + 0.5, w));
            img[r * w + c] = params
                .iter()
                .map(|&(cy, cx, s, v)| v * (-((y - cy).powi(2) + (x - cx).powi(2)) / (2.0 * s * s)).exp())
                .sum::<f64>()
                .abs();
        }
    }
    img
}

/// Smooth phase map built from the lowest spatial frequencies.
fn smooth_phase(h: usize, w: usize, amplitude: f64, stream: &mut RandomStream) -> Vec<f64> {
    let terms: Vec<(f64, f64, f64, f64)> = (0..=2)
        .flat_map(|ky| (0..=2).map(move |kx| (ky as f64, kx as f64)))
        .map(|(ky, kx)| (ky, kx, stream.next_gaussian(), range(stream, 0.0, 2.0 * PI)))
        .collect();
    let mut phi: Vec<f64> = (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64 / h as f64, (i % w) as f64 / w as f64);
            terms
                .iter()
                .map(|&(ky, kx, a, p)| a * (2.0 * PI * (ky * y + kx * x) / 2.0 + p).cos())
                .sum()
        })
        .collect();
    let peak = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        phi.iter_mut().for_each(|v| *v *= amplitude / peak);
    }
    phi
}

/// A random phantom whose magnitude peaks at exactly 1 (all zeros when
/// the drawn shape count is 0), modulated by a smooth random phase.
pub fn make_phantom(spec: &PhantomSpec, stream: &mut RandomStream) -> Result<ComplexImage> {
    spec.validate()?;
    let n = spec.count.0 + stream.next_index(spec.count.1 - spec.count.0 + 1);
    let mut mag = match spec.kind {
        PhantomKind::Ellipses => ellipses(spec, n, stream),
        PhantomKind::Blobs => blobs(spec, n, stream),
    };
    let peak = mag.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        mag.iter_mut().for_each(|v| *v /= peak);
    }
    let phi = smooth_phase(spec.height, spec.width, spec.phase_amplitude, stream);
    let data = mag.iter().zip(&phi).map(|(&m, &p)| Complex64::from_polar(m, p)).collect();
    ComplexImage::from_vec(spec.height, spec.width, 1, data)
}

/// Phantoms with a deterministic 90/10 train/test split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<ComplexImage>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn train_images(&self) -> impl Iterator<Item = &ComplexImage> {
        self.train.iter().map(|&i| &self.images[i])
    }

    pub fn test_images(&self) -> impl Iterator<Item = &ComplexImage> {
        self.test.iter().map(|&i| &self.images[i])
    }
}

/// Number of held-out images for a dataset of `count`.
pub fn test_count(count: usize) -> usize {
    ((count as f64 / 10.0).round() as usize).clamp(1, count - 1)
}

/// `count` phantoms, image `i` drawn from its own child stream, with the
/// test split chosen by a seeded shuffle.
pub fn make_dataset(spec: &PhantomSpec, count: usize, stream: &mut RandomStream) -> Result<Dataset> {
    if count < 2 {
        return arg_err(format!("a dataset needs at least 2 images, got {count}"));
    }
    let images = (0..count)
        .map(|i| make_phantom(spec, &mut stream.derive(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..count).collect();
    let mut shuffle = stream.derive(u64::MAX);
    for i in (1..count).rev() {
        order.swap(i, shuffle.next_index(i + 1));
    }
    let n_test = test_count(count);
    let mut test = order[count - n_test..].to_vec();
    let mut train = order[..count - n_test].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok(Dataset { images, train, test })
}

/// Smooth Gaussian-lobe coil maps with lobes spaced around the field of
/// view, normalized to unit sum of squares.
pub fn simulate_sensitivities(n_coils: usize, height: usize, width: usize) -> Result<CoilSensitivities> {
    if n_coils == 0 {
        return arg_err("need at least one coil");
    }
    let mut data = Vec::with_capacity(n_coils * height * width);
    for c in 0..n_coils {
        let angle = 2.0 * PI * c as f64 / n_coils as f64;
        let (ly, lx) = (0.9 * angle.sin(), 0.9 * angle.cos());
        let ramp = 0.4 * c as f64;
        for r in 0..height {
            for q in 0..width {
                let (y, x) = (coord(r as f64 + 0.5, height), coord(q as f64 + 0.5, width));
                let mag = (-((y - ly).powi(2) + (x - lx).powi(2)) / (2.0 * 0.7 * 0.7)).exp();
                let phase = ramp * (x * angle.cos() + y * angle.sin());
                data.push(Complex64::from_polar(mag, phase));
            }
        }
    }
    CoilSensitivities::normalized(ComplexImage::from_vec(height, width, n_coils, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::{forward, zero_filled, MaskPattern, SamplingMask};

    fn rs(seed: u64) -> RandomStream {
        RandomStream::new(seed, 21)
    }

    #[test]
    fn zero_count_gives_zero_image() {
        let spec = PhantomSpec {
            count: (0, 0),
            ..PhantomSpec::default()
        };
        for kind in [PhantomKind::Ellipses, PhantomKind::Blobs] {
            let img = make_phantom(&PhantomSpec { kind, ..spec.clone() }, &mut rs(1)).unwrap();
            assert_eq!(img.norm(), 0.0);
        }
    }

    #[test]
    fn phantoms_are_normalized_and_reproducible() {
        for kind in [PhantomKind::Ellipses, PhantomKind::Blobs] {
            let spec = PhantomSpec {
                kind,
                ..PhantomSpec::default()
            };
            let a = make_phantom(&spec, &mut rs(2)).unwrap();
            assert_eq!(a, make_phantom(&spec, &mut rs(2)).unwrap());
            let peak = a.magnitude().into_iter().fold(0.0, f64::max);
            assert!((peak - 1.0).abs() < 1e-12);
            let phase_max = a.data().iter().filter(|v| v.norm() > 0.0).map(|v| v.arg().abs()).fold(0.0, f64::max);
            assert!(phase_max <= spec.phase_amplitude + 1e-12);
        }
    }

    #[test]
    fn dataset_split() {
        let spec = PhantomSpec {
            height: 16,
            width: 16,
            ..PhantomSpec::default()
        };
        let d = make_dataset(&spec, 2, &mut rs(3)).unwrap();
        assert_eq!((d.train.len(), d.test.len()), (1, 1));
        let d = make_dataset(&spec, 20, &mut rs(3)).unwrap();
        assert_eq!((d.train.len(), d.test.len()), (18, 2));
        assert!(d.test.iter().all(|i| !d.train.contains(i)));
        for i in 0..20 {
            for j in i + 1..20 {
                assert!(d.images[i].distance(&d.images[j]) > 0.0);
            }
        }
        assert_eq!(d, make_dataset(&spec, 20, &mut rs(3)).unwrap());
        assert!(make_dataset(&spec, 1, &mut rs(3)).is_err());
    }

    #[test]
    fn sensitivities_have_unit_sos() {
        let one = simulate_sensitivities(1, 16, 16).unwrap();
        assert!(one.map(0).iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-12));
        let s = simulate_sensitivities(8, 32, 32).unwrap();
        for i in 0..32 * 32 {
            let sos: f64 = (0..8).map(|c| s.map(c)[i].norm_sqr()).sum();
            assert!((sos - 1.0).abs() < 1e-12);
        }
        assert!(simulate_sensitivities(0, 8, 8).is_err());
    }

    #[test]
    fn full_mask_multicoil_roundtrip() {
        let x = make_phantom(&PhantomSpec { height: 32, width: 32, ..PhantomSpec::default() }, &mut rs(4)).unwrap();
        let s = simulate_sensitivities(4, 32, 32).unwrap();
        let m = SamplingMask::full(32, 32, MaskPattern::Random2d).unwrap();
        let y = forward(&x, &m, Some(&s), 0.0, &mut rs(4)).unwrap();
        assert!(zero_filled(&y, Some(&s)).unwrap().distance(&x) < 1e-10);
    }
}
