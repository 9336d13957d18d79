use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::RealTensor;
use crate::error::{arg_err, Result};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A reproducible random stream identified by `(seed, stream id)`.
///
/// Backed by ChaCha20 with the stream id selecting the ChaCha stream, so
/// distinct ids give independent sequences and the draw sequence does not
/// depend on how work is scheduled across threads.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
}

impl RandomStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Independent child stream keyed by `tag`. Depends only on this
    /// stream's identity, not on how many draws it has produced.
    pub fn derive(&self, tag: u64) -> RandomStream {
        RandomStream::new(splitmix64(self.seed ^ splitmix64(self.stream_id)), tag)
    }

    pub fn next_gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform draw on `[0, 1)`.
    pub fn next_unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn next_index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// I.i.d. `N(0, std²)` draws.
pub fn gaussian(stream: &mut RandomStream, shape: &[usize], std: f64) -> Result<RealTensor> {
    if !std.is_finite() || std < 0.0 {
        return arg_err(format!("gaussian std must be finite and >= 0, got {std}"));
    }
    let n = shape.iter().product();
    let data = (0..n).map(|_| std * stream.next_gaussian()).collect();
    RealTensor::from_vec(shape, data)
}

/// I.i.d. uniform draws on `[lo, hi)`.
pub fn uniform(stream: &mut RandomStream, shape: &[usize], lo: f64, hi: f64) -> Result<RealTensor> {
    if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return arg_err(format!("uniform needs finite lo < hi, got [{lo}, {hi})"));
    }
    let n = shape.iter().product();
    let data = (0..n).map(|_| stream.next_range(lo, hi)).collect();
    RealTensor::from_vec(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_std_gives_zeros() {
        let mut s = RandomStream::new(1, 0);
        let t = gaussian(&mut s, &[3, 5], 0.0).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bad_parameters_rejected() {
        let mut s = RandomStream::new(1, 0);
        assert!(gaussian(&mut s, &[4], -1.0).is_err());
        assert!(uniform(&mut s, &[4], 1.0, 1.0).is_err());
        assert!(uniform(&mut s, &[4], 2.0, 1.0).is_err());
    }

    #[test]
    fn same_identity_same_draws() {
        let a = gaussian(&mut RandomStream::new(7, 3), &[100], 1.0).unwrap();
        let b = gaussian(&mut RandomStream::new(7, 3), &[100], 1.0).unwrap();
        let c = gaussian(&mut RandomStream::new(7, 4), &[100], 1.0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let u1 = uniform(&mut RandomStream::new(7, 3), &[100], -1.0, 1.0).unwrap();
        let u2 = uniform(&mut RandomStream::new(7, 3), &[100], -1.0, 1.0).unwrap();
        assert_eq!(u1, u2);
    }

    #[test]
    fn derive_ignores_consumption() {
        let s = RandomStream::new(9, 1);
        let mut used = s.clone();
        used.next_gaussian();
        let a = gaussian(&mut s.derive(5), &[10], 1.0).unwrap();
        let b = gaussian(&mut used.derive(5), &[10], 1.0).unwrap();
        assert_eq!(a, b);
    }
}
