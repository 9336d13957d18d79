use std::collections::VecDeque;

use crate::error::{arg_err, dim_err, Result};
use crate::numerics::{uniform, RandomStream, RealTensor};

pub const DEFAULT_CAPACITY: usize = 10_000;
pub const DEFAULT_REUSE_PROBABILITY: f64 = 0.95;

/// Bounded FIFO store of past negative samples.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    reuse_probability: f64,
    entries: VecDeque<RealTensor>,
}

impl Default for ReplayBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY, DEFAULT_REUSE_PROBABILITY).expect("valid defaults")
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize, reuse_probability: f64) -> Result<Self> {
        if capacity == 0 {
            return arg_err("replay buffer capacity must be positive");
        }
        if !(0.0..=1.0).contains(&reuse_probability) {
            return arg_err(format!("reuse probability must be in [0, 1], got {reuse_probability}"));
        }
        Ok(Self {
            capacity,
            reuse_probability,
            entries: VecDeque::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn reuse_probability(&self) -> f64 {
        self.reuse_probability
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &RealTensor> {
        self.entries.iter()
    }

    /// Starting points for a batch of negative chains: a uniformly chosen
    /// stored sample with probability `reuse_probability`, otherwise
    /// uniform noise on `[−1, 1]`.
    pub fn init_negatives(&self, batch: usize, shape: &[usize], stream: &mut RandomStream) -> Result<Vec<RealTensor>> {
        if batch == 0 {
            return arg_err("negative batch size must be at least 1");
        }
        if let Some(e) = self.entries.front() {
            if e.shape() != shape {
                return dim_err(format!("buffer holds {:?} samples, asked for {shape:?}", e.shape()));
            }
        }
        (0..batch)
            .map(|_| {
                // Draw the coin even for an empty buffer so the stream
                // consumption does not depend on buffer contents.
                let reuse = stream.next_unit() < self.reuse_probability;
                if reuse && !self.entries.is_empty() {
                    Ok(self.entries[stream.next_index(self.entries.len())].clone())
                } else {
                    uniform(stream, shape, -1.0, 1.0)
                }
            })
            .collect()
    }

    /// Appends samples, evicting the oldest beyond capacity.
    pub fn push(&mut self, samples: impl IntoIterator<Item = RealTensor>) -> Result<()> {
        for s in samples {
            let reference = self.entries.front().map(|e| e.shape().to_vec());
            if let Some(shape) = reference {
                if shape != s.shape() {
                    return dim_err(format!("buffer holds {shape:?} samples, got {:?}", s.shape()));
                }
            }
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back(s);
        }
        Ok(())
    }
}
