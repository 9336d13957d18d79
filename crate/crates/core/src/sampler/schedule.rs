use crate::error::{arg_err, Result};

/// Step size for noise level `sigma_i`: `ε·σ_i²/σ_I²`, relative to the
/// final (smallest) level.
pub fn anneal_step_size(eps: f64, sigma_i: f64, sigma_last: f64) -> f64 {
    eps * sigma_i * sigma_i / (sigma_last * sigma_last)
}

/// Strictly decreasing noise levels with a base step and inner step count.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
    base_step: f64,
    inner_steps: usize,
}

impl NoiseSchedule {
    pub fn new(sigmas: Vec<f64>, base_step: f64, inner_steps: usize) -> Result<Self> {
        if sigmas.is_empty() {
            return arg_err("noise schedule needs at least one level");
        }
        if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return arg_err("noise levels must be finite and positive");
        }
        if sigmas.windows(2).any(|p| p[1] >= p[0]) {
            return arg_err("noise levels must be strictly decreasing");
        }
        if !(base_step.is_finite() && base_step > 0.0) {
            return arg_err(format!("base step must be positive, got {base_step}"));
        }
        if inner_steps == 0 {
            return arg_err("inner step count must be at least 1");
        }
        Ok(Self {
            sigmas,
            base_step,
            inner_steps,
        })
    }

    /// `levels` geometrically spaced levels from `first` down to `last`.
    pub fn geometric(first: f64, last: f64, levels: usize, base_step: f64, inner_steps: usize) -> Result<Self> {
        if levels == 0 {
            return arg_err("noise schedule needs at least one level");
        }
        if levels == 1 {
            return Self::new(vec![last], base_step, inner_steps);
        }
        if !(first > last && last > 0.0) {
            return arg_err(format!("geometric schedule needs first > last > 0, got {first}, {last}"));
        }
        let ratio = (last / first).powf(1.0 / (levels - 1) as f64);
        let mut sigmas: Vec<f64> = (0..levels).map(|i| first * ratio.powi(i as i32)).collect();
        sigmas[levels - 1] = last;
        Self::new(sigmas, base_step, inner_steps)
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn base_step(&self) -> f64 {
        self.base_step
    }

    pub fn inner_steps(&self) -> usize {
        self.inner_steps
    }

    pub fn levels(&self) -> usize {
        self.sigmas.len()
    }

    pub fn last_sigma(&self) -> f64 {
        self.sigmas[self.sigmas.len() - 1]
    }

    /// `I·T`.
    pub fn total_steps(&self) -> usize {
        self.levels() * self.inner_steps
    }

    /// Annealed step size per level.
    pub fn step_sizes(&self) -> Vec<f64> {
        let last = self.last_sigma();
        self.sigmas
            .iter()
            .map(|&s| anneal_step_size(self.base_step, s, last))
            .collect()
    }
}

impl Default for NoiseSchedule {
    /// 10 levels from 0.5 to 0.01, 20 steps each, ε = 2e-5.
    fn default() -> Self {
        Self::geometric(0.5, 0.01, 10, 2e-5, 20).expect("valid default schedule")
    }
}
