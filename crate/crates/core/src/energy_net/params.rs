use super::arch::{Architecture, NetPlan, TensorSpec};
use super::spectral;
use crate::error::{arg_err, Result};
use crate::numerics::RandomStream;

/// All weights of the energy network plus the persistent power-iteration
/// vectors used by spectral normalization.
#[derive(Clone, Debug)]
pub struct EnergyParams {
    arch: Architecture,
    specs: Vec<TensorSpec>,
    pub(crate) plan: NetPlan,
    pub(crate) tensors: Vec<Vec<f64>>,
    pub(crate) sn_u: Vec<Option<Vec<f64>>>,
}

impl PartialEq for EnergyParams {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.tensors == other.tensors && self.sn_u == other.sn_u
    }
}

impl EnergyParams {
    /// All-zero weights and biases; power-iteration vectors start at
    /// `1/√rows`.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let (plan, specs) = arch.plan();
        let tensors = specs.iter().map(|s| vec![0.0; s.len()]).collect();
        let sn_u = specs
            .iter()
            .map(|s| {
                s.normalized.then(|| {
                    let rows = s.matrix_dims().0;
                    vec![1.0 / (rows as f64).sqrt(); rows]
                })
            })
            .collect();
        Ok(Self {
            arch: arch.clone(),
            specs,
            plan,
            tensors,
            sn_u,
        })
    }

    /// Weights `N(0, 1/fan_in)`, zero biases, then spectral normalization
    /// with `sn_iterations` warm-up power iterations.
    pub fn init(arch: &Architecture, stream: &mut RandomStream, sn_iterations: usize) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        for (i, spec) in p.specs.iter().enumerate() {
            if !spec.normalized {
                continue;
            }
            let std = 1.0 / (spec.fan_in() as f64).sqrt();
            p.tensors[i].iter_mut().for_each(|v| *v = std * stream.next_gaussian());
            let u = p.sn_u[i].as_mut().expect("normalized tensor has u");
            u.iter_mut().for_each(|v| *v = stream.next_gaussian());
            let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter_mut().for_each(|v| *v /= n);
        }
        if sn_iterations > 0 {
            spectral::normalize_all_mut(&mut p, sn_iterations)?;
        }
        Ok(p)
    }

    pub(crate) fn from_parts(
        arch: &Architecture,
        tensors: Vec<Vec<f64>>,
        sn_u: Vec<Option<Vec<f64>>>,
    ) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        if tensors.len() != p.tensors.len() || sn_u.len() != p.sn_u.len() {
            return arg_err("tensor count does not match architecture");
        }
        for (i, (t, u)) in tensors.iter().zip(&sn_u).enumerate() {
            if t.len() != p.tensors[i].len() {
                return arg_err(format!("tensor {} has wrong size", p.specs[i].name));
            }
            if u.as_ref().map(Vec::len) != p.sn_u[i].as_ref().map(Vec::len) {
                return arg_err(format!("power-iteration vector of {} has wrong size", p.specs[i].name));
            }
        }
        p.tensors = tensors;
        p.sn_u = sn_u;
        Ok(p)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn tensors(&self) -> &[Vec<f64>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.tensors
    }

    pub fn power_vectors(&self) -> &[Option<Vec<f64>>] {
        &self.sn_u
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .map(|i| self.tensors[i].as_slice())
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        let i = self.specs.iter().position(|s| s.name == name)?;
        Some(&mut self.tensors[i])
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }

    /// Flattened view of every parameter in canonical order.
    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flatten().copied().collect()
    }

    pub fn grads_like(&self) -> ParamGrads {
        ParamGrads {
            tensors: self.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }
}

/// Gradient with the same layout as [`EnergyParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub tensors: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn axpy(&mut self, alpha: f64, other: &ParamGrads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.tensors.iter_mut().flatten().for_each(|v| *v *= alpha);
    }

    pub fn norm(&self) -> f64 {
        self.tensors.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().flatten().all(|&v| v == 0.0)
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flatten().copied().collect()
    }
}
