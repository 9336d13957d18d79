use crate::energy_net::{EnergyParams, NamedTensor, ParamGrads};
use crate::error::{arg_err, dim_err, Error, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 3e-4;

/// Bias-corrected Adam moments for a list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zero moments for tensors of the given lengths.
    pub fn new(lens: impl IntoIterator<Item = usize>, learning_rate: f64) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return arg_err(format!("learning rate must be positive, got {learning_rate}"));
        }
        let m: Vec<Vec<f64>> = lens.into_iter().map(|n| vec![0.0; n]).collect();
        Ok(Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            v: m.clone(),
            m,
        })
    }

    pub fn for_params(params: &EnergyParams, learning_rate: f64) -> Result<Self> {
        Self::new(params.tensors().iter().map(Vec::len), learning_rate)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update of `params` in place. Non-finite gradients are
    /// refused and leave both parameters and state untouched.
    pub fn step(&mut self, params: &mut [Vec<f64>], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return dim_err("Adam state, parameters and gradients disagree in tensor count");
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return dim_err("Adam state, parameters and gradients disagree in tensor size");
            }
        }
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient passed to Adam; update refused".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= self.learning_rate * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    pub fn update(&mut self, params: &mut EnergyParams, grads: &ParamGrads) -> Result<()> {
        self.step(params.tensors_mut(), &grads.tensors)
    }

    /// Moments and counters as named checkpoint tensors.
    pub fn to_extras(&self) -> Vec<NamedTensor> {
        let mut out = vec![
            NamedTensor::scalar("adam.step", self.step as f64),
            NamedTensor::vector(
                "adam.hyper",
                vec![self.learning_rate, self.beta1, self.beta2, self.eps],
            ),
        ];
        for (i, (m, v)) in self.m.iter().zip(&self.v).enumerate() {
            out.push(NamedTensor::vector(format!("adam.m.{i}"), m.clone()));
            out.push(NamedTensor::vector(format!("adam.v.{i}"), v.clone()));
        }
        out
    }

    pub fn from_extras(extras: &[NamedTensor], lens: &[usize]) -> Result<Self> {
        let find = |name: &str| {
            extras
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks '{name}'")))
        };
        let hyper = &find("adam.hyper")?.data;
        if hyper.len() != 4 {
            return Err(Error::Format("adam.hyper must hold 4 values".into()));
        }
        let mut s = Self::new(lens.iter().copied(), hyper[0])?;
        s.beta1 = hyper[1];
        s.beta2 = hyper[2];
        s.eps = hyper[3];
        s.step = find("adam.step")?.data[0] as u64;
        for (i, &n) in lens.iter().enumerate() {
            let m = &find(&format!("adam.m.{i}"))?.data;
            let v = &find(&format!("adam.v.{i}"))?.data;
            if m.len() != n || v.len() != n {
                return Err(Error::Format(format!("Adam moment {i} has the wrong length")));
            }
            s.m[i] = m.clone();
            s.v[i] = v.clone();
        }
        Ok(s)
    }
}
