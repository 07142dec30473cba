//! Adam with decoupled weight decay, with inspectable state for checkpoints.

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-2 }
    }
}

pub struct AdamW {
    cfg: AdamWConfig,
    params: Vec<(String, Var)>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    steps: u64,
}

impl AdamW {
    pub fn new(params: Vec<(String, Var)>, cfg: AdamWConfig) -> Result<Self> {
        if !(cfg.lr > 0.0) {
            return Err(invalid(format!("learning rate must be positive, got {}", cfg.lr)));
        }
        let m = params.iter().map(|(_, p)| p.as_tensor().zeros_like()).collect::<candle_core::Result<Vec<_>>>()?;
        let v = m.clone();
        Ok(Self { cfg, params, m, v, steps: 0 })
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn holds(&self, t: &Tensor) -> bool {
        self.params.iter().any(|(_, p)| p.as_tensor().id() == t.id())
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|(n, _)| n.as_str())
    }

    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.steps += 1;
        let AdamWConfig { lr, beta1, beta2, eps, weight_decay } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.steps as i32);
        let bc2 = 1.0 - beta2.powi(self.steps as i32);
        for (i, (_, var)) in self.params.iter().enumerate() {
            let Some(g) = grads.get(var.as_tensor()) else { continue };
            let m = (self.m[i].affine(beta1, 0.0)? + g.affine(1.0 - beta1, 0.0)?)?;
            let v = (self.v[i].affine(beta2, 0.0)? + g.sqr()?.affine(1.0 - beta2, 0.0)?)?;
            let update = m.affine(1.0 / bc1, 0.0)?.div(&(v.affine(1.0 / bc2, 0.0)?.sqrt()? + eps)?)?;
            let w = var.as_tensor().detach().affine(1.0 - lr * weight_decay, 0.0)?;
            var.set(&(w - update.affine(lr, 0.0)?)?)?;
            self.m[i] = m;
            self.v[i] = v;
        }
        Ok(())
    }

    pub fn backward_step(&mut self, loss: &Tensor) -> Result<()> {
        let grads = loss.backward()?;
        self.step(&grads)
    }

    /// `(name, first moment, second moment)` for every parameter.
    pub fn state(&self) -> Vec<(&str, &Tensor, &Tensor)> {
        self.params
            .iter()
            .zip(self.m.iter().zip(&self.v))
            .map(|((n, _), (m, v))| (n.as_str(), m, v))
            .collect()
    }

    pub fn restore_state(&mut self, steps: u64, mut lookup: impl FnMut(&str) -> Option<(Tensor, Tensor)>) -> Result<()> {
        for (i, (name, var)) in self.params.iter().enumerate() {
            let (m, v) = lookup(name).ok_or_else(|| invalid(format!("optimizer state for {name} missing")))?;
            if m.dims() != var.dims() || v.dims() != var.dims() {
                return Err(invalid(format!("optimizer state for {name} has wrong shape")));
            }
            self.m[i] = m.to_dtype(var.dtype())?;
            self.v[i] = v.to_dtype(var.dtype())?;
        }
        self.steps = steps;
        Ok(())
    }
}
