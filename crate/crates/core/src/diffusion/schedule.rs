use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Linear,
}

/// Per-step variances and their cumulative products.
///
/// `beta_prod[t]` is stored as `1 - alpha_prod[t]`, so the two always sum to
/// one and clean-latent estimation is the exact inverse of [`super::add_noise`].
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_prod: Vec<f64>,
    beta_prod: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        match kind {
            ScheduleKind::Linear => Self::linear(steps, beta_start, beta_end),
        }
    }

    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("schedule needs at least one step"));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(invalid(format!(
                "betas must satisfy 0 < start <= end < 1, got {beta_start}..{beta_end}"
            )));
        }
        let betas = if steps == 1 {
            vec![beta_start]
        } else {
            let span = beta_end - beta_start;
            (0..steps)
                .map(|i| beta_start + span * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(invalid("schedule needs at least one step"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(invalid(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_prod: Vec<f64> = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        let beta_prod = alpha_prod.iter().map(|a| 1.0 - a).collect();
        Ok(Self { betas, alphas, alpha_prod, beta_prod })
    }

    /// Number of diffusion steps `T`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_prods(&self) -> &[f64] {
        &self.alpha_prod
    }

    pub fn beta_prods(&self) -> &[f64] {
        &self.beta_prod
    }

    pub fn alpha_prod(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(self.alpha_prod[t])
    }

    pub fn beta_prod(&self, t: usize) -> Result<f64> {
        self.check_step(t)?;
        Ok(self.beta_prod[t])
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t >= self.len() {
            return Err(invalid(format!("timestep {t} outside [0, {})", self.len())));
        }
        Ok(())
    }

    /// Maps a discrete step to the open unit interval as `(t + 0.5) / T`.
    pub fn normalized_time(&self, t: usize) -> f64 {
        (t as f64 + 0.5) / self.len() as f64
    }
}
