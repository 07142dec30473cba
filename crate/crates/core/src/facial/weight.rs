use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Which logit to use inside the time weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogitConvention {
    /// `log(t / (1 - t))`; the weight is then the logit-normal density.
    #[default]
    Standard,
    /// `log(1 / (t (1 - t)))`; symmetric in `t`, so `m` cannot move the peak.
    PaperSymmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeWeightParams {
    pub m: f64,
    pub s: f64,
    pub logit: LogitConvention,
    pub t_clip: f64,
}

impl Default for TimeWeightParams {
    fn default() -> Self {
        Self { m: -0.5, s: 1.0, logit: LogitConvention::Standard, t_clip: 1e-3 }
    }
}

impl TimeWeightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0) || !self.s.is_finite() {
            return Err(invalid(format!("scale s must be positive, got {}", self.s)));
        }
        if !(self.t_clip > 0.0 && self.t_clip < 0.5) {
            return Err(invalid(format!("t_clip must lie in (0, 0.5), got {}", self.t_clip)));
        }
        if !self.m.is_finite() {
            return Err(invalid("location m must be finite"));
        }
        Ok(())
    }
}

pub fn logit(t: f64, convention: LogitConvention) -> f64 {
    match convention {
        LogitConvention::Standard => (t / (1.0 - t)).ln(),
        LogitConvention::PaperSymmetric => (1.0 / (t * (1.0 - t))).ln(),
    }
}

/// `1/(s sqrt(2 pi)) * 1/(t (1 - t)) * exp(-(logit(t) - m)^2 / (2 s^2))`,
/// with `t` clipped into `[t_clip, 1 - t_clip]`.
pub fn time_weight(t_norm: f64, p: &TimeWeightParams) -> Result<f64> {
    p.validate()?;
    if !t_norm.is_finite() {
        return Err(invalid("t_norm must be finite"));
    }
    let t = t_norm.clamp(p.t_clip, 1.0 - p.t_clip);
    let z = logit(t, p.logit) - p.m;
    let norm = 1.0 / (p.s * (2.0 * std::f64::consts::PI).sqrt());
    Ok(norm / (t * (1.0 - t)) * (-(z * z) / (2.0 * p.s * p.s)).exp())
}
