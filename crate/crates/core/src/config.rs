//! Hierarchical run configuration, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{AlignmentTemplate, CurationThresholds, DegradationRanges};
use crate::diffusion::{NoiseSchedule, ScheduleKind};
use crate::error::{invalid, Error, Result};
use crate::facial::{FacialLossParams, RegionSizes, TimeWeightParams};
use crate::models::UNetConfig;
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Faces drawn by the generator before curation.
    pub num_faces: usize,
    pub image_size: usize,
    /// Trailing curated faces held out for validation.
    pub val_count: usize,
    pub align: bool,
    pub template: Option<[[f64; 2]; 3]>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { num_faces: 64, image_size: 64, val_count: 16, align: true, template: None }
    }
}

impl DataConfig {
    pub fn template(&self) -> AlignmentTemplate {
        let mut t = AlignmentTemplate::standard(self.image_size, self.image_size);
        if let Some([l, r, m]) = self.template {
            t.left_eye = l;
            t.right_eye = r;
            t.mouth = m;
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { kind: ScheduleKind::Linear, steps: 1000, beta_start: 1e-4, beta_end: 0.02 }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::new(self.kind, self.steps, self.beta_start, self.beta_end)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    #[serde(flatten)]
    pub weight: TimeWeightParams,
    pub lambda_d: f64,
    pub lambda_s: f64,
    /// Latent crop sizes; scaled from the 512-pixel defaults when absent.
    pub regions: Option<RegionSizes>,
}

impl Default for LossConfig {
    fn default() -> Self {
        let p = FacialLossParams::default();
        Self { weight: p.weight, lambda_d: p.lambda_d, lambda_s: p.lambda_s, regions: None }
    }
}

impl LossConfig {
    pub fn params(&self, image_size: usize) -> FacialLossParams {
        FacialLossParams {
            weight: self.weight,
            lambda_d: self.lambda_d,
            lambda_s: self.lambda_s,
            regions: self.regions.unwrap_or_else(|| RegionSizes::for_image_size(image_size)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub num_steps: usize,
    /// Clamp clean-latent estimates to `[-c, c]` in model space.
    pub clip: Option<f64>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { num_steps: 50, clip: Some(1.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub feature_dim: usize,
    pub feature_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { feature_dim: 64, feature_seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub degradation: DegradationRanges,
    pub curation: CurationThresholds,
    pub schedule: ScheduleConfig,
    pub model: UNetConfig,
    pub loss: LossConfig,
    pub stage1: TrainConfig,
    #[serde(deserialize_with = "stage2_over_defaults")]
    pub stage2: TrainConfig,
    pub sampling: SamplingConfig,
    pub eval: EvalConfig,
}

/// Fills keys missing from a `[stage2]` table from the stage-2 defaults
/// rather than the stage-1 ones.
fn stage2_over_defaults<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<TrainConfig, D::Error> {
    use serde::de::Error as _;
    let given = serde_json::Value::deserialize(d)?;
    let mut merged = serde_json::to_value(TrainConfig::stage2()).map_err(D::Error::custom)?;
    match (given, &mut merged) {
        (serde_json::Value::Object(g), serde_json::Value::Object(m)) => m.extend(g),
        _ => return Err(D::Error::custom("[stage2] must be a table")),
    }
    serde_json::from_value(merged).map_err(D::Error::custom)
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            degradation: DegradationRanges::default(),
            curation: CurationThresholds::default(),
            schedule: ScheduleConfig::default(),
            model: UNetConfig::default(),
            loss: LossConfig::default(),
            stage1: TrainConfig::stage1(),
            stage2: TrainConfig::stage2(),
            sampling: SamplingConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn facial_params(&self) -> FacialLossParams {
        self.loss.params(self.data.image_size)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.data.image_size;
        if n < 64 || n % 8 != 0 {
            return Err(invalid(format!("image_size must be a multiple of 8 and at least 64, got {n}")));
        }
        if self.data.num_faces == 0 {
            return Err(invalid("num_faces must be positive"));
        }
        self.data.template().validate()?;
        self.curation.validate()?;
        self.schedule.build()?;
        self.model.validate()?;
        let down = 1 << (self.model.channel_mult.len() - 1);
        if (n / 8) % down != 0 {
            return Err(invalid(format!("latent side {} not divisible by {down}", n / 8)));
        }
        self.loss.weight.validate()?;
        if !(self.loss.lambda_d >= 0.0 && self.loss.lambda_s >= 0.0) {
            return Err(invalid("loss weights must be non-negative"));
        }
        let p = self.facial_params();
        for r in crate::facial::Region::ALL {
            let [w, h] = p.regions.get(r);
            if w == 0 || h == 0 || w > n / 8 || h > n / 8 {
                return Err(invalid(format!("{r:?} region {w}x{h} does not fit a {}x{} latent", n / 8, n / 8)));
            }
        }
        self.stage1.validate()?;
        self.stage2.validate()?;
        if self.sampling.num_steps == 0 || self.sampling.num_steps > self.schedule.steps {
            return Err(invalid("sampling.num_steps must lie in [1, schedule.steps]"));
        }
        if self.eval.feature_dim == 0 {
            return Err(invalid("feature_dim must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = RunConfig::from_toml("seed = 9\n[loss]\nm = 0.5\n[stage2]\nmax_iters = 7\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.loss.weight.m, 0.5);
        assert_eq!(cfg.loss.weight.s, 1.0);
        assert_eq!(cfg.stage2.max_iters, 7);
        assert_eq!(cfg.stage2.learning_rate, TrainConfig::stage2().learning_rate);
        assert_eq!(cfg.stage2.tag_dropout, 0.0);
        assert!(RunConfig::from_toml("[stage2]\nbogus = 1\n").is_err());
        assert_eq!(cfg.stage2.learning_rate, TrainConfig::stage2().learning_rate);
        assert_eq!(cfg.facial_params().regions, RegionSizes::for_image_size(64));
    }

    #[test]
    fn bad_values_rejected() {
        assert!(RunConfig::from_toml("[loss]\ns = 0.0\n").is_err());
        assert!(RunConfig::from_toml("[data]\nimage_size = 60\n").is_err());
        assert!(RunConfig::from_toml("[stage1]\nbatch_size = 0\n").is_err());
        assert!(RunConfig::from_toml("bogus = 1\n").is_err());
        assert!(RunConfig::from_toml("[loss]\nregions = { eyes = [16, 8], mouth = [10, 6] }\n").is_err());
    }
}
