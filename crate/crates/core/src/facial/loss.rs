//! The time-aware latent facial feature loss and the total objective.

use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use super::discriminator::{clamp_probabilities, discriminator_loss, RegionDiscriminators, RegionPatches};
use super::gram::gram;
use super::regions::{crop_batch, Region, RegionBoxes, RegionSizes};
use super::weight::{time_weight, TimeWeightParams};
use crate::error::{invalid, Result};
use crate::train::optim::AdamW;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FacialLossParams {
    #[serde(flatten)]
    pub weight: TimeWeightParams,
    pub lambda_d: f64,
    pub lambda_s: f64,
    pub regions: RegionSizes,
}

impl Default for FacialLossParams {
    fn default() -> Self {
        Self { weight: TimeWeightParams::default(), lambda_d: 0.1, lambda_s: 1.0, regions: RegionSizes::default() }
    }
}

impl FacialLossParams {
    pub fn is_disabled(&self) -> bool {
        self.lambda_d == 0.0 && self.lambda_s == 0.0
    }
}

fn batched(z: &Tensor) -> Result<Tensor> {
    Ok(if z.rank() == 3 { z.unsqueeze(0)? } else { z.clone() })
}

/// `mean_b sum_P W(t_b) (lambda_d log(1 - D_P(p_pred)) + lambda_s sum_scales |G(psi(p_pred)) - G(psi(p))|_1)`.
///
/// Gradients reach `z0_pred` only: the reference latent and the
/// discriminator weights are treated as constants. Inputs are `(C, h, w)`
/// or `(B, C, h, w)`, with one box set and one normalized time per sample.
pub fn facial_loss(
    z0_pred: &Tensor,
    z0: &Tensor,
    boxes: &[RegionBoxes],
    t_norms: &[f64],
    d: &RegionDiscriminators,
    p: &FacialLossParams,
) -> Result<Tensor> {
    let pred = batched(z0_pred)?;
    let real = batched(z0)?.detach();
    if pred.dims() != real.dims() {
        return Err(invalid(format!("latent shapes differ: {:?} vs {:?}", pred.dims(), real.dims())));
    }
    let b = pred.dim(0)?;
    if boxes.len() != b || t_norms.len() != b {
        return Err(invalid(format!("{} boxes and {} times for batch of {b}", boxes.len(), t_norms.len())));
    }
    let weights: Vec<f64> = t_norms.iter().map(|t| time_weight(*t, &p.weight)).collect::<Result<_>>()?;
    if p.is_disabled() {
        return Ok(Tensor::zeros((), pred.dtype(), pred.device())?);
    }
    let weights = Tensor::from_vec(weights, b, pred.device())?.to_dtype(pred.dtype())?;
    let d = d.detached();
    let mut total: Option<Tensor> = None;
    for region in Region::ALL {
        let disc = d.get(region);
        let pp = crop_batch(&pred, boxes, region)?;
        let pr = crop_batch(&real, boxes, region)?;
        let out_pred = disc.forward(&pp)?;
        let mut term = Tensor::zeros(b, pred.dtype(), pred.device())?;
        if p.lambda_d != 0.0 {
            let adv = (1.0 - clamp_probabilities(&out_pred.prob)?)?.log()?;
            term = (term + adv.affine(p.lambda_d, 0.0)?)?;
        }
        if p.lambda_s != 0.0 {
            let out_real = disc.forward(&pr)?;
            for (fp, fr) in out_pred.features.iter().zip(&out_real.features) {
                let dist = (gram(fp)? - gram(fr)?)?.abs()?.sum(2)?.sum(1)?;
                term = (term + dist.affine(p.lambda_s, 0.0)?)?;
            }
        }
        let weighted = (term * &weights)?;
        total = Some(match total {
            Some(t) => (t + weighted)?,
            None => weighted,
        });
    }
    Ok(total.expect("two regions").mean_all()?)
}

/// `L_noise + L_facial`.
pub fn total_loss(noise: &Tensor, facial: &Tensor) -> Result<Tensor> {
    Ok((noise + facial)?)
}

/// One update of both discriminators on real crops of `z0` and detached
/// fake crops of `z0_pred`; returns the summed cross-entropy.
pub fn discriminator_step(
    d: &RegionDiscriminators,
    opt: &mut AdamW,
    z0: &Tensor,
    z0_pred: &Tensor,
    boxes: &[RegionBoxes],
) -> Result<f64> {
    let real = batched(z0)?.detach();
    let fake = batched(z0_pred)?.detach();
    let pairs = Region::ALL
        .iter()
        .map(|r| {
            Ok((
                RegionPatches::new(*r, crop_batch(&real, boxes, *r)?),
                RegionPatches::new(*r, crop_batch(&fake, boxes, *r)?),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let loss = discriminator_loss(d, &pairs)?;
    opt.backward_step(&loss)?;
    Ok(loss.to_dtype(DType::F64)?.to_scalar()?)
}
