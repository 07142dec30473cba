//! Small convolutional classifiers over latent patches, one per facial region.

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::regions::Region;
use crate::error::{invalid, Error, Result};
use crate::models::nn::{leaky_relu, Conv2d, Linear, ParamBuilder, ParamStore};

const PROB_EPS: f64 = 1e-6;
const SLOPE: f64 = 0.2;
/// Logits are clamped here before the sigmoid. Past this point the
/// probability is already inside the `PROB_EPS` clamp, and `exp` of larger
/// values overflows single precision in the backward pass.
const LOGIT_LIMIT: f64 = 30.0;
pub const FEATURE_WIDTHS: [usize; 2] = [16, 32];

/// Probability per patch plus the post-activation feature map of every scale.
pub struct DiscriminatorOutput {
    pub prob: Tensor,
    pub features: Vec<Tensor>,
}

#[derive(Clone, Debug)]
pub struct RegionDiscriminator {
    conv1: Conv2d,
    conv2: Conv2d,
    head: Linear,
}

impl RegionDiscriminator {
    fn new(pb: &mut ParamBuilder, prefix: &str, channels: usize) -> Result<Self> {
        let [w1, w2] = FEATURE_WIDTHS;
        Ok(Self {
            conv1: Conv2d::new(pb, &format!("{prefix}.conv1"), channels, w1, 3, 1, 1)?,
            conv2: Conv2d::new(pb, &format!("{prefix}.conv2"), w1, w2, 3, 2, 1)?,
            head: Linear::new(pb, &format!("{prefix}.head"), w2, 1)?,
        })
    }

    /// Patches are `(B, C, h, w)`.
    pub fn forward(&self, patches: &Tensor) -> Result<DiscriminatorOutput> {
        let f1 = leaky_relu(&self.conv1.forward(patches)?, SLOPE)?;
        let f2 = leaky_relu(&self.conv2.forward(&f1)?, SLOPE)?;
        let pooled = f2.mean(3)?.mean(2)?;
        let logit = self.head.forward(&pooled)?.squeeze(1)?.clamp(-LOGIT_LIMIT, LOGIT_LIMIT)?;
        // 1 / (1 + exp(-x)) from differentiable primitives.
        let prob = (logit.neg()?.exp()? + 1.0)?.recip()?;
        Ok(DiscriminatorOutput { prob, features: vec![f1, f2] })
    }

    pub fn detached(&self) -> Self {
        Self { conv1: self.conv1.detached(), conv2: self.conv2.detached(), head: self.head.detached() }
    }
}

/// The eye and mouth discriminators sharing one parameter store.
#[derive(Clone, Debug)]
pub struct RegionDiscriminators {
    store: ParamStore,
    pub eyes: RegionDiscriminator,
    pub mouth: RegionDiscriminator,
}

impl RegionDiscriminators {
    pub fn new(channels: usize, seed: u64, dtype: DType) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (eyes, mouth) = {
            let mut pb = ParamBuilder::init(&mut store, &mut rng, dtype, &Device::Cpu);
            (RegionDiscriminator::new(&mut pb, "disc.eyes", channels)?, RegionDiscriminator::new(&mut pb, "disc.mouth", channels)?)
        };
        Ok(Self { store, eyes, mouth })
    }

    pub fn from_store(channels: usize, mut store: ParamStore) -> Result<Self> {
        let dtype = store
            .iter()
            .next()
            .map(|(_, v)| v.dtype())
            .ok_or_else(|| invalid("empty discriminator parameter store"))?;
        let (eyes, mouth) = {
            let mut pb = ParamBuilder::load(&mut store, false, dtype, &Device::Cpu);
            (RegionDiscriminator::new(&mut pb, "disc.eyes", channels)?, RegionDiscriminator::new(&mut pb, "disc.mouth", channels)?)
        };
        Ok(Self { store, eyes, mouth })
    }

    pub fn get(&self, r: Region) -> &RegionDiscriminator {
        match r {
            Region::Eyes => &self.eyes,
            Region::Mouth => &self.mouth,
        }
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Copies that read the same weights but never receive gradients.
    pub fn detached(&self) -> Self {
        Self { store: self.store.clone(), eyes: self.eyes.detached(), mouth: self.mouth.detached() }
    }
}

/// Checks that probabilities are in `[0, 1]` and clamps them to `[eps, 1 - eps]`.
pub fn clamp_probabilities(p: &Tensor) -> Result<Tensor> {
    let values: Vec<f64> = p.to_dtype(DType::F64)?.flatten_all()?.to_vec1()?;
    if let Some(bad) = values.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
        return Err(Error::NumericDomain(format!("discriminator output {bad} outside (0, 1)")));
    }
    Ok(p.clamp(PROB_EPS, 1.0 - PROB_EPS)?)
}

/// Binary cross-entropy `-mean log D(real) - mean log(1 - D(fake))`.
pub fn bce_from_probs(p_real: &Tensor, p_fake: &Tensor) -> Result<Tensor> {
    let real = clamp_probabilities(p_real)?.log()?.mean_all()?;
    let fake = (1.0 - clamp_probabilities(p_fake)?)?.log()?.mean_all()?;
    Ok((real + fake)?.neg()?)
}

/// Latent patches tagged with the region they were cropped from.
#[derive(Clone, Debug)]
pub struct RegionPatches {
    pub region: Region,
    pub patches: Tensor,
}

impl RegionPatches {
    pub fn new(region: Region, patches: Tensor) -> Self {
        Self { region, patches }
    }
}

/// Discriminator loss summed over the given `(real, fake)` pairs. Fake
/// patches are detached, so only discriminator parameters receive gradients.
pub fn discriminator_loss(d: &RegionDiscriminators, pairs: &[(RegionPatches, RegionPatches)]) -> Result<Tensor> {
    let mut total: Option<Tensor> = None;
    for (real, fake) in pairs {
        if real.region != fake.region {
            return Err(invalid(format!("mixed regions {:?} and {:?}", real.region, fake.region)));
        }
        let disc = d.get(real.region);
        let pr = disc.forward(&real.patches.detach())?.prob;
        let pf = disc.forward(&fake.patches.detach())?.prob;
        let l = bce_from_probs(&pr, &pf)?;
        total = Some(match total {
            Some(t) => (t + l)?,
            None => l,
        });
    }
    total.ok_or_else(|| invalid("no patches for the discriminator step"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uninformative_discriminator() {
        let half = Tensor::new(&[0.5f64, 0.5, 0.5], &Device::Cpu).unwrap();
        let l: f64 = bce_from_probs(&half, &half).unwrap().to_scalar().unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((l - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn perfect_discriminator_hits_clamp_limit() {
        let ones = Tensor::new(&[1.0f64, 1.0], &Device::Cpu).unwrap();
        let zeros = Tensor::new(&[0.0f64, 0.0], &Device::Cpu).unwrap();
        let l: f64 = bce_from_probs(&ones, &zeros).unwrap().to_scalar().unwrap();
        let expect = 2.0 * (1.0 / (1.0 - 1e-6f64)).ln();
        assert!((l - expect).abs() < 1e-15);
        assert!((l - 2e-6).abs() < 1e-11);
    }

    #[test]
    fn saturated_logits_keep_gradients_finite() {
        let d = RegionDiscriminators::new(4, 3, DType::F32).unwrap();
        let big = Tensor::randn(0f32, 1.0, (2, 4, 4, 4), &Device::Cpu).unwrap().affine(1e6, 0.0).unwrap();
        let pairs = [(RegionPatches::new(Region::Eyes, big.clone()), RegionPatches::new(Region::Eyes, big.neg().unwrap()))];
        let loss = discriminator_loss(&d, &pairs).unwrap();
        let grads = loss.backward().unwrap();
        for (_, v) in d.params().iter() {
            if let Some(g) = grads.get(v.as_tensor()) {
                let g: Vec<f32> = g.flatten_all().unwrap().to_vec1().unwrap();
                assert!(g.iter().all(|x| x.is_finite()));
            }
        }
    }

    #[test]
    fn out_of_domain_probability_rejected() {
        let bad = Tensor::new(&[1.5f64], &Device::Cpu).unwrap();
        assert!(matches!(clamp_probabilities(&bad), Err(Error::NumericDomain(_))));
        let nan = Tensor::new(&[f64::NAN], &Device::Cpu).unwrap();
        assert!(matches!(clamp_probabilities(&nan), Err(Error::NumericDomain(_))));
    }

    #[test]
    fn outputs_probabilities_and_two_scales() {
        let d = RegionDiscriminators::new(4, 0, DType::F64).unwrap();
        let p = Tensor::randn(0f64, 1.0, (3, 4, 2, 4), &Device::Cpu).unwrap();
        let out = d.eyes.forward(&p).unwrap();
        let probs: Vec<f64> = out.prob.to_vec1().unwrap();
        assert_eq!(probs.len(), 3);
        assert!(probs.iter().all(|v| *v > 0.0 && *v < 1.0));
        assert_eq!(out.features.len(), 2);
        assert_eq!(out.features[0].dims(), &[3, 16, 2, 4]);
        assert_eq!(out.features[1].dims(), &[3, 32, 1, 2]);
    }

    #[test]
    fn mixed_regions_rejected() {
        let d = RegionDiscriminators::new(4, 0, DType::F32).unwrap();
        let p = Tensor::randn(0f32, 1.0, (2, 4, 2, 2), &Device::Cpu).unwrap();
        let pairs = [(RegionPatches::new(Region::Eyes, p.clone()), RegionPatches::new(Region::Mouth, p))];
        assert!(discriminator_loss(&d, &pairs).is_err());
    }
}
