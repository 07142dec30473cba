//! Control adapter: a trainable copy of the denoiser's encoder that reads a
//! degraded image and feeds the frozen denoiser through zero-initialized
//! fusion layers.

use candle_core::{Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::codec::{LatentCodec, LatentScaling};
use super::nn::{Conv2d, ParamBuilder, ParamStore};
use super::unet::{Denoiser, Encoder, UNetConfig, ENCODER_PREFIX};
use crate::error::{invalid, Result};

/// One feature map per injection site, in site order.
#[derive(Clone, Debug)]
pub struct ControlFeatures(Vec<Tensor>);

impl ControlFeatures {
    pub fn new(features: Vec<Tensor>) -> Self {
        Self(features)
    }

    pub fn features(&self) -> &[Tensor] {
        &self.0
    }

    pub(crate) fn check_against(&self, sites: &[Tensor]) -> Result<()> {
        if self.0.len() != sites.len() {
            return Err(invalid(format!("{} control features for {} sites", self.0.len(), sites.len())));
        }
        for (i, (c, s)) in self.0.iter().zip(sites).enumerate() {
            if c.dims() != s.dims() {
                return Err(invalid(format!("control site {i}: {:?} vs {:?}", c.dims(), s.dims())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ControlAdapter {
    cfg: UNetConfig,
    vocab_len: usize,
    codec: LatentCodec,
    scaling: LatentScaling,
    store: ParamStore,
    encoder: Encoder,
    cond: Vec<Conv2d>,
    fusion: Vec<Conv2d>,
}

fn build_head(pb: &mut ParamBuilder, cfg: &UNetConfig) -> Result<(Vec<Conv2d>, Vec<Conv2d>)> {
    let base = cfg.base_channels;
    let cond = vec![
        Conv2d::new(pb, "cond.0", cfg.latent_channels, base, 3, 1, 1)?,
        Conv2d::new(pb, "cond.1", base, base, 3, 1, 1)?,
        Conv2d::new(pb, "cond.2", base, base, 3, 1, 1)?,
    ];
    let fusion = cfg
        .injection_sites()
        .iter()
        .enumerate()
        .map(|(i, (c, _))| Conv2d::zero(pb, &format!("fusion.{i}"), *c, *c))
        .collect::<Result<Vec<_>>>()?;
    Ok((cond, fusion))
}

/// Copies the denoiser's encoder by value, zeroes the fusion layers and
/// draws the conditioning stack from `seed`.
pub fn init_adapter_from_denoiser(d: &Denoiser, seed: u64) -> Result<ControlAdapter> {
    let mut store = ParamStore::new();
    for (name, var) in d.params().iter() {
        if name.starts_with(ENCODER_PREFIX) {
            store.insert(name.clone(), Var::from_tensor(&var.as_tensor().copy()?)?);
        }
    }
    let cfg = d.config().clone();
    let vocab_len = d.vocab().len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (encoder, cond, fusion) = {
        let mut pb = ParamBuilder::init(&mut store, &mut rng, d.dtype(), &Device::Cpu);
        let encoder = Encoder::new(&mut pb, &cfg, vocab_len)?;
        let (cond, fusion) = build_head(&mut pb, &cfg)?;
        (encoder, cond, fusion)
    };
    Ok(ControlAdapter {
        cfg,
        vocab_len,
        codec: LatentCodec::default(),
        scaling: LatentScaling::default(),
        store,
        encoder,
        cond,
        fusion,
    })
}

impl ControlAdapter {
    pub fn from_store(cfg: UNetConfig, vocab_len: usize, scaling: LatentScaling, mut store: ParamStore) -> Result<Self> {
        cfg.validate()?;
        let dtype = store
            .iter()
            .next()
            .map(|(_, v)| v.dtype())
            .ok_or_else(|| invalid("empty adapter parameter store"))?;
        let (encoder, cond, fusion) = {
            let mut pb = ParamBuilder::load(&mut store, false, dtype, &Device::Cpu);
            let encoder = Encoder::new(&mut pb, &cfg, vocab_len)?;
            let (cond, fusion) = build_head(&mut pb, &cfg)?;
            (encoder, cond, fusion)
        };
        Ok(Self { cfg, vocab_len, codec: LatentCodec::default(), scaling, store, encoder, cond, fusion })
    }

    pub fn with_scaling(mut self, scaling: LatentScaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn scaling(&self) -> LatentScaling {
        self.scaling
    }

    pub fn config(&self) -> &UNetConfig {
        &self.cfg
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab_len
    }

    /// Raw fusion-layer inputs mapped through the fusion layers, for inspection.
    pub fn fuse(&self, site: usize, x: &Tensor) -> Result<Tensor> {
        self.fusion
            .get(site)
            .ok_or_else(|| invalid(format!("no injection site {site}")))?
            .forward(x)
    }

    /// `degraded` is a `(B, 3, H, W)` pixel batch in `[0, 1]` matching `z_t` under factor 8.
    pub fn control_features(&self, degraded: &Tensor, z_t: &Tensor, ts: &[usize]) -> Result<ControlFeatures> {
        let (b, _, h, w) = degraded.dims4()?;
        let (zb, _, zh, zw) = z_t.dims4()?;
        let f = self.codec.spatial_factor;
        if b != zb || h != zh * f || w != zw * f {
            return Err(invalid(format!(
                "degraded batch {:?} inconsistent with latent {:?}",
                degraded.dims(),
                z_t.dims()
            )));
        }
        if ts.len() != b {
            return Err(invalid(format!("{} timesteps for batch of {b}", ts.len())));
        }
        self.cfg.check_latent(z_t)?;
        let mut c = self.scaling.to_model(&self.codec.encode_tensor(degraded)?)?;
        for (i, conv) in self.cond.iter().enumerate() {
            c = conv.forward(&c)?;
            if i + 1 < self.cond.len() {
                c = c.silu()?;
            }
        }
        let null = vec![vec![0usize]; b];
        let temb = self.encoder.embed(ts, &null)?;
        let sites = self.encoder.forward(z_t, &temb, Some(&c))?;
        let feats = sites
            .iter()
            .zip(&self.fusion)
            .map(|(s, f)| f.forward(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(ControlFeatures(feats))
    }
}
