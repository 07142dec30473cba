//! A small UNet noise predictor with timestep and tag conditioning.

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adapter::ControlFeatures;
use super::codec::LATENT_CHANNELS;
use super::nn::{Conv2d, GroupNorm, Init, Linear, ParamBuilder, ParamStore};
use super::tags::{TagSet, TagVocab};
use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct UNetConfig {
    pub latent_channels: usize,
    pub base_channels: usize,
    pub channel_mult: Vec<usize>,
    pub time_embed_dim: usize,
    pub norm_groups: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            latent_channels: LATENT_CHANNELS,
            base_channels: 64,
            channel_mult: vec![1, 2, 4],
            time_embed_dim: 128,
            norm_groups: 8,
        }
    }
}

impl UNetConfig {
    pub fn level_channels(&self) -> Vec<usize> {
        self.channel_mult.iter().map(|m| m * self.base_channels).collect()
    }

    /// `(channels, downsampling)` of every control injection site: one per
    /// encoder level plus the bottleneck.
    pub fn injection_sites(&self) -> Vec<(usize, usize)> {
        let ch = self.level_channels();
        let mut sites: Vec<_> = ch.iter().enumerate().map(|(i, c)| (*c, 1 << i)).collect();
        sites.push((*ch.last().unwrap(), 1 << (ch.len() - 1)));
        sites
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_mult.is_empty() || self.base_channels == 0 || self.time_embed_dim == 0 {
            return Err(invalid("UNet needs at least one level and positive widths"));
        }
        if self.base_channels % 2 != 0 {
            return Err(invalid("base_channels must be even for the sinusoidal embedding"));
        }
        for c in self.level_channels() {
            if c % self.norm_groups != 0 {
                return Err(invalid(format!("{c} channels not divisible by {} groups", self.norm_groups)));
            }
        }
        Ok(())
    }

    pub fn check_latent(&self, z: &Tensor) -> Result<()> {
        let (_, c, h, w) = z.dims4()?;
        let f = 1 << (self.channel_mult.len() - 1);
        if c != self.latent_channels || h % f != 0 || w % f != 0 {
            return Err(invalid(format!(
                "latent {:?} incompatible with {} channels and {f}x downsampling",
                z.dims(),
                self.latent_channels
            )));
        }
        Ok(())
    }
}

fn sinusoidal(ts: &[usize], dim: usize, device: &Device, dtype: DType) -> Result<Tensor> {
    let half = dim / 2;
    let mut v = Vec::with_capacity(ts.len() * dim);
    for &t in ts {
        let freqs = (0..half).map(|i| (-(10000f64.ln()) * i as f64 / half as f64).exp() * t as f64);
        let (s, c): (Vec<f64>, Vec<f64>) = freqs.map(|a| (a.sin(), a.cos())).unzip();
        v.extend(c);
        v.extend(s);
    }
    Ok(Tensor::from_vec(v, (ts.len(), dim), device)?.to_dtype(dtype)?)
}

#[derive(Clone, Debug)]
struct ResBlock {
    norm1: GroupNorm,
    conv1: Conv2d,
    temb: Linear,
    norm2: GroupNorm,
    conv2: Conv2d,
    skip: Option<Conv2d>,
}

impl ResBlock {
    fn new(pb: &mut ParamBuilder, name: &str, cin: usize, cout: usize, temb: usize, groups: usize) -> Result<Self> {
        Ok(Self {
            norm1: GroupNorm::new(pb, &format!("{name}.norm1"), cin, groups)?,
            conv1: Conv2d::new(pb, &format!("{name}.conv1"), cin, cout, 3, 1, 1)?,
            temb: Linear::new(pb, &format!("{name}.temb"), temb, cout)?,
            norm2: GroupNorm::new(pb, &format!("{name}.norm2"), cout, groups)?,
            conv2: Conv2d::new(pb, &format!("{name}.conv2"), cout, cout, 3, 1, 1)?,
            skip: if cin != cout {
                Some(Conv2d::new(pb, &format!("{name}.skip"), cin, cout, 1, 1, 0)?)
            } else {
                None
            },
        })
    }

    fn forward(&self, x: &Tensor, temb: &Tensor) -> Result<Tensor> {
        let h = self.conv1.forward(&self.norm1.forward(x)?.silu()?)?;
        let t = self.temb.forward(&temb.silu()?)?.unsqueeze(2)?.unsqueeze(3)?;
        let h = h.broadcast_add(&t)?;
        let h = self.conv2.forward(&self.norm2.forward(&h)?.silu()?)?;
        let skip = match &self.skip {
            Some(s) => s.forward(x)?,
            None => x.clone(),
        };
        Ok((h + skip)?)
    }
}

/// The half of the UNet that a control adapter copies: embeddings, input
/// convolution, downsampling levels and the bottleneck block.
#[derive(Clone, Debug)]
pub(crate) struct Encoder {
    base_channels: usize,
    time1: Linear,
    time2: Linear,
    tag_table: Tensor,
    conv_in: Conv2d,
    levels: Vec<(ResBlock, Option<Conv2d>)>,
    mid: ResBlock,
}

pub(crate) const ENCODER_PREFIX: &str = "enc.";

impl Encoder {
    pub(crate) fn new(pb: &mut ParamBuilder, cfg: &UNetConfig, vocab_len: usize) -> Result<Self> {
        let temb = cfg.time_embed_dim;
        let ch = cfg.level_channels();
        let time1 = Linear::new(pb, "enc.time1", cfg.base_channels, temb)?;
        let time2 = Linear::new(pb, "enc.time2", temb, temb)?;
        let tag_table = pb.get("enc.tags", &[vocab_len + 1, temb], Init::Normal(0.02))?;
        let conv_in = Conv2d::new(pb, "enc.conv_in", cfg.latent_channels, ch[0], 3, 1, 1)?;
        let mut levels = Vec::new();
        let mut cin = ch[0];
        for (i, &c) in ch.iter().enumerate() {
            let res = ResBlock::new(pb, &format!("enc.down{i}.res"), cin, c, temb, cfg.norm_groups)?;
            let down = if i + 1 < ch.len() {
                Some(Conv2d::new(pb, &format!("enc.down{i}.down"), c, c, 3, 2, 1)?)
            } else {
                None
            };
            levels.push((res, down));
            cin = c;
        }
        let mid = ResBlock::new(pb, "enc.mid", cin, cin, temb, cfg.norm_groups)?;
        Ok(Self { base_channels: cfg.base_channels, time1, time2, tag_table, conv_in, levels, mid })
    }

    /// Time embedding plus the mean tag embedding of each sample.
    pub(crate) fn embed(&self, ts: &[usize], tag_rows: &[Vec<usize>]) -> Result<Tensor> {
        let dev = self.tag_table.device();
        let dtype = self.tag_table.dtype();
        let t = sinusoidal(ts, self.base_channels, dev, dtype)?;
        let t = self.time2.forward(&self.time1.forward(&t)?.silu()?)?;
        let rows = self.tag_table.dim(0)?;
        let mut avg = vec![0f64; ts.len() * rows];
        for (b, r) in tag_rows.iter().enumerate() {
            for &i in r {
                avg[b * rows + i] += 1.0 / r.len() as f64;
            }
        }
        let avg = Tensor::from_vec(avg, (ts.len(), rows), dev)?.to_dtype(dtype)?;
        Ok((t + avg.matmul(&self.tag_table)?)?)
    }

    /// Returns the per-site features (level outputs, then the bottleneck).
    /// `extra` is added right after the input convolution.
    pub(crate) fn forward(&self, z: &Tensor, temb: &Tensor, extra: Option<&Tensor>) -> Result<Vec<Tensor>> {
        let mut h = self.conv_in.forward(z)?;
        if let Some(e) = extra {
            h = (h + e)?;
        }
        let mut sites = Vec::with_capacity(self.levels.len() + 1);
        for (res, down) in &self.levels {
            h = res.forward(&h, temb)?;
            sites.push(h.clone());
            if let Some(d) = down {
                h = d.forward(&h)?;
            }
        }
        sites.push(self.mid.forward(&h, temb)?);
        Ok(sites)
    }
}

#[derive(Clone, Debug)]
struct Decoder {
    levels: Vec<(ResBlock, Option<Conv2d>)>,
    norm_out: GroupNorm,
    conv_out: Conv2d,
    /// Latent-to-output shortcut with a per-timestep gain. The base width is
    /// far below the latent channel count, so the noise cannot pass through
    /// the network body alone.
    shortcut: Conv2d,
    shortcut_gain: Linear,
}

impl Decoder {
    fn new(pb: &mut ParamBuilder, cfg: &UNetConfig) -> Result<Self> {
        let ch = cfg.level_channels();
        let mut levels = Vec::new();
        let mut cin = *ch.last().unwrap();
        for i in (0..ch.len()).rev() {
            let res = ResBlock::new(pb, &format!("dec.up{i}.res"), cin + ch[i], ch[i], cfg.time_embed_dim, cfg.norm_groups)?;
            let up = if i > 0 {
                Some(Conv2d::new(pb, &format!("dec.up{i}.up"), ch[i], ch[i], 3, 1, 1)?)
            } else {
                None
            };
            levels.push((res, up));
            cin = ch[i];
        }
        Ok(Self {
            levels,
            norm_out: GroupNorm::new(pb, "dec.norm_out", ch[0], cfg.norm_groups)?,
            conv_out: Conv2d::zero_kernel(pb, "dec.conv_out", ch[0], cfg.latent_channels, 3, 1)?,
            shortcut: Conv2d::identity(pb, "dec.shortcut", cfg.latent_channels)?,
            shortcut_gain: Linear::with_init(pb, "dec.shortcut_gain", cfg.time_embed_dim, 1, Init::Zeros)?,
        })
    }

    fn forward(&self, z: &Tensor, mut sites: Vec<Tensor>, temb: &Tensor) -> Result<Tensor> {
        let mut h = sites.pop().expect("bottleneck feature");
        for (res, up) in &self.levels {
            let skip = sites.pop().expect("one skip per level");
            h = res.forward(&Tensor::cat(&[&h, &skip], 1)?, temb)?;
            if let Some(u) = up {
                let (_, _, hh, ww) = h.dims4()?;
                h = u.forward(&h.upsample_nearest2d(hh * 2, ww * 2)?)?;
            }
        }
        let out = self.conv_out.forward(&self.norm_out.forward(&h)?.silu()?)?;
        let gain = (self.shortcut_gain.forward(&temb.silu()?)? + 1.0)?.unsqueeze(2)?.unsqueeze(3)?;
        Ok((out + self.shortcut.forward(z)?.broadcast_mul(&gain)?)?)
    }
}

/// Noise predictor over codec latents.
#[derive(Clone, Debug)]
pub struct Denoiser {
    cfg: UNetConfig,
    vocab: TagVocab,
    store: ParamStore,
    frozen: bool,
    dtype: DType,
    pub(crate) encoder: Encoder,
    decoder: Decoder,
}

impl Denoiser {
    /// Fresh weights drawn from `seed`.
    pub fn new(cfg: UNetConfig, vocab: TagVocab, seed: u64, dtype: DType) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (encoder, decoder) = {
            let mut pb = ParamBuilder::init(&mut store, &mut rng, dtype, &Device::Cpu);
            (Encoder::new(&mut pb, &cfg, vocab.len())?, Decoder::new(&mut pb, &cfg)?)
        };
        Ok(Self { cfg, vocab, store, frozen: false, dtype, encoder, decoder })
    }

    /// Builds the network over existing parameters; every name must be present.
    pub fn from_store(cfg: UNetConfig, vocab: TagVocab, mut store: ParamStore, frozen: bool) -> Result<Self> {
        cfg.validate()?;
        let dtype = store.iter().next().map(|(_, v)| v.dtype()).unwrap_or(DType::F32);
        let (encoder, decoder) = {
            let mut pb = ParamBuilder::load(&mut store, frozen, dtype, &Device::Cpu);
            (Encoder::new(&mut pb, &cfg, vocab.len())?, Decoder::new(&mut pb, &cfg)?)
        };
        Ok(Self { cfg, vocab, store, frozen, dtype, encoder, decoder })
    }

    /// Same weights, detached from autograd. No optimizer should be built over a frozen denoiser.
    pub fn freeze(self) -> Result<Self> {
        Self::from_store(self.cfg, self.vocab, self.store, true)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn config(&self) -> &UNetConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &TagVocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn tag_rows(&self, tags: &[TagSet], batch: usize) -> Result<Vec<Vec<usize>>> {
        match tags.len() {
            1 => Ok(vec![self.vocab.rows(&tags[0])?; batch]),
            n if n == batch => tags.iter().map(|t| self.vocab.rows(t)).collect(),
            n => Err(invalid(format!("{n} tag sets for a batch of {batch}"))),
        }
    }

    /// Predicts the noise in a `(B, C, h, w)` latent. `tags` holds one set per
    /// sample or a single set shared by the batch.
    pub fn forward(
        &self,
        z_t: &Tensor,
        ts: &[usize],
        tags: &[TagSet],
        control: Option<&ControlFeatures>,
    ) -> Result<Tensor> {
        self.cfg.check_latent(z_t)?;
        let b = z_t.dim(0)?;
        if ts.len() != b {
            return Err(invalid(format!("{} timesteps for batch of {b}", ts.len())));
        }
        let rows = self.tag_rows(tags, b)?;
        let temb = self.encoder.embed(ts, &rows)?;
        let mut sites = self.encoder.forward(z_t, &temb, None)?;
        if let Some(ctrl) = control {
            ctrl.check_against(&sites)?;
            for (s, c) in sites.iter_mut().zip(ctrl.features()) {
                *s = (&*s + c)?;
            }
        }
        self.decoder.forward(z_t, sites, &temb)
    }

    /// Single-latent convenience wrapper around [`Denoiser::forward`].
    pub fn denoise(&self, z_t: &Tensor, t: usize, tags: &TagSet, control: Option<&ControlFeatures>) -> Result<Tensor> {
        let batched = z_t.rank() == 3;
        let z = if batched { z_t.unsqueeze(0)? } else { z_t.clone() };
        let ts = vec![t; z.dim(0)?];
        let out = self.forward(&z, &ts, std::slice::from_ref(tags), control)?;
        Ok(if batched { out.squeeze(0)? } else { out })
    }
}
