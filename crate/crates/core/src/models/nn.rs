//! Named parameter storage, seeded initialization and the few layers the
//! models are built from.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

/// Ordered map from parameter name to variable.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, var: Var) {
        self.vars.insert(name.into(), var);
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn vars(&self) -> Vec<(String, Var)> {
        self.vars.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    pub fn num_elements(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Copies every parameter into fresh storage.
    pub fn deep_copy(&self) -> Result<Self> {
        let mut out = Self::new();
        for (k, v) in &self.vars {
            out.insert(k.clone(), Var::from_tensor(&v.as_tensor().copy()?)?);
        }
        Ok(out)
    }

    /// Flat `f32` copies of every parameter, for bit-level comparisons.
    pub fn snapshot(&self) -> Result<BTreeMap<String, Vec<f32>>> {
        self.vars
            .iter()
            .map(|(k, v)| {
                let data = v.as_tensor().to_dtype(DType::F32)?.flatten_all()?.to_vec1()?;
                Ok((k.clone(), data))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Init {
    Uniform(f64),
    Normal(f64),
    Zeros,
    Ones,
    /// Identity over the first two axes; trailing axes must have size 1.
    Eye,
}

/// Looks parameters up in a store, creating them from a seeded generator
/// when absent. With `frozen`, returned tensors are detached from autograd
/// but still share storage with the store.
pub struct ParamBuilder<'a> {
    store: &'a mut ParamStore,
    rng: Option<&'a mut ChaCha8Rng>,
    frozen: bool,
    dtype: DType,
    device: Device,
}

impl<'a> ParamBuilder<'a> {
    pub fn init(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng, dtype: DType, device: &Device) -> Self {
        Self { store, rng: Some(rng), frozen: false, dtype, device: device.clone() }
    }

    pub fn load(store: &'a mut ParamStore, frozen: bool, dtype: DType, device: &Device) -> Self {
        Self { store, rng: None, frozen, dtype, device: device.clone() }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn get(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        if let Some(var) = self.store.get(name) {
            if var.dims() != shape {
                return Err(invalid(format!(
                    "parameter {name}: expected shape {shape:?}, found {:?}",
                    var.dims()
                )));
            }
            let t = if var.dtype() == self.dtype {
                var.as_tensor().clone()
            } else {
                return Err(invalid(format!(
                    "parameter {name}: expected {:?}, found {:?}",
                    self.dtype,
                    var.dtype()
                )));
            };
            return Ok(if self.frozen { t.detach() } else { t });
        }
        let rng = self
            .rng
            .as_deref_mut()
            .ok_or_else(|| invalid(format!("missing parameter {name}")))?;
        let n: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Uniform(b) => (0..n).map(|_| rng.random_range(-b..=b)).collect(),
            Init::Normal(std) => (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect(),
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Eye => {
                if shape.len() < 2 || shape[0] != shape[1] || shape[0] * shape[1] != n {
                    return Err(invalid(format!("identity init needs a square shape, got {shape:?} for {name}")));
                }
                (0..n).map(|i| if i / shape[1] == i % shape[1] { 1.0 } else { 0.0 }).collect()
            }
        };
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.store.insert(name, var);
        Ok(if self.frozen { out.detach() } else { out })
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn new(
        pb: &mut ParamBuilder,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let bound = 1.0 / ((cin * kernel * kernel) as f64).sqrt();
        Self::with_init(pb, name, cin, cout, kernel, stride, padding, Init::Uniform(bound))
    }

    /// 1x1 convolution whose weights and bias start at exactly zero.
    pub fn zero(pb: &mut ParamBuilder, name: &str, cin: usize, cout: usize) -> Result<Self> {
        Self::with_init(pb, name, cin, cout, 1, 1, 0, Init::Zeros)
    }

    /// 1x1 convolution that starts as the identity map.
    pub fn identity(pb: &mut ParamBuilder, name: &str, channels: usize) -> Result<Self> {
        let weight = pb.get(&format!("{name}.weight"), &[channels, channels, 1, 1], Init::Eye)?;
        let bias = pb.get(&format!("{name}.bias"), &[channels], Init::Zeros)?;
        Ok(Self { weight, bias, stride: 1, padding: 0 })
    }

    /// Square-kernel convolution whose weights and bias start at exactly zero.
    pub fn zero_kernel(pb: &mut ParamBuilder, name: &str, cin: usize, cout: usize, kernel: usize, padding: usize) -> Result<Self> {
        Self::with_init(pb, name, cin, cout, kernel, 1, padding, Init::Zeros)
    }

    #[allow(clippy::too_many_arguments)]
    fn with_init(
        pb: &mut ParamBuilder,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        init: Init,
    ) -> Result<Self> {
        let weight = pb.get(&format!("{name}.weight"), &[cout, cin, kernel, kernel], init)?;
        let bias = pb.get(&format!("{name}.bias"), &[cout], init)?;
        Ok(Self { weight, bias, stride, padding })
    }

    /// Lowered to one 2-D matrix product over gathered patches, with the
    /// batch folded into the columns; this keeps the backward pass on the
    /// CPU gemm path.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (cout, cin, k, _) = self.weight.dims4()?;
        let (b, c, h, w) = x.dims4()?;
        if c != cin {
            return Err(invalid(format!("conv expects {cin} input channels, got {c}")));
        }
        let (p, s) = (self.padding, self.stride);
        let oh = (h + 2 * p - k) / s + 1;
        let ow = (w + 2 * p - k) / s + 1;
        let xt = x.transpose(0, 1)?;
        let cols = if k == 1 && s == 1 && p == 0 {
            xt.reshape((c, b * h * w))?
        } else {
            // Extra bottom/right padding so every strided window fits a
            // reshape-based subsample.
            let xp = xt.pad_with_zeros(2, p, p + s)?.pad_with_zeros(3, p, p + s)?;
            let mut patches = Vec::with_capacity(k * k);
            for ky in 0..k {
                for kx in 0..k {
                    let mut t = xp.narrow(2, ky, oh * s)?.narrow(3, kx, ow * s)?;
                    if s > 1 {
                        t = t.reshape((c, b, oh, s, ow, s))?.narrow(3, 0, 1)?.narrow(5, 0, 1)?.reshape((c, b, oh, ow))?;
                    }
                    patches.push(t);
                }
            }
            Tensor::stack(&patches, 1)?.reshape((c * k * k, b * oh * ow))?
        };
        let wm = self.weight.reshape((cout, cin * k * k))?;
        let y = wm.matmul(&cols)?.broadcast_add(&self.bias.reshape((cout, 1))?)?;
        Ok(y.reshape((cout, b, oh, ow))?.transpose(0, 1)?.contiguous()?)
    }

    pub fn detached(&self) -> Self {
        Self { weight: self.weight.detach(), bias: self.bias.detach(), ..*self }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder, name: &str, din: usize, dout: usize) -> Result<Self> {
        let bound = 1.0 / (din as f64).sqrt();
        Self::with_init(pb, name, din, dout, Init::Uniform(bound))
    }

    pub fn with_init(pb: &mut ParamBuilder, name: &str, din: usize, dout: usize, init: Init) -> Result<Self> {
        let weight = pb.get(&format!("{name}.weight"), &[dout, din], init)?;
        let bias = pb.get(&format!("{name}.bias"), &[dout], init)?;
        Ok(Self { weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }

    pub fn detached(&self) -> Self {
        Self { weight: self.weight.detach(), bias: self.bias.detach() }
    }
}

#[derive(Clone, Debug)]
pub struct GroupNorm {
    inner: candle_nn::GroupNorm,
}

impl GroupNorm {
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize, groups: usize) -> Result<Self> {
        if channels % groups != 0 {
            return Err(invalid(format!("{channels} channels not divisible into {groups} groups")));
        }
        let w = pb.get(&format!("{name}.weight"), &[channels], Init::Ones)?;
        let b = pb.get(&format!("{name}.bias"), &[channels], Init::Zeros)?;
        Ok(Self { inner: candle_nn::GroupNorm::new(w, b, channels, groups, 1e-5)? })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        use candle_core::Module;
        Ok(self.inner.forward(x)?)
    }
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok(candle_nn::ops::leaky_relu(x, slope)?)
}
