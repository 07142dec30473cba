//! Fréchet distance between Gaussian fits of image embeddings.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::image::Image;

/// A fixed random convolutional embedder: two stride-2 3x3 convolutions
/// with tanh, per-channel spatial mean and RMS pooling, then a linear map
/// to `dim` outputs. Weights depend only on the seed.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor {
    dim: usize,
    conv1: Vec<f64>,
    conv2: Vec<f64>,
    proj: Vec<f64>,
}

const C1: usize = 16;
const C2: usize = 32;

fn conv3x3_s2(x: &[f64], cin: usize, h: usize, w: usize, weights: &[f64], cout: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = vec![0.0; cout * oh * ow];
    for o in 0..cout {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for c in 0..cin {
                    for ky in 0..3 {
                        let iy = (2 * oy + ky) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += weights[((o * cin + c) * 3 + ky) * 3 + kx] * x[(c * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = acc.tanh();
            }
        }
    }
    (out, oh, ow)
}

impl FeatureExtractor {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
            let b = (3.0 / fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-b..b)).collect()
        };
        let conv1 = draw(C1 * 3 * 9, 3 * 9);
        let conv2 = draw(C2 * C1 * 9, C1 * 9);
        let proj = draw(dim * 2 * C2, 2 * C2);
        Self { dim, conv1, conv2, proj }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed(&self, img: &Image) -> Vec<f64> {
        let (w, h) = (img.width(), img.height());
        let mut x = vec![0.0; 3 * h * w];
        for yy in 0..h {
            for xx in 0..w {
                let p = img.pixel(xx, yy);
                for c in 0..3 {
                    // Centered input.
                    x[(c * h + yy) * w + xx] = 2.0 * p[c] as f64 - 1.0;
                }
            }
        }
        let (a, h1, w1) = conv3x3_s2(&x, 3, h, w, &self.conv1, C1);
        let (b, h2, w2) = conv3x3_s2(&a, C1, h1, w1, &self.conv2, C2);
        let n = (h2 * w2) as f64;
        let mut pooled = Vec::with_capacity(2 * C2);
        for c in 0..C2 {
            let ch = &b[c * h2 * w2..(c + 1) * h2 * w2];
            pooled.push(ch.iter().sum::<f64>() / n);
            pooled.push((ch.iter().map(|v| v * v).sum::<f64>() / n).sqrt());
        }
        (0..self.dim)
            .map(|o| self.proj[o * 2 * C2..(o + 1) * 2 * C2].iter().zip(&pooled).map(|(w, v)| w * v).sum())
            .collect()
    }
}

/// Sample mean and unbiased covariance of row vectors.
pub fn gaussian_fit(features: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = features.len();
    let d = features.first().map(Vec::len).ok_or_else(|| invalid("empty feature set"))?;
    if n < 2 || features.iter().any(|f| f.len() != d) {
        return Err(invalid("need at least two feature vectors of equal length"));
    }
    let m = DMatrix::from_fn(n, d, |i, j| features[i][j]);
    let mu = DVector::from_fn(d, |j, _| m.column(j).sum() / n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| m[(i, j)] - mu[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    Ok((mu, cov))
}

/// Symmetric PSD square root; negative eigenvalues are clamped to zero.
pub fn sqrtm_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let e = sym.symmetric_eigen();
    let s = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &e.eigenvectors * s * e.eigenvectors.transpose()
}

/// `|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2))`, clamped at zero.
///
/// The trace of the product root is evaluated as the sum of square roots of
/// the eigenvalues of `S_a^(1/2) S_b S_a^(1/2)`, which shares its spectrum
/// with `S_a S_b` but is symmetric.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let (mu_a, s_a) = gaussian_fit(a)?;
    let (mu_b, s_b) = gaussian_fit(b)?;
    if mu_a.len() != mu_b.len() {
        return Err(invalid("feature dimensions differ"));
    }
    let ra = sqrtm_psd(&s_a);
    let m = &ra * &s_b * &ra;
    let m = (&m + m.transpose()) * 0.5;
    let tr_root: f64 = m.symmetric_eigen().eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    let d = (mu_a - mu_b).norm_squared() + s_a.trace() + s_b.trace() - 2.0 * tr_root;
    Ok(d.max(0.0))
}

/// FID under `fx`; each corpus needs more than `fx.dim()` images.
pub fn feature_fid(a: &[Image], b: &[Image], fx: &FeatureExtractor) -> Result<f64> {
    for (name, set) in [("first", a), ("second", b)] {
        if set.len() < fx.dim() + 1 {
            return Err(invalid(format!(
                "{name} corpus has {} images; at least {} are needed for {}-dimensional features",
                set.len(),
                fx.dim() + 1,
                fx.dim()
            )));
        }
    }
    let fa: Vec<_> = a.iter().map(|i| fx.embed(i)).collect();
    let fb: Vec<_> = b.iter().map(|i| fx.embed(i)).collect();
    frechet_distance(&fa, &fb)
}
