//! Procedural portraits with exact landmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::facial::LandmarkSet;
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeBand {
    Child,
    YoungAdult,
    MiddleAged,
    Elderly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expression {
    Neutral,
    Smiling,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lighting {
    Soft,
    Hard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    Sharp,
    Soft,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkinTexture {
    Smooth,
    Detailed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Makeup {
    None,
    Natural,
    RedLipstick,
}

/// Every choice the generator made for one face. Geometry is in pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceParams {
    pub size: usize,
    pub age: AgeBand,
    pub glasses: bool,
    pub expression: Expression,
    pub lighting: Lighting,
    pub focus: Focus,
    pub skin: SkinTexture,
    pub makeup: Makeup,
    pub head_center: [f64; 2],
    pub head_radii: [f64; 2],
    pub eye_spacing: f64,
    pub eye_y: f64,
    pub eye_radii: [f64; 2],
    pub mouth_y: f64,
    pub mouth_half_width: f64,
    pub light_angle: f64,
    pub skin_tone: [f32; 3],
    pub hair_color: [f32; 3],
    pub iris_color: [f32; 3],
    pub background: [f32; 3],
    pub texture_seed: u64,
}

impl FaceParams {
    pub fn landmarks(&self) -> LandmarkSet {
        let cx = self.head_center[0];
        LandmarkSet {
            left_eye: [cx - self.eye_spacing, self.eye_y],
            right_eye: [cx + self.eye_spacing, self.eye_y],
            mouth: [cx, self.mouth_y],
        }
    }

    pub fn face_area_fraction(&self) -> f64 {
        let a = std::f64::consts::PI * self.head_radii[0] * self.head_radii[1];
        (a / (self.size * self.size) as f64).min(1.0)
    }

    pub fn inside_head(&self, p: [f64; 2]) -> bool {
        let dx = (p[0] - self.head_center[0]) / self.head_radii[0];
        let dy = (p[1] - self.head_center[1]) / self.head_radii[1];
        dx * dx + dy * dy < 1.0
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedFace {
    pub image: Image,
    pub landmarks: LandmarkSet,
    pub params: FaceParams,
    /// Declared by the generator from its focus and texture settings.
    pub quality_score: f64,
}

const SKIN_TONES: [[f32; 3]; 5] = [
    [0.96, 0.80, 0.69],
    [0.88, 0.67, 0.53],
    [0.76, 0.55, 0.40],
    [0.55, 0.38, 0.26],
    [0.40, 0.27, 0.18],
];
const HAIR: [[f32; 3]; 5] = [
    [0.10, 0.07, 0.05],
    [0.35, 0.22, 0.12],
    [0.62, 0.45, 0.25],
    [0.55, 0.20, 0.08],
    [0.20, 0.18, 0.17],
];
const IRIS: [[f32; 3]; 4] = [[0.30, 0.18, 0.08], [0.20, 0.35, 0.55], [0.25, 0.40, 0.25], [0.12, 0.08, 0.05]];

fn jitter(rng: &mut ChaCha8Rng, c: [f32; 3], amount: f32) -> [f32; 3] {
    c.map(|v| (v + rng.random_range(-amount..=amount)).clamp(0.0, 1.0))
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, xs: &[T]) -> T {
    xs[rng.random_range(0..xs.len())]
}

pub fn sample_face_params(seed: u64, size: usize) -> Result<FaceParams> {
    if size < 64 || size % 8 != 0 {
        return Err(invalid(format!("face size must be a multiple of 8 and at least 64, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size as f64;
    let age = pick(&mut rng, &[AgeBand::Child, AgeBand::YoungAdult, AgeBand::MiddleAged, AgeBand::Elderly]);
    // Occasional zoomed-out shots exercise the small-face filter.
    let zoom = if rng.random_bool(0.12) { rng.random_range(0.4..0.55) } else { 1.0 };
    let cx = n * (0.5 + rng.random_range(-0.04..0.04));
    let cy = n * (0.52 + rng.random_range(-0.03..0.03));
    let rx = n * rng.random_range(0.27..0.33) * zoom * if age == AgeBand::Child { 0.95 } else { 1.0 };
    let ry = rx * rng.random_range(1.15..1.3);
    let eye_spacing = rx * rng.random_range(0.36..0.44);
    let eye_y = cy - ry * rng.random_range(0.12..0.22);
    let erw = rx * rng.random_range(0.16..0.2);
    let eye_radii = [erw, erw * rng.random_range(0.5..0.62)];
    let mouth_y = cy + ry * rng.random_range(0.42..0.52);
    let mouth_half_width = rx * rng.random_range(0.28..0.38);
    let mut hair = pick(&mut rng, &HAIR);
    if age == AgeBand::Elderly {
        hair = [0.78, 0.77, 0.75];
    }
    let makeup = pick(&mut rng, &[Makeup::None, Makeup::Natural, Makeup::RedLipstick]);
    let skin_tone = pick(&mut rng, &SKIN_TONES);
    let iris = pick(&mut rng, &IRIS);
    Ok(FaceParams {
        size,
        age,
        glasses: rng.random_bool(0.25),
        expression: pick(&mut rng, &[Expression::Neutral, Expression::Smiling]),
        lighting: pick(&mut rng, &[Lighting::Soft, Lighting::Hard]),
        focus: if rng.random_bool(0.75) { Focus::Sharp } else { Focus::Soft },
        skin: pick(&mut rng, &[SkinTexture::Smooth, SkinTexture::Detailed]),
        makeup,
        head_center: [cx, cy],
        head_radii: [rx, ry],
        eye_spacing,
        eye_y,
        eye_radii,
        mouth_y,
        mouth_half_width,
        light_angle: rng.random_range(-2.5..-0.6),
        skin_tone: jitter(&mut rng, skin_tone, 0.04),
        hair_color: jitter(&mut rng, hair, 0.04),
        iris_color: jitter(&mut rng, iris, 0.05),
        background: [rng.random_range(0.2..0.9), rng.random_range(0.2..0.9), rng.random_range(0.2..0.9)],
        texture_seed: rng.random(),
    })
}

/// Deterministic lattice noise in `[-1, 1]`, bilinearly interpolated.
fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    fn lattice(seed: u64, i: i64, j: i64) -> f64 {
        let mut h = seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
        h = (h ^ (h >> 33)).wrapping_mul(0xFF51_AFD7_ED55_8CCD);
        h ^= h >> 33;
        (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }
    let (i, j) = (x.floor() as i64, y.floor() as i64);
    let (fx, fy) = (x - x.floor(), y - y.floor());
    let a = lattice(seed, i, j) * (1.0 - fx) + lattice(seed, i + 1, j) * fx;
    let b = lattice(seed, i, j + 1) * (1.0 - fx) + lattice(seed, i + 1, j + 1) * fx;
    a * (1.0 - fy) + b * fy
}

fn mix(a: [f32; 3], b: [f32; 3], t: f64) -> [f32; 3] {
    let t = t.clamp(0.0, 1.0) as f32;
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

fn scale(c: [f32; 3], k: f64) -> [f32; 3] {
    c.map(|v| (v as f64 * k) as f32)
}

fn shade(p: &FaceParams, x: f64, y: f64) -> [f32; 3] {
    let n = p.size as f64;
    let [cx, cy] = p.head_center;
    let [rx, ry] = p.head_radii;
    let mut c = scale(p.background, 0.85 + 0.15 * y / n);

    // Hair mass behind the head.
    let hx = (x - cx) / (rx * 1.14);
    let hy = (y - (cy - ry * 0.1)) / (ry * 1.1);
    if hx * hx + hy * hy < 1.0 && y < cy + ry * 0.35 {
        let strand = 0.9 + 0.1 * value_noise(p.texture_seed ^ 7, x * 0.9, y * 0.15);
        c = scale(p.hair_color, strand);
    }

    let dx = (x - cx) / rx;
    let dy = (y - cy) / ry;
    let r2 = dx * dx + dy * dy;
    if r2 >= 1.0 {
        return c;
    }
    let (lx, ly) = (p.light_angle.cos(), p.light_angle.sin());
    let k = match p.lighting {
        Lighting::Soft => 0.1,
        Lighting::Hard => 0.32,
    };
    let amp = match p.skin {
        SkinTexture::Smooth => 0.015,
        SkinTexture::Detailed => 0.06,
    };
    let grain = value_noise(p.texture_seed, x * 1.3, y * 1.3) + 0.5 * value_noise(p.texture_seed ^ 3, x * 0.35, y * 0.35);
    let lit = 1.0 + k * (dx * lx + dy * ly) - 0.12 * r2 * r2 + amp * grain;
    let mut c = scale(p.skin_tone, lit);

    // Fringe.
    let wave = 0.04 * (x / n * 40.0).sin();
    if dy < -0.62 + wave + 0.12 * dx * dx {
        return scale(p.hair_color, 0.95);
    }

    if p.age == AgeBand::Elderly {
        for line in [-0.5, -0.42] {
            if (dy - line - 0.03 * dx * dx).abs() < 0.5 / ry && dx.abs() < 0.45 {
                c = scale(c, 0.85);
            }
        }
    }

    // Nose shading.
    let ny = (y - (p.eye_y + p.mouth_y) / 2.0) / (ry * 0.18);
    let nx = (x - cx - rx * 0.06) / (rx * 0.07);
    if nx * nx + ny * ny < 1.0 {
        c = scale(c, 0.9);
    }

    let [erw, erh] = p.eye_radii;
    for side in [-1.0, 1.0] {
        let ex = cx + side * p.eye_spacing;
        let ey = p.eye_y;
        // Eyebrow arc.
        let bx = (x - ex) / (erw * 1.3);
        let brow_y = ey - erh * 2.1 - erh * 0.5 * (1.0 - bx * bx);
        if bx.abs() < 1.0 && (y - brow_y).abs() < erh * 0.32 + 0.35 {
            c = scale(p.hair_color, 0.8);
        }
        let u = (x - ex) / erw;
        let v = (y - ey) / erh;
        let e2 = u * u + v * v;
        if e2 < 1.0 {
            c = [0.93, 0.92, 0.9];
            let ir = (x - ex).hypot(y - ey);
            if ir < erh * 0.95 {
                c = p.iris_color;
                if ir < erh * 0.42 {
                    c = [0.03, 0.03, 0.03];
                }
                if ((x - ex + erh * 0.3).hypot(y - ey + erh * 0.3)) < erh * 0.18 {
                    c = [0.97, 0.97, 0.97];
                }
            }
        }
        if (0.82..1.25).contains(&e2) && v < 0.3 {
            c = [0.08, 0.06, 0.05];
        }
        if p.glasses {
            let g = (x - ex).hypot((y - ey) * 1.2);
            if (g - erw * 1.55).abs() < 0.55 {
                c = [0.1, 0.1, 0.12];
            }
        }
    }
    if p.glasses {
        let bridge_half = p.eye_spacing - p.eye_radii[0] * 1.55;
        if (x - cx).abs() < bridge_half && (y - p.eye_y + p.eye_radii[1] * 0.4).abs() < 0.5 {
            c = [0.1, 0.1, 0.12];
        }
    }

    // Mouth: lips between an upper and a lower curve, with a lip line.
    let mx = (x - cx) / p.mouth_half_width;
    if mx.abs() < 1.0 {
        let curve = match p.expression {
            Expression::Neutral => 0.0,
            Expression::Smiling => -p.mouth_half_width * 0.28 * mx * mx,
        };
        let lip_h = p.mouth_half_width * 0.32 * (1.0 - mx * mx).sqrt();
        let mid = p.mouth_y + curve;
        let lip = match p.makeup {
            Makeup::RedLipstick => [0.72, 0.08, 0.12],
            Makeup::Natural => mix(p.skin_tone, [0.75, 0.35, 0.38], 0.55),
            Makeup::None => mix(p.skin_tone, [0.6, 0.3, 0.3], 0.35),
        };
        if y > mid - lip_h * 0.8 && y < mid + lip_h * 1.1 {
            c = scale(lip, 0.95 + 0.05 * (1.0 - mx.abs()));
        }
        if (y - mid).abs() < 0.45 + lip_h * 0.08 {
            c = scale(lip, 0.35);
        }
    }
    c
}

/// Renders `params` with 2x2 supersampling.
pub fn render_face(params: &FaceParams) -> Image {
    let n = params.size;
    let mut img = Image::from_fn(n, n, |x, y| {
        let mut acc = [0f32; 3];
        for (ox, oy) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
            let c = shade(params, x as f64 + ox, y as f64 + oy);
            for i in 0..3 {
                acc[i] += c[i] * 0.25;
            }
        }
        acc
    });
    if params.focus == Focus::Soft {
        img = Image::from_rgb32f(&image::imageops::blur(&img.to_rgb32f(), 0.9 * n as f32 / 64.0));
    }
    img.clamp01()
}

/// Draws a face from `seed` at `size x size` pixels.
pub fn gen_face(seed: u64, size: usize) -> Result<GeneratedFace> {
    let params = sample_face_params(seed, size)?;
    let image = render_face(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(params.texture_seed ^ 0x51);
    let quality_score = match params.focus {
        Focus::Sharp => rng.random_range(0.6..1.0),
        Focus::Soft => rng.random_range(0.2..0.55),
    };
    Ok(GeneratedFace { landmarks: params.landmarks(), image, params, quality_score })
}
