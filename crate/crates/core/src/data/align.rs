//! Similarity alignment of faces onto a canonical landmark template.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::facial::LandmarkSet;
use crate::image::Image;

/// Canonical landmark positions, given as fractions of the output size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTemplate {
    pub left_eye: [f64; 2],
    pub right_eye: [f64; 2],
    pub mouth: [f64; 2],
    pub width: usize,
    pub height: usize,
}

impl AlignmentTemplate {
    pub fn standard(width: usize, height: usize) -> Self {
        Self { left_eye: [0.35, 0.40], right_eye: [0.65, 0.40], mouth: [0.50, 0.72], width, height }
    }

    /// Template points in output pixel coordinates.
    pub fn landmarks(&self) -> LandmarkSet {
        let (w, h) = (self.width as f64, self.height as f64);
        let s = |p: [f64; 2]| [p[0] * w, p[1] * h];
        LandmarkSet { left_eye: s(self.left_eye), right_eye: s(self.right_eye), mouth: s(self.mouth) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(invalid("template size must be positive"));
        }
        if triangle_degenerate(&self.landmarks().points()) {
            return Err(invalid("template points are collinear"));
        }
        Ok(())
    }
}

/// `p -> [a -b; b a] p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Similarity {
    pub fn identity() -> Self {
        Self { a: 1.0, b: 0.0, tx: 0.0, ty: 0.0 }
    }

    /// Rotation by `angle` radians and uniform `scale` about `center`.
    pub fn about(center: [f64; 2], angle: f64, scale: f64) -> Self {
        let (a, b) = (scale * angle.cos(), scale * angle.sin());
        let [cx, cy] = center;
        Self { a, b, tx: cx - (a * cx - b * cy), ty: cy - (b * cx + a * cy) }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        [self.a * p[0] - self.b * p[1] + self.tx, self.b * p[0] + self.a * p[1] + self.ty]
    }

    pub fn scale(&self) -> f64 {
        self.a.hypot(self.b)
    }

    pub fn inverse(&self) -> Result<Self> {
        let d = self.a * self.a + self.b * self.b;
        if d < 1e-24 {
            return Err(Error::AlignmentFailure("singular similarity transform".into()));
        }
        let (a, b) = (self.a / d, -self.b / d);
        Ok(Self { a, b, tx: -(a * self.tx - b * self.ty), ty: -(b * self.tx + a * self.ty) })
    }

    pub fn apply_landmarks(&self, lm: &LandmarkSet) -> LandmarkSet {
        LandmarkSet::from_points(lm.points().map(|p| self.apply(p)))
    }

    /// Least-squares fit mapping `src[i]` onto `dst[i]`.
    pub fn fit(src: &[[f64; 2]], dst: &[[f64; 2]]) -> Result<Self> {
        if src.len() != dst.len() || src.len() < 2 {
            return Err(invalid("similarity fit needs at least two matching point pairs"));
        }
        let n = src.len() as f64;
        let mean = |ps: &[[f64; 2]]| {
            let s = ps.iter().fold([0.0, 0.0], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
            [s[0] / n, s[1] / n]
        };
        let (ms, md) = (mean(src), mean(dst));
        let (mut sxx, mut num_a, mut num_b) = (0.0, 0.0, 0.0);
        for (p, q) in src.iter().zip(dst) {
            let (px, py) = (p[0] - ms[0], p[1] - ms[1]);
            let (qx, qy) = (q[0] - md[0], q[1] - md[1]);
            sxx += px * px + py * py;
            num_a += px * qx + py * qy;
            num_b += px * qy - py * qx;
        }
        if sxx < 1e-12 {
            return Err(Error::AlignmentFailure("source points coincide".into()));
        }
        let (a, b) = (num_a / sxx, num_b / sxx);
        Ok(Self { a, b, tx: md[0] - (a * ms[0] - b * ms[1]), ty: md[1] - (b * ms[0] + a * ms[1]) })
    }
}

/// Twice the triangle area relative to the squared longest side.
fn triangle_degenerate(p: &[[f64; 2]; 3]) -> bool {
    let cross = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
    let d2 = |u: [f64; 2], v: [f64; 2]| (u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2);
    let longest = d2(p[0], p[1]).max(d2(p[1], p[2])).max(d2(p[0], p[2]));
    !cross.is_finite() || longest < 1e-12 || cross.abs() / longest < 1e-3
}

/// Bilinear sample at continuous coordinates, edge-replicated.
pub fn sample_bilinear(img: &Image, x: f64, y: f64) -> [f32; 3] {
    let (w, h) = (img.width() as f64, img.height() as f64);
    // Pixel centers sit at integer + 0.5.
    let fx = (x - 0.5).clamp(0.0, w - 1.0);
    let fy = (y - 0.5).clamp(0.0, h - 1.0);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width() - 1), (y0 + 1).min(img.height() - 1));
    let (ax, ay) = ((fx - x0 as f64) as f32, (fy - y0 as f64) as f32);
    let (p00, p10, p01, p11) = (img.pixel(x0, y0), img.pixel(x1, y0), img.pixel(x0, y1), img.pixel(x1, y1));
    let mut out = [0f32; 3];
    for c in 0..3 {
        let top = p00[c] + (p10[c] - p00[c]) * ax;
        let bot = p01[c] + (p11[c] - p01[c]) * ax;
        out[c] = top + (bot - top) * ay;
    }
    out
}

/// Resamples `img` so that output pixel `q` takes the value at `fwd^-1(q)`.
pub fn warp(img: &Image, fwd: &Similarity, width: usize, height: usize) -> Result<Image> {
    let inv = fwd.inverse()?;
    Ok(Image::from_fn(width, height, |x, y| {
        let [sx, sy] = inv.apply([x as f64 + 0.5, y as f64 + 0.5]);
        sample_bilinear(img, sx, sy)
    }))
}

/// Maps `lm` onto the template and resamples the image accordingly.
pub fn align(img: &Image, lm: &LandmarkSet, tpl: &AlignmentTemplate) -> Result<(Image, LandmarkSet)> {
    tpl.validate()?;
    let src = lm.points();
    if src.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::AlignmentFailure("non-finite landmark".into()));
    }
    if triangle_degenerate(&src) {
        return Err(Error::AlignmentFailure(format!("landmarks are collinear: {src:?}")));
    }
    let dst = tpl.landmarks().points();
    let t = Similarity::fit(&src, &dst)?;
    let out = warp(img, &t, tpl.width, tpl.height)?;
    Ok((out, t.apply_landmarks(lm)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_face;

    fn max_dist(a: &LandmarkSet, b: &LandmarkSet) -> f64 {
        a.points().iter().zip(b.points()).map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1])).fold(0.0, f64::max)
    }

    #[test]
    fn template_points_are_a_fixed_point() {
        let tpl = AlignmentTemplate::standard(64, 64);
        let img = gen_face(1, 64).unwrap().image;
        let (out, lm) = align(&img, &tpl.landmarks(), &tpl).unwrap();
        assert!(max_dist(&lm, &tpl.landmarks()) < 1e-6);
        let diff = out.as_slice().iter().zip(img.as_slice()).map(|(a, b)| (a - b).abs()).fold(0f32, f32::max);
        assert!(diff < 1e-5, "{diff}");
    }

    #[test]
    fn fit_recovers_known_transform() {
        let t = Similarity::about([30.0, 20.0], 0.4, 1.7);
        let src = [[1.0, 2.0], [40.0, 5.0], [20.0, 50.0]];
        let dst = src.map(|p| t.apply(p));
        let f = Similarity::fit(&src, &dst).unwrap();
        for (x, y) in [(f.a, t.a), (f.b, t.b), (f.tx, t.tx), (f.ty, t.ty)] {
            assert!((x - y).abs() < 1e-9);
        }
        let back = t.inverse().unwrap();
        let p = back.apply(t.apply([3.0, -7.0]));
        assert!((p[0] - 3.0).abs() < 1e-12 && (p[1] + 7.0).abs() < 1e-12);
    }

    fn recover(angle_deg: f64, scale: f64) -> f64 {
        let face = gen_face(9, 128).unwrap();
        let tpl = AlignmentTemplate::standard(128, 128);
        let (img, lm) = align(&face.image, &face.landmarks, &tpl).unwrap();
        let t = Similarity::about([64.0, 64.0], angle_deg.to_radians(), scale);
        let moved = warp(&img, &t, 128, 128).unwrap();
        let (_, back) = align(&moved, &t.apply_landmarks(&lm), &tpl).unwrap();
        max_dist(&back, &tpl.landmarks())
    }

    #[test]
    fn rotation_is_undone() {
        assert!(recover(15.0, 1.0) < 0.5);
    }

    #[test]
    fn scaling_is_undone() {
        assert!(recover(0.0, 2.0) < 0.5);
    }

    #[test]
    fn collinear_landmarks_fail() {
        let lm = LandmarkSet { left_eye: [10.0, 10.0], right_eye: [20.0, 20.0], mouth: [30.0, 30.0] };
        let img = Image::filled(64, 64, [0.5; 3]);
        let err = align(&img, &lm, &AlignmentTemplate::standard(64, 64)).unwrap_err();
        assert!(matches!(err, Error::AlignmentFailure(_)));
    }

    #[test]
    fn aligned_image_content_follows_landmarks() {
        let face = gen_face(4, 128).unwrap();
        let tpl = AlignmentTemplate::standard(128, 128);
        let (img, lm) = align(&face.image, &face.landmarks, &tpl).unwrap();
        // Pupils are dark before and after.
        for p in [lm.left_eye, lm.right_eye] {
            let px = sample_bilinear(&img, p[0], p[1]);
            assert!(px.iter().sum::<f32>() < 1.2, "{px:?}");
        }
    }
}
