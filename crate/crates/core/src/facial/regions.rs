//! Mapping pixel-space landmarks to latent crop rectangles.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::models::SPATIAL_FACTOR;

/// Eye and mouth centers in pixel coordinates, `[x, y]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub left_eye: [f64; 2],
    pub right_eye: [f64; 2],
    pub mouth: [f64; 2],
}

impl LandmarkSet {
    pub fn points(&self) -> [[f64; 2]; 3] {
        [self.left_eye, self.right_eye, self.mouth]
    }

    pub fn from_points(p: [[f64; 2]; 3]) -> Self {
        Self { left_eye: p[0], right_eye: p[1], mouth: p[2] }
    }

    pub fn eye_center(&self) -> [f64; 2] {
        [(self.left_eye[0] + self.right_eye[0]) / 2.0, (self.left_eye[1] + self.right_eye[1]) / 2.0]
    }

    /// Points inside a `width x height` image and both eyes above the mouth.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        for [x, y] in self.points() {
            if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 || x > width as f64 || y > height as f64 {
                return Err(invalid(format!("landmark ({x}, {y}) outside {width}x{height}")));
            }
        }
        if !(self.left_eye[1] < self.mouth[1] && self.right_eye[1] < self.mouth[1]) {
            return Err(invalid("eyes must lie above the mouth"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Eyes,
    Mouth,
}

impl Region {
    pub const ALL: [Region; 2] = [Region::Eyes, Region::Mouth];
}

/// Half-open latent rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl LatentBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionBoxes {
    pub eyes: LatentBox,
    pub mouth: LatentBox,
}

impl RegionBoxes {
    pub fn get(&self, r: Region) -> &LatentBox {
        match r {
            Region::Eyes => &self.eyes,
            Region::Mouth => &self.mouth,
        }
    }
}

/// Fixed `(width, height)` in latent cells for each region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSizes {
    pub eyes: [usize; 2],
    pub mouth: [usize; 2],
}

impl Default for RegionSizes {
    fn default() -> Self {
        Self { eyes: [16, 8], mouth: [10, 6] }
    }
}

impl RegionSizes {
    /// Scales the 512-pixel defaults to a square image of side `size`,
    /// keeping even sides of at least 2 (eyes at least 4 wide).
    pub fn for_image_size(size: usize) -> Self {
        let scale = |v: usize, min: usize| -> usize {
            let s = (v * size) as f64 / 512.0;
            let even = ((s / 2.0).round() as usize) * 2;
            even.max(min)
        };
        let d = Self::default();
        Self {
            eyes: [scale(d.eyes[0], 4), scale(d.eyes[1], 2)],
            mouth: [scale(d.mouth[0], 2), scale(d.mouth[1], 2)],
        }
    }

    pub fn get(&self, r: Region) -> [usize; 2] {
        match r {
            Region::Eyes => self.eyes,
            Region::Mouth => self.mouth,
        }
    }
}

fn place(center_px: [f64; 2], size: [usize; 2], latent_w: usize, latent_h: usize) -> LatentBox {
    let f = SPATIAL_FACTOR as f64;
    let cx = (center_px[0] / f).round() as i64;
    let cy = (center_px[1] / f).round() as i64;
    let (w, h) = (size[0] as i64, size[1] as i64);
    let x0 = (cx - w / 2).clamp(0, latent_w as i64 - w) as usize;
    let y0 = (cy - h / 2).clamp(0, latent_h as i64 - h) as usize;
    LatentBox { x0, y0, x1: x0 + size[0], y1: y0 + size[1] }
}

/// Centers each region on its landmark (the eye midpoint for the eyes),
/// divides by the codec factor, rounds to the nearest cell and clamps the
/// fixed-size box inside the latent.
pub fn landmarks_to_latent_boxes(lm: &LandmarkSet, image_hw: (usize, usize), sizes: &RegionSizes) -> Result<RegionBoxes> {
    let (h, w) = image_hw;
    lm.validate(w, h)?;
    let (lw, lh) = (w / SPATIAL_FACTOR, h / SPATIAL_FACTOR);
    for r in Region::ALL {
        let [rw, rh] = sizes.get(r);
        if rw == 0 || rh == 0 || rw > lw || rh > lh {
            return Err(invalid(format!("{r:?} region {rw}x{rh} does not fit latent {lw}x{lh}")));
        }
    }
    Ok(RegionBoxes {
        eyes: place(lm.eye_center(), sizes.eyes, lw, lh),
        mouth: place(lm.mouth, sizes.mouth, lw, lh),
    })
}

/// Crops the last two (spatial) axes of `z` to `b`.
pub fn crop(z: &Tensor, b: &LatentBox) -> Result<Tensor> {
    let r = z.rank();
    if r < 2 {
        return Err(invalid("crop needs a spatial tensor"));
    }
    let (h, w) = (z.dim(r - 2)?, z.dim(r - 1)?);
    if b.x0 >= b.x1 || b.y0 >= b.y1 || b.x1 > w || b.y1 > h {
        return Err(invalid(format!("box {b:?} outside latent {w}x{h}")));
    }
    Ok(z.narrow(r - 2, b.y0, b.height())?.narrow(r - 1, b.x0, b.width())?)
}

/// `(eyes, mouth)` patches of a single latent.
pub fn crop_regions(z: &Tensor, boxes: &RegionBoxes) -> Result<(Tensor, Tensor)> {
    Ok((crop(z, &boxes.eyes)?, crop(z, &boxes.mouth)?))
}

/// Crops sample `i` of a `(B, C, h, w)` batch with `boxes[i]` and restacks.
pub fn crop_batch(z: &Tensor, boxes: &[RegionBoxes], region: Region) -> Result<Tensor> {
    let b = z.dim(0)?;
    if boxes.len() != b {
        return Err(invalid(format!("{} boxes for batch of {b}", boxes.len())));
    }
    let parts = boxes
        .iter()
        .enumerate()
        .map(|(i, bx)| crop(&z.narrow(0, i, 1)?, bx.get(region)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::cat(&parts, 0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    fn lm(le: [f64; 2], re: [f64; 2], m: [f64; 2]) -> LandmarkSet {
        LandmarkSet { left_eye: le, right_eye: re, mouth: m }
    }

    #[test]
    fn pixel_rectangle_maps_by_factor_eight() {
        // Eye midpoint (128, 128) with a 16x8 box covers pixels (64,96)-(192,160).
        let l = lm([96.0, 128.0], [160.0, 128.0], [256.0, 320.0]);
        let b = landmarks_to_latent_boxes(&l, (512, 512), &RegionSizes::default()).unwrap();
        assert_eq!(b.eyes, LatentBox { x0: 8, y0: 12, x1: 24, y1: 20 });
        assert_eq!(b.mouth, LatentBox { x0: 27, y0: 37, x1: 37, y1: 43 });
    }

    #[test]
    fn multiple_of_eight_maps_exactly() {
        let l = lm([200.0, 200.0], [264.0, 200.0], [232.0, 344.0]);
        let sizes = RegionSizes { eyes: [2, 2], mouth: [2, 2] };
        let b = landmarks_to_latent_boxes(&l, (512, 512), &sizes).unwrap();
        // Centre cell index = x0 + w/2.
        assert_eq!((b.eyes.x0 + 1, b.eyes.y0 + 1), (29, 25));
        assert_eq!((b.mouth.x0 + 1, b.mouth.y0 + 1), (29, 43));
    }

    #[test]
    fn border_boxes_are_clamped_with_fixed_size() {
        let l = lm([1.0, 2.0], [3.0, 2.0], [510.0, 511.0]);
        let b = landmarks_to_latent_boxes(&l, (512, 512), &RegionSizes::default()).unwrap();
        assert_eq!(b.eyes, LatentBox { x0: 0, y0: 0, x1: 16, y1: 8 });
        assert_eq!(b.mouth, LatentBox { x0: 54, y0: 58, x1: 64, y1: 64 });
    }

    #[test]
    fn oversized_region_rejected() {
        let l = lm([20.0, 20.0], [40.0, 20.0], [30.0, 45.0]);
        assert!(landmarks_to_latent_boxes(&l, (64, 64), &RegionSizes::default()).is_err());
        assert!(landmarks_to_latent_boxes(&l, (64, 64), &RegionSizes::for_image_size(64)).is_ok());
    }

    #[test]
    fn scaled_sizes() {
        assert_eq!(RegionSizes::for_image_size(512), RegionSizes::default());
        assert_eq!(RegionSizes::for_image_size(64), RegionSizes { eyes: [4, 2], mouth: [2, 2] });
    }

    #[test]
    fn crop_contracts() {
        let z = Tensor::randn(0f32, 1.0, (4, 8, 8), &Device::Cpu).unwrap();
        let full = LatentBox { x0: 0, y0: 0, x1: 8, y1: 8 };
        let same: Vec<f32> = crop(&z, &full).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        assert_eq!(same, z.flatten_all().unwrap().to_vec1::<f32>().unwrap());
        let b = LatentBox { x0: 1, y0: 2, x1: 5, y1: 4 };
        assert_eq!(crop(&z, &b).unwrap().dims(), &[4, 2, 4]);
        let delta = Tensor::full(0.25f32, (4, 8, 8), &Device::Cpu).unwrap();
        let shifted = (&z + &delta).unwrap();
        let d = (crop(&shifted, &b).unwrap() - crop(&z, &b).unwrap()).unwrap();
        let v: Vec<f32> = d.flatten_all().unwrap().to_vec1().unwrap();
        assert!(v.iter().all(|x| (x - 0.25).abs() < 1e-6));
        assert!(crop(&z, &LatentBox { x0: 6, y0: 0, x1: 9, y1: 2 }).is_err());
    }

    #[test]
    fn invalid_landmarks_rejected() {
        let upside_down = lm([20.0, 50.0], [40.0, 50.0], [30.0, 20.0]);
        assert!(landmarks_to_latent_boxes(&upside_down, (64, 64), &RegionSizes::for_image_size(64)).is_err());
        let outside = lm([-1.0, 20.0], [40.0, 20.0], [30.0, 45.0]);
        assert!(outside.validate(64, 64).is_err());
    }
}
