use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ImageSample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Random flip / rotation / translation. Disabled by default: the reference preprocessing
/// is resize and gray-to-RGB only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    pub enabled: bool,
    /// rotation angle ~ Uniform(−r, r) degrees
    pub rotation_deg: f64,
    /// x/y offsets ~ Uniform(−t, t) · image size
    pub translate_frac: f64,
    pub hflip_prob: f64,
    pub seed: u64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig { enabled: false, rotation_deg: 15.0, translate_frac: 0.10, hflip_prob: 0.5, seed: 0 }
    }
}

/// One concrete draw of augmentation parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub flip: bool,
    pub angle_deg: f64,
    pub dx: f64,
    pub dy: f64,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams { flip: false, angle_deg: 0.0, dx: 0.0, dy: 0.0 };
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rotation_deg >= 0.0) {
            return Err(Error::config("rotation_deg must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::config("hflip_prob must be in [0, 1]"));
        }
        if !(self.translate_frac >= 0.0) {
            return Err(Error::config("translate_frac must be >= 0"));
        }
        Ok(())
    }

    pub fn sample_params<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> AugmentParams {
        let flip = rng.random::<f64>() < self.hflip_prob;
        let mut sym = |r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        let angle_deg = sym(self.rotation_deg);
        let t = self.translate_frac * size as f64;
        AugmentParams { flip, angle_deg, dx: sym(t), dy: sym(t) }
    }
}

/// Applies flip, then rotation, then translation. The label is untouched.
pub fn augment<R: Rng + ?Sized>(sample: &ImageSample, cfg: &AugmentationConfig, rng: &mut R) -> ImageSample {
    if !cfg.enabled {
        return sample.clone();
    }
    let params = cfg.sample_params(sample.pixels.dims()[2], rng);
    ImageSample { pixels: apply_params(&sample.pixels, &params), label: sample.label }
}

pub fn apply_params(img: &Tensor<f32>, p: &AugmentParams) -> Tensor<f32> {
    let mut out = img.clone();
    if p.flip {
        out = hflip(&out);
    }
    if p.angle_deg != 0.0 {
        out = rotate(&out, p.angle_deg);
    }
    if p.dx != 0.0 || p.dy != 0.0 {
        out = translate(&out, p.dx, p.dy);
    }
    out
}

fn chw(img: &Tensor<f32>) -> (usize, usize, usize) {
    let d = img.dims();
    (d[0], d[1], d[2])
}

pub fn hflip(img: &Tensor<f32>) -> Tensor<f32> {
    let (_, _, w) = chw(img);
    let mut out = img.clone();
    for row in out.data_mut().chunks_exact_mut(w) {
        row.reverse();
    }
    out
}

/// Bilinear sample of one plane; coordinates outside the image read as 0.
fn bilinear(plane: &[f32], h: usize, w: usize, x: f64, y: f64) -> f32 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    let at = |xi: isize, yi: isize| -> f64 {
        if xi < 0 || yi < 0 || xi >= w as isize || yi >= h as isize {
            0.0
        } else {
            plane[yi as usize * w + xi as usize] as f64
        }
    };
    let top = at(x0, y0) * (1.0 - fx) + if fx > 0.0 { at(x0 + 1, y0) * fx } else { 0.0 };
    if fy == 0.0 {
        return top as f32;
    }
    let bottom = at(x0, y0 + 1) * (1.0 - fx) + if fx > 0.0 { at(x0 + 1, y0 + 1) * fx } else { 0.0 };
    (top * (1.0 - fy) + bottom * fy) as f32
}

/// Inverse-maps every output pixel through `src(x, y)` and samples bilinearly.
fn warp(img: &Tensor<f32>, src: impl Fn(f64, f64) -> (f64, f64)) -> Tensor<f32> {
    let (c, h, w) = chw(img);
    let mut out = Tensor::zeros(img.dims());
    for ch in 0..c {
        let plane = &img.data()[ch * h * w..(ch + 1) * h * w];
        let dst = &mut out.data_mut()[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = src(x as f64, y as f64);
                dst[y * w + x] = bilinear(plane, h, w, sx, sy);
            }
        }
    }
    out
}

/// Counter-clockwise rotation about the image centre, zero fill.
pub fn rotate(img: &Tensor<f32>, angle_deg: f64) -> Tensor<f32> {
    let (_, h, w) = chw(img);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    warp(img, |x, y| {
        let (u, v) = (x - cx, y - cy);
        // image y axis points down, so the inverse map of a visual CCW turn is this
        (cos * u - sin * v + cx, sin * u + cos * v + cy)
    })
}

/// Shifts content by `(dx, dy)` pixels, zero fill.
pub fn translate(img: &Tensor<f32>, dx: f64, dy: f64) -> Tensor<f32> {
    warp(img, |x, y| (x - dx, y - dy))
}
