use std::path::Path;

use image::{DynamicImage, ImageReader};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Planar (`[C, H, W]`) image with samples in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ImageGrid {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels * height * width != data.len() || data.is_empty() {
            return Err(Error::shape(format!(
                "{} samples for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        Ok(ImageGrid { channels, height, width, data })
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        Tensor::from_vec(&[self.channels, self.height, self.width], self.data).expect("validated dims")
    }
}

/// Decodes a PNG or JPEG into a 1-channel (gray) or 3-channel (RGB) grid scaled by 1/255.
pub fn decode_image(path: &Path) -> Result<ImageGrid> {
    let decode_err = |msg: String| Error::Decode { path: path.to_path_buf(), msg };
    let img = ImageReader::open(path)
        .map_err(|e| decode_err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?
        .decode()
        .map_err(|e| decode_err(e.to_string()))?;
    Ok(from_dynamic(&img))
}

pub fn from_dynamic(img: &DynamicImage) -> ImageGrid {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        let mut data = vec![0.0; 3 * h * w];
        for (i, px) in rgb.pixels().enumerate() {
            for c in 0..3 {
                data[c * h * w + i] = px[c] as f32 / 255.0;
            }
        }
        ImageGrid { channels: 3, height: h, width: w, data }
    } else {
        let data = img.to_luma8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
        ImageGrid { channels: 1, height: h, width: w, data }
    }
}

pub const BICUBIC_A: f64 = -0.5;

/// Cubic convolution kernel with `a = −0.5`.
pub fn cubic_kernel(t: f64) -> f64 {
    let a = BICUBIC_A;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Four source taps and their weights for each destination index along one axis.
/// Pixel centres are aligned (`src = (dst + ½)·in/out − ½`); taps are clamped to the edge.
fn axis_taps(src_len: usize, dst_len: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = src_len as f64 / dst_len as f64;
    let last = src_len as isize - 1;
    (0..dst_len)
        .map(|d| {
            let s = (d as f64 + 0.5) * scale - 0.5;
            let base = s.floor();
            let t = s - base;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let offset = k as isize - 1;
                idx[k] = (base as isize + offset).clamp(0, last) as usize;
                w[k] = cubic_kernel(t - offset as f64);
            }
            let sum: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= sum);
            (idx, w)
        })
        .collect()
}

/// Separable bicubic resize to `height × width`; results are clamped to `[0, 1]`.
pub fn resize_bicubic(img: &ImageGrid, height: usize, width: usize) -> ImageGrid {
    let xt = axis_taps(img.width, width);
    let yt = axis_taps(img.height, height);
    let mut data = Vec::with_capacity(img.channels * height * width);
    let mut rows = vec![0.0f64; img.height * width];
    for c in 0..img.channels {
        let plane = img.plane(c);
        for y in 0..img.height {
            let src = &plane[y * img.width..(y + 1) * img.width];
            for (x, (idx, w)) in xt.iter().enumerate() {
                rows[y * width + x] = (0..4).map(|k| w[k] * src[idx[k]] as f64).sum();
            }
        }
        for (idx, w) in &yt {
            for x in 0..width {
                let v: f64 = (0..4).map(|k| w[k] * rows[idx[k] * width + x]).sum();
                data.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    ImageGrid { channels: img.channels, height, width, data }
}

/// 1 channel → replicated to 3; 3 channels pass through.
pub fn gray_to_rgb(img: ImageGrid) -> Result<ImageGrid> {
    match img.channels {
        3 => Ok(img),
        1 => {
            let mut data = Vec::with_capacity(3 * img.data.len());
            for _ in 0..3 {
                data.extend_from_slice(&img.data);
            }
            Ok(ImageGrid { channels: 3, data, ..img })
        }
        n => Err(Error::Data(format!("expected a 1- or 3-channel image, got {n} channels"))),
    }
}

/// Decode, bicubic-resize to `size × size`, and expand to RGB: a `[3, size, size]` tensor.
pub fn load_preprocessed(path: &Path, size: usize) -> Result<Tensor<f32>> {
    let img = decode_image(path)?;
    Ok(gray_to_rgb(resize_bicubic(&img, size, size))?.into_tensor())
}
