//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::path::Path;

use image::{GrayImage, Luma};
use okannet::data::LoadedDataset;
use okannet::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PATTERN_NAMES: [&str; 4] = ["checker", "disc", "hstripes", "vstripes"];

/// One `size × size` grayscale pattern in `[0, 1]`: class 0 checkerboard, 1 disc,
/// 2 horizontal stripes, 3 vertical stripes. Phase, period, position and noise vary with `rng`.
pub fn pattern<R: Rng>(class: usize, size: usize, rng: &mut R) -> Vec<f32> {
    let period = rng.random_range(4..=8) as f64;
    let phase = rng.random_range(0.0..period);
    let cx = rng.random_range(0.35..0.65) * size as f64;
    let cy = rng.random_range(0.35..0.65) * size as f64;
    let radius = rng.random_range(0.18..0.3) * size as f64;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f64 + phase, y as f64 + phase);
            let on = match class {
                0 => ((fx / period).floor() as i64 + (fy / period).floor() as i64) % 2 == 0,
                1 => (x as f64 - cx).hypot(y as f64 - cy) < radius,
                2 => (fy / period).floor() as i64 % 2 == 0,
                3 => (fx / period).floor() as i64 % 2 == 0,
                _ => unreachable!("four pattern classes"),
            };
            let base = if on { 0.8 } else { 0.2 };
            out.push((base + rng.random_range(-0.1..0.1)) as f32);
        }
    }
    out
}

/// `per_class` samples of each pattern, already expanded to three channels.
pub fn pattern_dataset(per_class: usize, size: usize, seed: u64) -> LoadedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for class in 0..4 {
        for _ in 0..per_class {
            let gray = pattern(class, size, &mut rng);
            let rgb: Vec<f32> = gray.iter().chain(&gray).chain(&gray).copied().collect();
            images.push(Tensor::from_vec(&[3, size, size], rgb).unwrap());
            labels.push(class);
        }
    }
    LoadedDataset::from_parts(images, labels, PATTERN_NAMES.iter().map(|s| s.to_string()).collect()).unwrap()
}

/// Writes a `Training/` + `Testing/` folder dataset of PNG patterns under `root`.
pub fn write_pattern_folders(root: &Path, train_per_class: usize, test_per_class: usize, size: u32, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (split, n) in [("Training", train_per_class), ("Testing", test_per_class)] {
        for (class, name) in PATTERN_NAMES.iter().enumerate() {
            let dir = root.join(split).join(name);
            std::fs::create_dir_all(&dir).unwrap();
            for i in 0..n {
                let px = pattern(class, size as usize, &mut rng);
                let img = GrayImage::from_fn(size, size, |x, y| {
                    Luma([(px[(y * size + x) as usize] * 255.0).round() as u8])
                });
                img.save(dir.join(format!("{name}_{i:03}.png"))).unwrap();
            }
        }
    }
}
