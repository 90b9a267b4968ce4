use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::{augment, AugmentationConfig};
use super::{ImageSample, LoadedDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mini-batches over a dataset, reshuffled every epoch.
///
/// The permutation for epoch `e` comes from a ChaCha stream keyed by `(seed, e)`, so
/// the order is reproducible and independent of how many epochs ran before.
#[derive(Clone, Debug)]
pub struct BatchIterator<'a> {
    data: &'a LoadedDataset,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
    augmentation: AugmentationConfig,
}

impl<'a> BatchIterator<'a> {
    pub fn new(data: &'a LoadedDataset, batch_size: usize, shuffle: bool, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if data.is_empty() {
            return Err(Error::Data("cannot batch an empty dataset".into()));
        }
        Ok(BatchIterator { data, batch_size, shuffle, seed, augmentation: AugmentationConfig::default() })
    }

    pub fn with_augmentation(mut self, cfg: AugmentationConfig) -> Result<Self> {
        cfg.validate()?;
        self.augmentation = cfg;
        Ok(self)
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.data.len().div_ceil(self.batch_size)
    }

    pub fn order(&self, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        if self.shuffle {
            order.shuffle(&mut epoch_rng(self.seed, epoch));
        }
        order
    }

    pub fn index_batches(&self, epoch: usize) -> Vec<Vec<usize>> {
        self.order(epoch).chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }

    /// `(images [B,3,S,S], labels)` for every batch of `epoch`, augmented when enabled.
    pub fn batches(&self, epoch: usize) -> impl Iterator<Item = (Tensor<f32>, Vec<usize>)> + '_ {
        let mut aug_rng = epoch_rng(self.augmentation.seed, epoch);
        self.index_batches(epoch).into_iter().map(move |idx| {
            if !self.augmentation.enabled {
                return self.data.gather(&idx);
            }
            let s = self.data.image_size;
            let mut pixels = Vec::with_capacity(idx.len() * 3 * s * s);
            let mut labels = Vec::with_capacity(idx.len());
            for &i in &idx {
                let sample = ImageSample { pixels: self.data.images[i].clone(), label: self.data.labels[i] };
                let out = augment(&sample, &self.augmentation, &mut aug_rng);
                pixels.extend_from_slice(out.pixels.data());
                labels.push(out.label);
            }
            (Tensor::from_vec(&[idx.len(), 3, s, s], pixels).expect("stacked dims"), labels)
        })
    }
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}
