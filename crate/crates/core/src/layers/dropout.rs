use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Mode;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Inverted dropout: at train time each element survives with probability `1 − rate`
/// and is scaled by `1/(1 − rate)`; inference is the identity.
#[derive(Clone, Debug)]
pub struct Dropout<T: Scalar = f32> {
    rate: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<T>>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        Ok(Dropout { rate, rng: ChaCha8Rng::seed_from_u64(seed), mask: None })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if mode == Mode::Infer || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let keep = 1.0 - self.rate;
        let scale = T::from_f64_lossy(1.0 / keep);
        let mask: Vec<T> = (0..x.len())
            .map(|_| if self.rng.random::<f64>() < keep { scale } else { T::zero() })
            .collect();
        let out = self.apply(x, &mask)?;
        self.mask = Some(mask);
        Ok(out)
    }

    /// Re-applies the mask drawn by the last train-mode forward without drawing a new one.
    pub fn forward_with_cached_mask(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match &self.mask {
            Some(mask) => self.apply(x, mask),
            None => Ok(x.clone()),
        }
    }

    pub fn backward(&self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_with_cached_mask(grad_out)
    }

    fn apply(&self, x: &Tensor<T>, mask: &[T]) -> Result<Tensor<T>> {
        if mask.len() != x.len() {
            return Err(Error::shape(format!(
                "dropout mask has {} elements, tensor has {}",
                mask.len(),
                x.len()
            )));
        }
        let data = x.data().iter().zip(mask).map(|(&v, &m)| v * m).collect();
        Tensor::from_vec(x.dims(), data)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.mask = None;
    }
}
