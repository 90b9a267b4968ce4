use super::{Mode, Param};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_STATS_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization over `[N,C,H,W]`.
///
/// Train mode normalizes with the biased batch variance and folds the batch statistics
/// into the running estimates, `r ← (1 − m)·r + m·batch`. Infer mode uses the running
/// estimates only.
#[derive(Clone, Debug)]
pub struct BatchNorm2d<T: Scalar = f32> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    epsilon: f64,
    stats_momentum: f64,
    cache: Option<Cache<T>>,
}

#[derive(Clone, Debug)]
struct Cache<T> {
    normalized: Vec<T>,
    inv_std: Vec<f64>,
    dims: [usize; 4],
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Result<Self> {
        Ok(BatchNorm2d {
            gamma: Param::new(Tensor::new(&[channels], T::one())?),
            beta: Param::new(Tensor::new(&[channels], T::zero())?),
            running_mean: Tensor::new(&[channels], T::zero())?,
            running_var: Tensor::new(&[channels], T::one())?,
            epsilon: DEFAULT_EPSILON,
            stats_momentum: DEFAULT_STATS_MOMENTUM,
            cache: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let &[n, c, h, w] = x.dims() else {
            return Err(Error::shape(format!("batchnorm2d expects [N,C,H,W], got {}", x.shape())));
        };
        if c != self.channels() {
            return Err(Error::shape(format!(
                "batchnorm2d has {} channels, input has {c}",
                self.channels()
            )));
        }
        let hw = h * w;
        let count = n * hw;
        let mut out = Tensor::zeros(x.dims());
        let xs = x.data();
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();

        match mode {
            Mode::Infer => {
                self.cache = None;
                for ch in 0..c {
                    let mean = self.running_mean.data()[ch].to_f64().unwrap();
                    let var = self.running_var.data()[ch].to_f64().unwrap();
                    let scale = gamma[ch].to_f64().unwrap() / (var + self.epsilon).sqrt();
                    let shift = beta[ch].to_f64().unwrap() - mean * scale;
                    let (scale, shift) = (T::from_f64_lossy(scale), T::from_f64_lossy(shift));
                    for s in 0..n {
                        let base = (s * c + ch) * hw;
                        for (o, &v) in out.data_mut()[base..base + hw].iter_mut().zip(&xs[base..base + hw]) {
                            *o = v * scale + shift;
                        }
                    }
                }
            }
            Mode::Train => {
                if count < 2 {
                    return Err(Error::shape(
                        "batchnorm2d in train mode needs at least 2 values per channel",
                    ));
                }
                let mut normalized = vec![T::zero(); x.len()];
                let mut inv_std = vec![0.0; c];
                let m = self.stats_momentum;
                for ch in 0..c {
                    let planes = || (0..n).map(move |s| (s * c + ch) * hw);
                    let sum: f64 = planes()
                        .flat_map(|b| &xs[b..b + hw])
                        .map(|v| v.to_f64().unwrap())
                        .sum();
                    let mean = sum / count as f64;
                    let var = planes()
                        .flat_map(|b| &xs[b..b + hw])
                        .map(|v| (v.to_f64().unwrap() - mean).powi(2))
                        .sum::<f64>()
                        / count as f64;
                    let istd = 1.0 / (var + self.epsilon).sqrt();
                    inv_std[ch] = istd;
                    let (g, bt) = (gamma[ch], beta[ch]);
                    for b in planes() {
                        for i in b..b + hw {
                            let xhat = T::from_f64_lossy((xs[i].to_f64().unwrap() - mean) * istd);
                            normalized[i] = xhat;
                            out.data_mut()[i] = g * xhat + bt;
                        }
                    }
                    let rm = &mut self.running_mean.data_mut()[ch];
                    *rm = T::from_f64_lossy((1.0 - m) * rm.to_f64().unwrap() + m * mean);
                    let rv = &mut self.running_var.data_mut()[ch];
                    *rv = T::from_f64_lossy((1.0 - m) * rv.to_f64().unwrap() + m * var);
                }
                self.cache = Some(Cache { normalized, inv_std, dims: [n, c, h, w] });
            }
        }
        Ok(out)
    }

    /// Full gradient through the batch mean and variance. Requires a train-mode forward.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.as_ref().ok_or_else(|| {
            Error::State("batchnorm2d backward needs a preceding train-mode forward".into())
        })?;
        let [n, c, h, w] = cache.dims;
        if grad_out.dims() != cache.dims {
            return Err(Error::shape(format!(
                "batchnorm2d grad must be {:?}, got {}",
                cache.dims,
                grad_out.shape()
            )));
        }
        let hw = h * w;
        let count = (n * hw) as f64;
        let g = grad_out.data();
        let mut grad_x = Tensor::zeros(grad_out.dims());
        for ch in 0..c {
            let gamma = self.gamma.value.data()[ch].to_f64().unwrap();
            let (mut sum_g, mut sum_gx) = (0.0, 0.0);
            for s in 0..n {
                let b = (s * c + ch) * hw;
                for i in b..b + hw {
                    let gi = g[i].to_f64().unwrap();
                    sum_g += gi;
                    sum_gx += gi * cache.normalized[i].to_f64().unwrap();
                }
            }
            self.beta.grad.data_mut()[ch] = T::from_f64_lossy(sum_g);
            self.gamma.grad.data_mut()[ch] = T::from_f64_lossy(sum_gx);
            // dx = γ·σ⁻¹/M · (M·g − Σg − x̂·Σ(g·x̂))
            let k = gamma * cache.inv_std[ch] / count;
            for s in 0..n {
                let b = (s * c + ch) * hw;
                for i in b..b + hw {
                    let xhat = cache.normalized[i].to_f64().unwrap();
                    let v = k * (count * g[i].to_f64().unwrap() - sum_g - xhat * sum_gx);
                    grad_x.data_mut()[i] = T::from_f64_lossy(v);
                }
            }
        }
        Ok(grad_x)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.cache = None;
    }
}
