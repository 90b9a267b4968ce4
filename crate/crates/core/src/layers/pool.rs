use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// 2×2 max pooling with stride 2. Odd trailing rows/columns are dropped.
#[derive(Clone, Debug, Default)]
pub struct MaxPool2d {
    /// flat input index of each output's maximum
    argmax: Option<Vec<usize>>,
    input_dims: [usize; 4],
}

impl MaxPool2d {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn output_hw(h: usize, w: usize) -> Result<(usize, usize)> {
        if h < 2 || w < 2 {
            return Err(Error::shape(format!("maxpool2d needs H, W >= 2, got {h}x{w}")));
        }
        Ok((h / 2, w / 2))
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let &[n, c, h, w] = x.dims() else {
            return Err(Error::shape(format!("maxpool2d expects [N,C,H,W], got {}", x.shape())));
        };
        let (ho, wo) = Self::output_hw(h, w)?;
        let xs = x.data();
        let mut out = Tensor::zeros(&[n, c, ho, wo]);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for (plane, dst) in out.data_mut().chunks_exact_mut(ho * wo).enumerate() {
            let base = plane * h * w;
            for i in 0..ho {
                for j in 0..wo {
                    let first = base + 2 * i * w + 2 * j;
                    // row-major scan; strict comparison keeps the first of equal maxima
                    let mut best = first;
                    for idx in [first + 1, first + w, first + w + 1] {
                        if xs[idx] > xs[best] {
                            best = idx;
                        }
                    }
                    dst[i * wo + j] = xs[best];
                    argmax.push(best);
                }
            }
        }
        self.argmax = Some(argmax);
        self.input_dims = [n, c, h, w];
        Ok(out)
    }

    pub fn backward<T: Scalar>(&self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let argmax = self
            .argmax
            .as_ref()
            .ok_or_else(|| Error::State("maxpool2d backward called before forward".into()))?;
        if grad_out.len() != argmax.len() {
            return Err(Error::shape(format!(
                "maxpool2d grad has {} elements, expected {}",
                grad_out.len(),
                argmax.len()
            )));
        }
        let mut grad_x = Tensor::zeros(&self.input_dims);
        for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
            grad_x.data_mut()[idx] = g;
        }
        Ok(grad_x)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.argmax = None;
    }
}
