use super::{Layer, Mode};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Identity-skip residual block, `y = F(x) + x`, where `F` is the ordered inner layer list.
#[derive(Clone, Debug)]
pub struct Residual<T: Scalar = f32> {
    pub inner: Vec<Layer<T>>,
}

impl<T: Scalar> Residual<T> {
    pub fn new(inner: Vec<Layer<T>>) -> Self {
        Residual { inner }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &mut self.inner {
            h = layer.forward(&h, mode)?;
        }
        if h.shape() != x.shape() {
            return Err(Error::shape(format!(
                "residual inner path maps {} to {}; the identity skip needs equal shapes",
                x.shape(),
                h.shape()
            )));
        }
        h.add(x)
    }

    /// Gradient through the inner path plus the gradient along the skip.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad_out.clone();
        for layer in self.inner.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        g.add(grad_out)
    }
}
