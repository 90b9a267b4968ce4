//! Layer forward/backward passes.
//!
//! Every layer caches what its backward pass needs during `forward`; calling `backward`
//! without a preceding forward is a [`Error::State`]. Backward overwrites (does not
//! accumulate) the parameter gradients stored next to each parameter in [`Param`].

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod dropout;
pub mod init;
mod pool;
mod residual;

pub use activation::{relu, relu_backward, softmax, Relu};
pub use batchnorm::{BatchNorm2d, DEFAULT_EPSILON, DEFAULT_STATS_MOMENTUM};
pub use conv::{Conv2d, KERNEL, SAME_PAD};
pub use dense::Dense;
pub use dropout::Dropout;
pub use init::he_init;
pub use pool::MaxPool2d;
pub use residual::Residual;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// A learnable tensor and the gradient from the most recent backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T: Scalar = f32> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.dims());
        Param { value, grad }
    }
}

/// `[N, ...]` → `[N, prod(...)]`.
#[derive(Clone, Debug, Default)]
pub struct Flatten {
    input_dims: Option<Vec<usize>>,
}

impl Flatten {
    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = x.dims()[0];
        self.input_dims = Some(x.dims().to_vec());
        x.clone().reshape(&[n, x.len() / n])
    }

    pub fn backward<T: Scalar>(&self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let dims = self
            .input_dims
            .as_ref()
            .ok_or_else(|| Error::State("flatten backward called before forward".into()))?;
        grad_out.clone().reshape(dims)
    }
}

#[derive(Clone, Debug)]
pub enum Layer<T: Scalar = f32> {
    Conv2d(Conv2d<T>),
    BatchNorm2d(BatchNorm2d<T>),
    Relu(Relu<T>),
    MaxPool2d(MaxPool2d),
    Flatten(Flatten),
    Dense(Dense<T>),
    Dropout(Dropout<T>),
    Residual(Residual<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(l) => l.forward(x),
            Layer::BatchNorm2d(l) => l.forward(x, mode),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::MaxPool2d(l) => l.forward(x),
            Layer::Flatten(l) => l.forward(x),
            Layer::Dense(l) => l.forward(x),
            Layer::Dropout(l) => l.forward(x, mode),
            Layer::Residual(l) => l.forward(x, mode),
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(l) => l.backward(grad_out),
            Layer::BatchNorm2d(l) => l.backward(grad_out),
            Layer::Relu(l) => l.backward(grad_out),
            Layer::MaxPool2d(l) => l.backward(grad_out),
            Layer::Flatten(l) => l.backward(grad_out),
            Layer::Dense(l) => l.backward(grad_out),
            Layer::Dropout(l) => l.backward(grad_out),
            Layer::Residual(l) => l.backward(grad_out),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm2d(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Residual(l) => l.inner.iter_mut().flat_map(Layer::params_mut).collect(),
            Layer::Relu(_) | Layer::MaxPool2d(_) | Layer::Flatten(_) | Layer::Dropout(_) => vec![],
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm2d(l) => vec![&l.gamma, &l.beta],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::Residual(l) => l.inner.iter().flat_map(Layer::params).collect(),
            Layer::Relu(_) | Layer::MaxPool2d(_) | Layer::Flatten(_) | Layer::Dropout(_) => vec![],
        }
    }

    /// Learnable element count.
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Every persisted tensor (parameters and batch-norm running statistics), named
    /// relative to this layer.
    pub fn state(&self) -> Vec<(String, &Tensor<T>)> {
        match self {
            Layer::Conv2d(l) => vec![("weight".into(), &l.weight.value), ("bias".into(), &l.bias.value)],
            Layer::Dense(l) => vec![("weight".into(), &l.weight.value), ("bias".into(), &l.bias.value)],
            Layer::BatchNorm2d(l) => vec![
                ("gamma".into(), &l.gamma.value),
                ("beta".into(), &l.beta.value),
                ("running_mean".into(), &l.running_mean),
                ("running_var".into(), &l.running_var),
            ],
            Layer::Residual(l) => l
                .inner
                .iter()
                .enumerate()
                .flat_map(|(i, layer)| {
                    layer.state().into_iter().map(move |(name, t)| (format!("{i}.{name}"), t))
                })
                .collect(),
            Layer::Relu(_) | Layer::MaxPool2d(_) | Layer::Flatten(_) | Layer::Dropout(_) => vec![],
        }
    }

    pub fn state_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        match self {
            Layer::Conv2d(l) => vec![("weight".into(), &mut l.weight.value), ("bias".into(), &mut l.bias.value)],
            Layer::Dense(l) => vec![("weight".into(), &mut l.weight.value), ("bias".into(), &mut l.bias.value)],
            Layer::BatchNorm2d(l) => vec![
                ("gamma".into(), &mut l.gamma.value),
                ("beta".into(), &mut l.beta.value),
                ("running_mean".into(), &mut l.running_mean),
                ("running_var".into(), &mut l.running_var),
            ],
            Layer::Residual(l) => l
                .inner
                .iter_mut()
                .enumerate()
                .flat_map(|(i, layer)| {
                    layer.state_mut().into_iter().map(move |(name, t)| (format!("{i}.{name}"), t))
                })
                .collect(),
            Layer::Relu(_) | Layer::MaxPool2d(_) | Layer::Flatten(_) | Layer::Dropout(_) => vec![],
        }
    }

    /// Drops cached activations so idle models do not pin batch-sized buffers.
    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv2d(l) => l.clear_cache(),
            Layer::BatchNorm2d(l) => l.clear_cache(),
            Layer::Relu(l) => l.clear_cache(),
            Layer::MaxPool2d(l) => l.clear_cache(),
            Layer::Flatten(_) => {}
            Layer::Dense(l) => l.clear_cache(),
            Layer::Dropout(l) => l.clear_cache(),
            Layer::Residual(l) => l.inner.iter_mut().for_each(Layer::clear_cache),
        }
    }
}
