//! OkanNet layer stack: a serializable [`ModelSpec`] and the [`Network`] built from it.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    softmax, BatchNorm2d, Conv2d, Dense, Dropout, Flatten, Layer, MaxPool2d, Mode, Param, Relu, Residual,
    KERNEL,
};
use crate::tensor::{Scalar, Tensor};

pub const OKANNET_FILTERS: [usize; 3] = [16, 32, 64];
pub const OKANNET_HIDDEN: usize = 128;
pub const OKANNET_DROPOUT: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    Conv2d { name: String, in_channels: usize, out_channels: usize },
    BatchNorm2d { name: String, channels: usize },
    Relu { name: String },
    MaxPool2d { name: String },
    Flatten { name: String },
    Dense { name: String, in_features: usize, out_features: usize },
    Dropout { name: String, rate: f64 },
    Residual { name: String, inner: Vec<LayerSpec> },
    /// Output head; only valid as the final layer.
    Softmax { name: String },
}

impl LayerSpec {
    pub fn name(&self) -> &str {
        match self {
            LayerSpec::Conv2d { name, .. }
            | LayerSpec::BatchNorm2d { name, .. }
            | LayerSpec::Relu { name }
            | LayerSpec::MaxPool2d { name }
            | LayerSpec::Flatten { name }
            | LayerSpec::Dense { name, .. }
            | LayerSpec::Dropout { name, .. }
            | LayerSpec::Residual { name, .. }
            | LayerSpec::Softmax { name } => name,
        }
    }

    /// Learnable parameter count from the descriptor alone.
    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Conv2d { in_channels, out_channels, .. } => {
                in_channels * KERNEL * KERNEL * out_channels + out_channels
            }
            LayerSpec::BatchNorm2d { channels, .. } => 2 * channels,
            LayerSpec::Dense { in_features, out_features, .. } => in_features * out_features + out_features,
            LayerSpec::Residual { inner, .. } => inner.iter().map(LayerSpec::param_count).sum(),
            _ => 0,
        }
    }

    /// Per-sample output dims for per-sample input dims.
    fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |what: String| Error::shape(format!("layer {}: {what}", self.name()));
        match self {
            LayerSpec::Conv2d { in_channels, out_channels, .. } => match *input {
                [c, h, w] if c == *in_channels => Ok(vec![*out_channels, h, w]),
                _ => Err(mismatch(format!("expects [{in_channels},H,W], got {input:?}"))),
            },
            LayerSpec::BatchNorm2d { channels, .. } => match *input {
                [c, _, _] if c == *channels => Ok(input.to_vec()),
                _ => Err(mismatch(format!("expects [{channels},H,W], got {input:?}"))),
            },
            LayerSpec::MaxPool2d { .. } => match *input {
                [c, h, w] => {
                    let (ho, wo) = MaxPool2d::output_hw(h, w)?;
                    Ok(vec![c, ho, wo])
                }
                _ => Err(mismatch(format!("expects [C,H,W], got {input:?}"))),
            },
            LayerSpec::Flatten { .. } => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { in_features, out_features, .. } => match *input {
                [d] if d == *in_features => Ok(vec![*out_features]),
                _ => Err(mismatch(format!("expects [{in_features}], got {input:?}"))),
            },
            LayerSpec::Residual { inner, .. } => {
                let mut dims = input.to_vec();
                for l in inner {
                    dims = l.output_dims(&dims)?;
                }
                if dims != input {
                    return Err(mismatch(format!("inner path maps {input:?} to {dims:?}")));
                }
                Ok(dims)
            }
            LayerSpec::Relu { .. } | LayerSpec::Dropout { .. } | LayerSpec::Softmax { .. } => Ok(input.to_vec()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Per-sample input dims `[C, H, W]`.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Three conv blocks (3×3 same conv, batch norm, ReLU, 2×2/2 max pool) with 16, 32 and
    /// 64 filters, then Flatten → Dense 128 → ReLU → Dropout 0.5 → Dense K → Softmax.
    pub fn okannet(num_classes: usize, image_size: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::config(format!("need at least 2 classes, got {num_classes}")));
        }
        if image_size == 0 || !image_size.is_multiple_of(8) {
            return Err(Error::config(format!(
                "image size must be a positive multiple of 8 (three 2x pools), got {image_size}"
            )));
        }
        let mut layers = Vec::new();
        let mut in_channels = 3;
        for (i, &filters) in OKANNET_FILTERS.iter().enumerate() {
            let b = i + 1;
            layers.push(LayerSpec::Conv2d { name: format!("Conv_{b}"), in_channels, out_channels: filters });
            layers.push(LayerSpec::BatchNorm2d { name: format!("BN_{b}"), channels: filters });
            layers.push(LayerSpec::Relu { name: format!("ReLU_{b}") });
            layers.push(LayerSpec::MaxPool2d { name: format!("Pool_{b}") });
            in_channels = filters;
        }
        let side = image_size / 8;
        let flat = side * side * in_channels;
        layers.extend([
            LayerSpec::Flatten { name: "Flatten".into() },
            LayerSpec::Dense { name: "FC_1".into(), in_features: flat, out_features: OKANNET_HIDDEN },
            LayerSpec::Relu { name: "ReLU_FC".into() },
            LayerSpec::Dropout { name: "Dropout".into(), rate: OKANNET_DROPOUT },
            LayerSpec::Dense { name: "FC_Out".into(), in_features: OKANNET_HIDDEN, out_features: num_classes },
            LayerSpec::Softmax { name: "Softmax".into() },
        ]);
        Ok(ModelSpec { input: [3, image_size, image_size], layers })
    }

    /// Output dims of every layer for a single sample, validating the whole stack.
    pub fn shape_walk(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let mut dims = self.input.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            if matches!(layer, LayerSpec::Softmax { .. }) && i + 1 != self.layers.len() {
                return Err(Error::config("softmax is only supported as the final layer"));
            }
            dims = layer.output_dims(&dims)?;
            out.push((layer.name().to_string(), dims.clone()));
        }
        Ok(out)
    }

    pub fn num_classes(&self) -> Result<usize> {
        match self.shape_walk()?.last() {
            Some((_, dims)) if dims.len() == 1 => Ok(dims[0]),
            _ => Err(Error::config("model does not end in a class-score vector")),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }
}

/// A runnable layer stack. `forward` returns logits; the trailing softmax head of the
/// spec is applied by [`Network::predict_proba`].
#[derive(Clone, Debug)]
pub struct Network<T: Scalar = f32> {
    spec: ModelSpec,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Network<T> {
    /// Builds the stack with He-initialized conv/dense weights, zero biases, unit gamma and
    /// zero beta. Deterministic given `seed`.
    pub fn from_spec(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.shape_walk()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layers
            .iter()
            .filter(|l| !matches!(l, LayerSpec::Softmax { .. }))
            .map(|l| build_layer(l, &mut rng))
            .collect::<Result<_>>()?;
        Ok(Network { spec, layers })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes().expect("validated at construction")
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        if x.dims().len() != 4 || x.dims()[1..] != self.spec.input {
            return Err(Error::shape(format!(
                "model expects [N,{},{},{}] input, got {}",
                self.spec.input[0],
                self.spec.input[1],
                self.spec.input[2],
                x.shape()
            )));
        }
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, mode)?;
        }
        Ok(h)
    }

    /// Backpropagates dL/dlogits through the stack, filling every parameter gradient, and
    /// returns dL/dinput.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad_logits.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Infer-mode class probabilities `[N, K]`.
    pub fn predict_proba(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let logits = self.forward(x, Mode::Infer)?;
        self.clear_cache();
        softmax(&logits)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// `(layer name, learnable parameter count)` for every layer that has parameters.
    pub fn layer_param_counts(&self) -> Vec<(String, usize)> {
        self.named_layers()
            .filter(|(_, l)| l.param_count() > 0)
            .map(|(name, l)| (name.to_string(), l.param_count()))
            .collect()
    }

    fn named_layers(&self) -> impl Iterator<Item = (&str, &Layer<T>)> {
        self.spec.layers.iter().map(LayerSpec::name).zip(&self.layers)
    }

    /// All persisted tensors as `"<layer>.<tensor>"`, in layer order.
    pub fn named_state(&self) -> Vec<(String, &Tensor<T>)> {
        self.named_layers()
            .flat_map(|(lname, l)| l.state().into_iter().map(move |(t, v)| (format!("{lname}.{t}"), v)))
            .collect()
    }

    pub fn named_state_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let names: Vec<&str> = self.spec.layers.iter().map(LayerSpec::name).collect();
        names
            .into_iter()
            .zip(self.layers.iter_mut())
            .flat_map(|(lname, l)| l.state_mut().into_iter().map(move |(t, v)| (format!("{lname}.{t}"), v)))
            .collect()
    }

    pub fn clear_cache(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }
}

/// OkanNet with `num_classes` outputs for `image_size`² RGB input.
pub fn build_okannet<T: Scalar>(num_classes: usize, image_size: usize, seed: u64) -> Result<Network<T>> {
    Network::from_spec(ModelSpec::okannet(num_classes, image_size)?, seed)
}

fn build_layer<T: Scalar>(spec: &LayerSpec, rng: &mut ChaCha8Rng) -> Result<Layer<T>> {
    Ok(match spec {
        LayerSpec::Conv2d { in_channels, out_channels, .. } => {
            Layer::Conv2d(Conv2d::new(*in_channels, *out_channels, rng)?)
        }
        LayerSpec::BatchNorm2d { channels, .. } => Layer::BatchNorm2d(BatchNorm2d::new(*channels)?),
        LayerSpec::Relu { .. } => Layer::Relu(Relu::new()),
        LayerSpec::MaxPool2d { .. } => Layer::MaxPool2d(MaxPool2d::new()),
        LayerSpec::Flatten { .. } => Layer::Flatten(Flatten::default()),
        LayerSpec::Dense { in_features, out_features, .. } => {
            Layer::Dense(Dense::new(*in_features, *out_features, rng)?)
        }
        LayerSpec::Dropout { rate, .. } => Layer::Dropout(Dropout::new(*rate, rng.next_u64())?),
        LayerSpec::Residual { inner, .. } => Layer::Residual(Residual::new(
            inner.iter().map(|l| build_layer(l, rng)).collect::<Result<_>>()?,
        )),
        LayerSpec::Softmax { .. } => unreachable!("softmax head is not materialized as a layer"),
    })
}
