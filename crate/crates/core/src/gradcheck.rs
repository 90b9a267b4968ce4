//! Central finite-difference checks of every hand-written backward pass, in 64-bit.
//!
//! Each layer check uses the scalar probe `L = Σ forward(x) ⊙ R` for a fixed random `R`,
//! so dL/dout = R. The composed-network check uses the cross-entropy loss instead.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::layers::{BatchNorm2d, Conv2d, Dense, Dropout, Layer, MaxPool2d, Mode, Relu, Residual, relu, relu_backward};
use crate::loss::cross_entropy;
use crate::model::{build_okannet, Network};
use crate::tensor::{Scalar, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely rather than relatively.
/// Round-off in a central difference is about `eps * |loss| / h`, roughly 1e-10 here,
/// and structurally zero gradients (a conv bias feeding batch norm) sit at that level.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

/// Central differences `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate.
pub fn central_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let plus = f(&probe);
            probe[i] = x[i] - h;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

/// Largest element-wise `|a − n| / max(|a|, |n|, floor)`.
pub fn max_rel_error<T: Scalar>(analytic: &[T], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, &n)| {
            let a = a.to_f64().unwrap();
            (a - n).abs() / a.abs().max(n.abs()).max(REL_ERROR_FLOOR)
        })
        .fold(0.0, f64::max)
}

/// Uniform(−1, 1) tensor.
pub fn random_tensor<T: Scalar, R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Tensor<T> {
    let mut t = Tensor::new(dims, T::zero()).expect("valid dims");
    for v in t.data_mut() {
        *v = T::from_f64_lossy(rng.random_range(-1.0..1.0));
    }
    t
}

/// Test hook: deliberately break one backward pass to prove the suite can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    ConvBackwardSignFlip,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckEntry {
    pub check: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub tolerance: f64,
    pub entries: Vec<GradcheckEntry>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "gradient check (seed {}, tolerance {:e})", self.seed, self.tolerance)?;
        for e in &self.entries {
            writeln!(
                f,
                "  {:<28} max rel err {:>10.3e}  {}",
                e.check,
                e.max_rel_error,
                if e.passed { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

pub fn gradcheck_suite(seed: u64) -> Result<GradcheckReport> {
    gradcheck_suite_with(seed, Fault::None)
}

pub fn gradcheck_suite_with(seed: u64, fault: Fault) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results: Vec<(String, f64)> = Vec::new();
    results.extend(check_conv(&mut rng, fault)?);
    results.extend(check_batchnorm(&mut rng)?);
    results.extend(check_dense(&mut rng)?);
    results.push(("dropout (fixed mask) input".into(), check_dropout(&mut rng)?));
    results.push(("maxpool (unique max) input".into(), check_maxpool(&mut rng)?));
    results.push(("relu (|x| > 1e-3) input".into(), check_relu(&mut rng)?));
    results.push(("residual block input".into(), check_residual(&mut rng)?));
    results.push(("cross-entropy logits".into(), check_cross_entropy(&mut rng)?));
    results.extend(check_okannet(&mut rng)?);
    Ok(GradcheckReport {
        seed,
        tolerance: TOLERANCE,
        entries: results
            .into_iter()
            .map(|(check, err)| GradcheckEntry { passed: err < TOLERANCE, check, max_rel_error: err })
            .collect(),
    })
}

fn probe_loss(out: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    out.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn with_data(like: &Tensor<f64>, v: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(like.dims(), v.to_vec()).expect("same element count")
}

fn check_conv(rng: &mut ChaCha8Rng, fault: Fault) -> Result<Vec<(String, f64)>> {
    let mut conv = Conv2d::<f64>::new(2, 3, rng)?;
    conv.bias.value = random_tensor(&[3], rng);
    let x: Tensor<f64> = random_tensor(&[1, 2, 5, 5], rng);
    let r: Tensor<f64> = random_tensor(&[1, 3, 5, 5], rng);
    conv.forward(&x)?;
    let mut gx = conv.backward(&r)?;
    let (mut gw, mut gb) = (conv.weight.grad.clone(), conv.bias.grad.clone());
    if fault == Fault::ConvBackwardSignFlip {
        gx = gx.map(|v| -v);
        gw = gw.map(|v| -v);
        gb = gb.map(|v| -v);
    }
    let mut p = conv.clone();
    let nx = central_difference(x.data(), FD_STEP, |v| probe_loss(&p.forward(&with_data(&x, v)).unwrap(), &r));
    let w0 = conv.weight.value.clone();
    let nw = central_difference(w0.data(), FD_STEP, |v| {
        p.weight.value = with_data(&w0, v);
        probe_loss(&p.forward(&x).unwrap(), &r)
    });
    p.weight.value = w0;
    let b0 = conv.bias.value.clone();
    let nb = central_difference(b0.data(), FD_STEP, |v| {
        p.bias.value = with_data(&b0, v);
        probe_loss(&p.forward(&x).unwrap(), &r)
    });
    Ok(vec![
        ("conv2d input".into(), max_rel_error(gx.data(), &nx)),
        ("conv2d weight".into(), max_rel_error(gw.data(), &nw)),
        ("conv2d bias".into(), max_rel_error(gb.data(), &nb)),
    ])
}

fn check_batchnorm(rng: &mut ChaCha8Rng) -> Result<Vec<(String, f64)>> {
    let mut bn = BatchNorm2d::<f64>::new(2)?;
    bn.gamma.value = random_tensor(&[2], rng).map(|v| v + 1.5);
    bn.beta.value = random_tensor(&[2], rng);
    let x: Tensor<f64> = random_tensor(&[4, 2, 3, 3], rng);
    let r: Tensor<f64> = random_tensor(&[4, 2, 3, 3], rng);
    bn.forward(&x, Mode::Train)?;
    let gx = bn.backward(&r)?;
    let mut p = bn.clone();
    let nx = central_difference(x.data(), FD_STEP, |v| {
        probe_loss(&p.forward(&with_data(&x, v), Mode::Train).unwrap(), &r)
    });
    let g0 = bn.gamma.value.clone();
    let ng = central_difference(g0.data(), FD_STEP, |v| {
        p.gamma.value = with_data(&g0, v);
        probe_loss(&p.forward(&x, Mode::Train).unwrap(), &r)
    });
    p.gamma.value = g0;
    let b0 = bn.beta.value.clone();
    let nb = central_difference(b0.data(), FD_STEP, |v| {
        p.beta.value = with_data(&b0, v);
        probe_loss(&p.forward(&x, Mode::Train).unwrap(), &r)
    });
    Ok(vec![
        ("batchnorm input".into(), max_rel_error(gx.data(), &nx)),
        ("batchnorm gamma".into(), max_rel_error(bn.gamma.grad.data(), &ng)),
        ("batchnorm beta".into(), max_rel_error(bn.beta.grad.data(), &nb)),
    ])
}

fn check_dense(rng: &mut ChaCha8Rng) -> Result<Vec<(String, f64)>> {
    let mut d = Dense::<f64>::new(3, 4, rng)?;
    d.bias.value = random_tensor(&[4], rng);
    let x: Tensor<f64> = random_tensor(&[2, 3], rng);
    let r: Tensor<f64> = random_tensor(&[2, 4], rng);
    d.forward(&x)?;
    let gx = d.backward(&r)?;
    let mut p = d.clone();
    let nx = central_difference(x.data(), FD_STEP, |v| probe_loss(&p.forward(&with_data(&x, v)).unwrap(), &r));
    let w0 = d.weight.value.clone();
    let nw = central_difference(w0.data(), FD_STEP, |v| {
        p.weight.value = with_data(&w0, v);
        probe_loss(&p.forward(&x).unwrap(), &r)
    });
    p.weight.value = w0;
    let b0 = d.bias.value.clone();
    let nb = central_difference(b0.data(), FD_STEP, |v| {
        p.bias.value = with_data(&b0, v);
        probe_loss(&p.forward(&x).unwrap(), &r)
    });
    Ok(vec![
        ("dense input".into(), max_rel_error(gx.data(), &nx)),
        ("dense weight".into(), max_rel_error(d.weight.grad.data(), &nw)),
        ("dense bias".into(), max_rel_error(d.bias.grad.data(), &nb)),
    ])
}

fn check_dropout(rng: &mut ChaCha8Rng) -> Result<f64> {
    let mut d = Dropout::<f64>::new(0.5, rng.random())?;
    let x: Tensor<f64> = random_tensor(&[3, 8], rng);
    let r: Tensor<f64> = random_tensor(&[3, 8], rng);
    d.forward(&x, Mode::Train)?;
    let gx = d.backward(&r)?;
    let nx = central_difference(x.data(), FD_STEP, |v| {
        probe_loss(&d.forward_with_cached_mask(&with_data(&x, v)).unwrap(), &r)
    });
    Ok(max_rel_error(gx.data(), &nx))
}

fn check_maxpool(rng: &mut ChaCha8Rng) -> Result<f64> {
    // distinct values spaced far wider than the FD step, so every window max is unique
    let mut values: Vec<f64> = (0..72).map(|i| i as f64 / 72.0 - 0.5).collect();
    values.shuffle(rng);
    let x = Tensor::from_vec(&[1, 2, 6, 6], values)?;
    let r: Tensor<f64> = random_tensor(&[1, 2, 3, 3], rng);
    let mut pool = MaxPool2d::new();
    pool.forward(&x)?;
    let gx = pool.backward(&r)?;
    let nx = central_difference(x.data(), FD_STEP, |v| probe_loss(&pool.forward(&with_data(&x, v)).unwrap(), &r));
    Ok(max_rel_error(gx.data(), &nx))
}

fn check_relu(rng: &mut ChaCha8Rng) -> Result<f64> {
    let x = random_tensor::<f64, _>(&[2, 16], rng).map(|v| if v.abs() <= 1e-3 { 0.5 } else { v });
    let r: Tensor<f64> = random_tensor(&[2, 16], rng);
    let mut layer = Relu::new();
    layer.forward(&x);
    let gx = layer.backward(&r)?;
    debug_assert_eq!(gx, relu_backward(&r, &x)?);
    let nx = central_difference(x.data(), FD_STEP, |v| probe_loss(&relu(&with_data(&x, v)), &r));
    Ok(max_rel_error(gx.data(), &nx))
}

fn check_residual(rng: &mut ChaCha8Rng) -> Result<f64> {
    let conv = Conv2d::<f64>::new(2, 2, rng)?;
    let mut block = Residual::new(vec![
        Layer::Conv2d(conv),
        Layer::BatchNorm2d(BatchNorm2d::new(2)?),
        Layer::Relu(Relu::new()),
    ]);
    let x: Tensor<f64> = random_tensor(&[2, 2, 4, 4], rng);
    let r: Tensor<f64> = random_tensor(&[2, 2, 4, 4], rng);
    block.forward(&x, Mode::Train)?;
    let gx = block.backward(&r)?;
    let mut p = block.clone();
    let nx = central_difference(x.data(), FD_STEP, |v| {
        probe_loss(&p.forward(&with_data(&x, v), Mode::Train).unwrap(), &r)
    });
    Ok(max_rel_error(gx.data(), &nx))
}

fn check_cross_entropy(rng: &mut ChaCha8Rng) -> Result<f64> {
    let logits: Tensor<f64> = random_tensor(&[5, 4], rng).map(|v| 3.0 * v);
    let labels: Vec<usize> = (0..5).map(|_| rng.random_range(0..4)).collect();
    let g = cross_entropy(&logits, &labels)?.grad_logits;
    let n = central_difference(logits.data(), FD_STEP, |v| {
        cross_entropy(&with_data(&logits, v), &labels).unwrap().mean_loss
    });
    Ok(max_rel_error(g.data(), &n))
}

/// Train-mode forward that reuses each dropout layer's existing mask, so repeated
/// evaluations see the same function.
fn forward_replaying_dropout(net: &mut Network<f64>, x: &Tensor<f64>) -> Result<Tensor<f64>> {
    let mut h = x.clone();
    for layer in net.layers_mut() {
        h = match layer {
            Layer::Dropout(d) => d.forward_with_cached_mask(&h)?,
            other => other.forward(&h, Mode::Train)?,
        };
    }
    Ok(h)
}

/// Largest number of coordinates probed per parameter tensor of the composed network.
const PARAM_SAMPLES: usize = 24;

fn check_okannet(rng: &mut ChaCha8Rng) -> Result<Vec<(String, f64)>> {
    let mut net = build_okannet::<f64>(4, 16, rng.random())?;
    // non-trivial BN affine parameters and biases
    for p in net.params_mut() {
        if p.value.dims().len() == 1 {
            let jitter: Tensor<f64> = random_tensor(p.value.dims(), rng);
            p.value = p.value.add(&jitter.map(|v| 0.2 * v))?;
        }
    }
    let x: Tensor<f64> = random_tensor(&[2, 3, 16, 16], rng);
    let labels: Vec<usize> = (0..2).map(|_| rng.random_range(0..4)).collect();
    let logits = net.forward(&x, Mode::Train)?;
    let loss = cross_entropy(&logits, &labels)?;
    let gx = net.backward(&loss.grad_logits)?;
    let analytic: Vec<Tensor<f64>> = net.params().iter().map(|p| p.grad.clone()).collect();

    let eval = |net: &mut Network<f64>, x: &Tensor<f64>| -> f64 {
        let logits = forward_replaying_dropout(net, x).unwrap();
        cross_entropy(&logits, &labels).unwrap().mean_loss
    };
    let nx = central_difference(x.data(), FD_STEP, |v| eval(&mut net, &with_data(&x, v)));
    let input_err = max_rel_error(gx.data(), &nx);

    let mut param_err: f64 = 0.0;
    for (pi, grad) in analytic.iter().enumerate() {
        let mut idx: Vec<usize> = (0..grad.len()).collect();
        idx.shuffle(rng);
        idx.truncate(PARAM_SAMPLES);
        for &j in &idx {
            let orig = net.params()[pi].value.data()[j];
            let at = |delta: f64, net: &mut Network<f64>| {
                net.params_mut()[pi].value.data_mut()[j] = orig + delta;
                eval(net, &x)
            };
            let num = (at(FD_STEP, &mut net) - at(-FD_STEP, &mut net)) / (2.0 * FD_STEP);
            net.params_mut()[pi].value.data_mut()[j] = orig;
            param_err = param_err.max(max_rel_error(&[grad.data()[j]], &[num]));
        }
    }
    Ok(vec![
        ("okannet (3 blocks) input".into(), input_err),
        ("okannet (3 blocks) params".into(), param_err),
    ])
}
