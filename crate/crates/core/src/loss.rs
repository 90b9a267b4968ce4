use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Mean softmax cross-entropy of a batch and its gradient with respect to the logits.
#[derive(Clone, Debug)]
pub struct LossValue<T: Scalar = f32> {
    pub mean_loss: f64,
    pub grad_logits: Tensor<T>,
}

/// `loss = −(1/N)·Σ log softmax(logits)[i, label_i]`, evaluated with log-sum-exp;
/// `grad = (softmax − onehot)/N`.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<LossValue<T>> {
    let &[n, k] = logits.dims() else {
        return Err(Error::shape(format!("cross_entropy expects [N,K] logits, got {}", logits.shape())));
    };
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} rows of logits", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Data(format!("label {bad} out of range for {k} classes")));
    }
    let mut grad = Tensor::zeros(&[n, k]);
    let mut total = 0.0;
    for ((row, g), &label) in logits.data().chunks_exact(k).zip(grad.data_mut().chunks_exact_mut(k)).zip(labels) {
        let row: Vec<f64> = row.iter().map(|v| v.to_f64().unwrap()).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[label];
        for (j, (gj, v)) in g.iter_mut().zip(&row).enumerate() {
            let p = (v - lse).exp();
            let onehot = if j == label { 1.0 } else { 0.0 };
            *gj = T::from_f64_lossy((p - onehot) / n as f64);
        }
    }
    Ok(LossValue { mean_loss: total / n as f64, grad_logits: grad })
}
