use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// `max(0, x)`; the subgradient at exactly 0 is taken as 0.
#[derive(Clone, Debug, Default)]
pub struct Relu<T: Scalar = f32> {
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Relu { input: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.input = Some(x.clone());
        relu(x)
    }

    pub fn backward(&self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::State("relu backward called before forward".into()))?;
        relu_backward(grad_out, x)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.input = None;
    }
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Scalar>(grad_out: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != x.shape() {
        return Err(Error::shape(format!(
            "relu grad {} does not match input {}",
            grad_out.shape(),
            x.shape()
        )));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(x.data())
        .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.dims(), data)
}

/// Row-wise softmax of `[N,K]` logits, computed as `exp(x − max)/Σ`.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let &[_, k] = x.dims() else {
        return Err(Error::shape(format!("softmax expects [N,K], got {}", x.shape())));
    };
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        row.iter_mut().for_each(|v| *v = *v / sum);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, max_rel_error, random_tensor};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_sign_cases() {
        let x = Tensor::from_vec(&[3], vec![-1.0f32, 0.0, 2.0]).unwrap();
        let mut r = Relu::new();
        assert_eq!(r.forward(&x).data(), &[0.0, 0.0, 2.0]);
        let g = r.backward(&Tensor::new(&[3], 1.0).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);

        let neg = Tensor::new(&[5], -3.0f32).unwrap();
        assert!(r.forward(&neg).data().iter().all(|&v| v == 0.0));
        assert!(r.backward(&Tensor::new(&[5], 1.0).unwrap()).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_backward_matches_finite_differences_away_from_kink() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Tensor<f64> = random_tensor::<f64, _>(&[40], &mut rng).map(|v| if v.abs() < 1e-3 { 0.5 } else { v });
        let r: Tensor<f64> = random_tensor(&[40], &mut rng);
        let g = relu_backward(&r, &x).unwrap();
        let num = central_difference(x.data(), 1e-5, |v| {
            relu(&Tensor::from_vec(&[40], v.to_vec()).unwrap()).mul(&r).unwrap().sum()
        });
        assert!(max_rel_error(g.data(), &num) < 1e-4);
    }

    #[test]
    fn softmax_hand_cases() {
        let u = softmax(&Tensor::new(&[1, 4], 0.0f64).unwrap()).unwrap();
        assert!(u.data().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let p = softmax(&Tensor::from_vec(&[1, 2], vec![0.0f64, 2f64.ln()]).unwrap()).unwrap();
        assert!((p.data()[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.data()[1] - 2.0 / 3.0).abs() < 1e-15);
        let big = softmax(&Tensor::from_vec(&[1, 2], vec![1000.0f32, -1000.0]).unwrap()).unwrap();
        assert!(big.is_finite());
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one_and_shift_invariant(
            v in proptest::collection::vec(-30.0f64..30.0, 4..=16),
            c in -100.0f64..100.0,
        ) {
            let k = 4;
            let n = v.len() / k;
            let x = Tensor::from_vec(&[n, k], v[..n * k].to_vec()).unwrap();
            let p = softmax(&x).unwrap();
            for row in p.data().chunks(k) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                prop_assert!(row.iter().all(|&q| q > 0.0 && q <= 1.0));
            }
            let shifted = softmax(&x.map(|a| a + c)).unwrap();
            for (a, b) in p.data().iter().zip(shifted.data()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
