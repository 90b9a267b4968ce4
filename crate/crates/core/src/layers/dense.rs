use rand::Rng;

use super::{init, Param};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Fully connected layer, `y = x·W + b` with `W: [Din, Dout]`.
#[derive(Clone, Debug)]
pub struct Dense<T: Scalar = f32> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Result<Self> {
        let w = init::he_init_with_rng(&[in_features, out_features], in_features, rng)?;
        Self::from_weights(w, Tensor::new(&[out_features], T::zero())?)
    }

    pub fn from_weights(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let &[_, dout] = weight.dims() else {
            return Err(Error::shape(format!("dense weight must be [Din,Dout], got {}", weight.shape())));
        };
        if bias.dims() != [dout] {
            return Err(Error::shape(format!("dense bias must be [{dout}], got {}", bias.shape())));
        }
        Ok(Dense { weight: Param::new(weight), bias: Param::new(bias), input: None })
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.dims()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.dims()[1]
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let &[n, din] = x.dims() else {
            return Err(Error::shape(format!("dense expects [N,Din], got {}", x.shape())));
        };
        if din != self.in_features() {
            return Err(Error::shape(format!(
                "dense expects {} input features, got {din}",
                self.in_features()
            )));
        }
        let dout = self.out_features();
        let mut out = Tensor::zeros(&[n, dout]);
        T::gemm(n, din, dout, x.data(), false, self.weight.value.data(), false, out.data_mut(), false);
        let b = self.bias.value.data();
        for row in out.data_mut().chunks_exact_mut(dout) {
            row.iter_mut().zip(b).for_each(|(v, &b)| *v = *v + b);
        }
        self.input = Some(x.clone());
        Ok(out)
    }

    /// `grad_x = g·Wᵀ`, `grad_W = xᵀ·g`, `grad_b = Σ_rows g`.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::State("dense backward called before forward".into()))?;
        let (n, din, dout) = (x.dims()[0], self.in_features(), self.out_features());
        if grad_out.dims() != [n, dout] {
            return Err(Error::shape(format!(
                "dense grad must be [{n},{dout}], got {}",
                grad_out.shape()
            )));
        }
        let g = grad_out.data();
        let mut grad_x = Tensor::zeros(&[n, din]);
        T::gemm(n, dout, din, g, false, self.weight.value.data(), true, grad_x.data_mut(), false);
        T::gemm(din, n, dout, x.data(), true, g, false, self.weight.grad.data_mut(), false);
        let gb = self.bias.grad.data_mut();
        gb.iter_mut().for_each(|v| *v = T::zero());
        for row in g.chunks_exact(dout) {
            gb.iter_mut().zip(row).for_each(|(acc, &v)| *acc = *acc + v);
        }
        Ok(grad_x)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.input = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, max_rel_error, random_tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weights_and_zero_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let eye = Tensor::from_vec(&[3, 3], vec![1.0f32, 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        let mut d = Dense::from_weights(eye, Tensor::zeros(&[3])).unwrap();
        let x: Tensor<f32> = random_tensor(&[2, 3], &mut rng);
        assert_eq!(d.forward(&x).unwrap(), x);

        let mut d = Dense::<f32>::new(3, 2, &mut rng).unwrap();
        d.bias.value = Tensor::from_vec(&[2], vec![0.5, -1.0]).unwrap();
        let y = d.forward(&Tensor::zeros(&[4, 3])).unwrap();
        for row in y.data().chunks(2) {
            assert_eq!(row, &[0.5, -1.0]);
        }
        assert!(matches!(d.forward(&Tensor::zeros(&[4, 2])), Err(Error::Shape(_))));
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..3 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut d = Dense::<f64>::new(3, 4, &mut rng).unwrap();
            d.bias.value = random_tensor(&[4], &mut rng);
            let x: Tensor<f64> = random_tensor(&[2, 3], &mut rng);
            let r: Tensor<f64> = random_tensor(&[2, 4], &mut rng);
            d.forward(&x).unwrap();
            let gx = d.backward(&r).unwrap();
            let mut probe = d.clone();
            let loss = |p: &mut Dense<f64>, x: &Tensor<f64>| p.forward(x).unwrap().mul(&r).unwrap().sum();
            let num_x = central_difference(x.data(), 1e-5, |v| {
                loss(&mut probe, &Tensor::from_vec(&[2, 3], v.to_vec()).unwrap())
            });
            assert!(max_rel_error(gx.data(), &num_x) < 1e-4);
            let w0 = d.weight.value.clone();
            let num_w = central_difference(w0.data(), 1e-5, |v| {
                probe.weight.value = Tensor::from_vec(&[3, 4], v.to_vec()).unwrap();
                loss(&mut probe, &x)
            });
            assert!(max_rel_error(d.weight.grad.data(), &num_w) < 1e-4);
            probe.weight.value = w0;
            let num_b = central_difference(d.bias.value.data(), 1e-5, |v| {
                probe.bias.value = Tensor::from_vec(&[4], v.to_vec()).unwrap();
                loss(&mut probe, &x)
            });
            assert!(max_rel_error(d.bias.grad.data(), &num_b) < 1e-4);
        }
    }
}
