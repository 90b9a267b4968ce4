use crate::error::{Error, Result};
use crate::layers::Param;
use crate::tensor::{Scalar, Tensor};

pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// Stochastic gradient descent with classical momentum:
/// `v ← γ·v − α·g`, `θ ← θ + v`. Velocities start at zero and are allocated on the
/// first step to mirror the parameter shapes.
#[derive(Clone, Debug)]
pub struct SgdMomentum<T: Scalar = f32> {
    learning_rate: f64,
    momentum: f64,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> SgdMomentum<T> {
    pub fn new(learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::config(format!("momentum must be in [0, 1), got {momentum}")));
        }
        Ok(SgdMomentum { learning_rate, momentum, velocity: Vec::new() })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::shape(format!(
                    "parameter {i} is {} but its gradient is {}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| Tensor::zeros(p.dims())).collect();
        } else if self.velocity.len() != params.len()
            || self.velocity.iter().zip(params.iter()).any(|(v, p)| v.shape() != p.shape())
        {
            return Err(Error::shape("parameter list does not match optimizer state"));
        }

        let lr = T::from_f64_lossy(self.learning_rate);
        let mu = T::from_f64_lossy(self.momentum);
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((theta, &grad), vel) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vel = mu * *vel - lr * grad;
                *theta = *theta + *vel;
            }
        }
        Ok(())
    }

    pub fn step_params(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        let (mut values, grads): (Vec<&mut Tensor<T>>, Vec<&Tensor<T>>) =
            params.iter_mut().map(|p| (&mut p.value, &p.grad)).unzip();
        self.step(&mut values, &grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::random_tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_momentum_is_plain_sgd_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let theta: Tensor<f64> = random_tensor(&[7], &mut rng);
        let g: Tensor<f64> = random_tensor(&[7], &mut rng);
        let mut opt = SgdMomentum::new(1e-2, 0.0).unwrap();
        for _ in 0..3 {
            let mut p = theta.clone();
            opt.step(&mut [&mut p], &[&g]).unwrap();
            let want = theta.sub(&g.map(|v| 1e-2 * v)).unwrap();
            assert_eq!(p, want);
        }
    }

    #[test]
    fn first_step_velocity() {
        let g = Tensor::from_vec(&[3], vec![1.0f64, -2.0, 0.5]).unwrap();
        let mut p = Tensor::<f64>::zeros(&[3]);
        let mut opt = SgdMomentum::new(1e-4, 0.9).unwrap();
        opt.step(&mut [&mut p], &[&g]).unwrap();
        assert_eq!(opt.velocity()[0], g.map(|v| -1e-4 * v));
        assert_eq!(p, opt.velocity()[0]);
    }

    #[test]
    fn constant_gradient_geometric_velocity() {
        let (lr, mu) = (1e-3, 0.9);
        let g = Tensor::new(&[2], 0.7f64).unwrap();
        let mut p = Tensor::<f64>::zeros(&[2]);
        let mut opt = SgdMomentum::new(lr, mu).unwrap();
        // iterate the recurrence independently of the optimizer
        let mut v_oracle = 0.0f64;
        for t in 1..=25 {
            opt.step(&mut [&mut p], &[&g]).unwrap();
            v_oracle = mu * v_oracle - lr * 0.7;
            let closed = -lr * 0.7 * (1.0 - mu.powi(t)) / (1.0 - mu);
            assert!((opt.velocity()[0].data()[0] - v_oracle).abs() < 1e-15);
            assert!((v_oracle - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_config_and_shapes() {
        assert!(SgdMomentum::<f32>::new(0.0, 0.9).is_err());
        assert!(SgdMomentum::<f32>::new(1e-4, 1.0).is_err());
        let mut opt = SgdMomentum::<f32>::new(1e-4, 0.9).unwrap();
        let mut p = Tensor::zeros(&[2]);
        assert!(opt.step(&mut [&mut p], &[&Tensor::zeros(&[3])]).is_err());
        assert!(opt.step(&mut [&mut p], &[]).is_err());
    }
}
