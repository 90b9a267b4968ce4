use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// He-normal initialization: i.i.d. `N(0, 2/fan_in)`.
pub fn he_init<T: Scalar>(dims: &[usize], fan_in: usize, seed: u64) -> Result<Tensor<T>> {
    he_init_with_rng(dims, fan_in, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn he_init_with_rng<T: Scalar, R: Rng + ?Sized>(
    dims: &[usize],
    fan_in: usize,
    rng: &mut R,
) -> Result<Tensor<T>> {
    let normal = Normal::new(0.0, he_std(fan_in)?).expect("std is finite and positive");
    let mut t = Tensor::new(dims, T::zero())?;
    for v in t.data_mut() {
        *v = T::from_f64_lossy(normal.sample(rng));
    }
    Ok(t)
}

pub fn he_std(fan_in: usize) -> Result<f64> {
    if fan_in == 0 {
        return Err(Error::config("he_init: fan_in must be at least 1"));
    }
    Ok((2.0 / fan_in as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_std(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    #[test]
    fn std_values() {
        assert!((he_std(27).unwrap() - 0.272_165_5).abs() < 1e-6);
        assert_eq!(he_std(2).unwrap(), 1.0);
        assert!(he_init::<f32>(&[3], 0, 1).is_err());
    }

    #[test]
    fn empirical_std_within_five_percent() {
        let t: Tensor<f64> = he_init(&[10_000], 144, 3).unwrap();
        let (mean, std) = sample_std(t.data());
        let want = (2.0f64 / 144.0).sqrt();
        assert!((want - 0.1179).abs() < 1e-4);
        assert!((std - want).abs() / want < 0.05, "std {std}");
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn conv_sized_init_within_twenty_percent() {
        // second OkanNet conv: fan_in 16*9 = 144, 32 filters
        let t: Tensor<f64> = he_init(&[32, 16, 3, 3], 144, 11).unwrap();
        let (_, std) = sample_std(t.data());
        assert!((std - he_std(144).unwrap()).abs() / he_std(144).unwrap() < 0.2);
    }

    #[test]
    fn deterministic_given_seed() {
        let a: Tensor<f32> = he_init(&[4, 4], 4, 9).unwrap();
        let b: Tensor<f32> = he_init(&[4, 4], 4, 9).unwrap();
        let c: Tensor<f32> = he_init(&[4, 4], 4, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
