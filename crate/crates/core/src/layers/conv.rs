use rand::Rng;
use rayon::prelude::*;

use super::{init, Param};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const KERNEL: usize = 3;
/// Zero padding that keeps a 3×3 stride-1 output the same size as its input.
pub const SAME_PAD: usize = 1;

/// 3×3, stride 1, "same"-padded 2-D convolution (cross-correlation, no kernel flip):
/// `y[co,i,j] = Σ_ci Σ_m Σ_n xpad[ci, i+m, j+n] · w[co,ci,m,n] + b[co]`.
#[derive(Clone, Debug)]
pub struct Conv2d<T: Scalar = f32> {
    /// `[Cout, Cin, 3, 3]`
    pub weight: Param<T>,
    /// `[Cout]`
    pub bias: Param<T>,
    in_channels: usize,
    out_channels: usize,
    padded_input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    /// He-initialized weights, zero bias.
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, rng: &mut R) -> Result<Self> {
        let fan_in = in_channels * KERNEL * KERNEL;
        let w = init::he_init_with_rng(&[out_channels, in_channels, KERNEL, KERNEL], fan_in, rng)?;
        Self::from_weights(w, Tensor::new(&[out_channels], T::zero())?)
    }

    pub fn from_weights(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let &[cout, cin, KERNEL, KERNEL] = weight.dims() else {
            return Err(Error::shape(format!("conv weight must be [Cout,Cin,3,3], got {}", weight.shape())));
        };
        if bias.dims() != [cout] {
            return Err(Error::shape(format!("conv bias must be [{cout}], got {}", bias.shape())));
        }
        Ok(Conv2d {
            weight: Param::new(weight),
            bias: Param::new(bias),
            in_channels: cin,
            out_channels: cout,
            padded_input: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let &[n, cin, h, w] = x.dims() else {
            return Err(Error::shape(format!("conv2d expects [N,C,H,W], got {}", x.shape())));
        };
        if cin != self.in_channels {
            return Err(Error::shape(format!(
                "conv2d expects {} input channels, got {cin}",
                self.in_channels
            )));
        }
        let xp = x.pad2d(SAME_PAD)?;
        let cout = self.out_channels;
        let (hw, krows) = (h * w, cin * KERNEL * KERNEL);
        let plane = cin * (h + 2) * (w + 2);
        let weight = self.weight.value.data();
        let bias = self.bias.value.data();

        let mut out = Tensor::zeros(&[n, cout, h, w]);
        out.data_mut()
            .par_chunks_mut(cout * hw)
            .zip(xp.data().par_chunks(plane))
            .for_each_init(
                || vec![T::zero(); krows * hw],
                |cols, (y, xs)| {
                    im2col(xs, cin, h, w, cols);
                    T::gemm(cout, krows, hw, weight, false, cols, false, y, false);
                    for (row, &b) in y.chunks_exact_mut(hw).zip(bias) {
                        row.iter_mut().for_each(|v| *v = *v + b);
                    }
                },
            );
        self.padded_input = Some(xp);
        Ok(out)
    }

    /// Writes dL/dw and dL/db into the parameter grads and returns dL/dx.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let xp = self
            .padded_input
            .as_ref()
            .ok_or_else(|| Error::State("conv2d backward called before forward".into()))?;
        let &[n, cin, hp, wp] = xp.dims() else { unreachable!() };
        let (h, w, cout) = (hp - 2 * SAME_PAD, wp - 2 * SAME_PAD, self.out_channels);
        if grad_out.dims() != [n, cout, h, w] {
            return Err(Error::shape(format!(
                "conv2d grad must be {:?}, got {}",
                [n, cout, h, w],
                grad_out.shape()
            )));
        }
        let (hw, krows) = (h * w, cin * KERNEL * KERNEL);
        let plane = cin * hp * wp;
        let weight = self.weight.value.data();

        let mut grad_xp = Tensor::<T>::zeros(xp.dims());
        // Per-sample weight grads are reduced afterwards in sample order so the result
        // does not depend on thread scheduling.
        let per_sample: Vec<Vec<T>> = grad_xp
            .data_mut()
            .par_chunks_mut(plane)
            .zip(xp.data().par_chunks(plane))
            .zip(grad_out.data().par_chunks(cout * hw))
            .map_init(
                || (vec![T::zero(); krows * hw], vec![T::zero(); krows * hw]),
                |(cols, gcols), ((gx, xs), g)| {
                    im2col(xs, cin, h, w, cols);
                    let mut gw = vec![T::zero(); cout * krows];
                    T::gemm(cout, hw, krows, g, false, cols, true, &mut gw, false);
                    T::gemm(krows, cout, hw, weight, true, g, false, gcols, false);
                    col2im(gcols, cin, h, w, gx);
                    gw
                },
            )
            .collect();

        let gw = self.weight.grad.data_mut();
        gw.iter_mut().for_each(|v| *v = T::zero());
        for sample in &per_sample {
            for (acc, &v) in gw.iter_mut().zip(sample) {
                *acc = *acc + v;
            }
        }
        let gb = self.bias.grad.data_mut();
        gb.iter_mut().for_each(|v| *v = T::zero());
        for sample in grad_out.data().chunks_exact(cout * hw) {
            for (acc, row) in gb.iter_mut().zip(sample.chunks_exact(hw)) {
                *acc = *acc + row.iter().copied().sum();
            }
        }
        grad_xp.crop2d(SAME_PAD)
    }

    pub(crate) fn clear_cache(&mut self) {
        self.padded_input = None;
    }
}

/// Unfolds one padded `[C, H+2, W+2]` sample into `[C·9, H·W]` patch columns.
fn im2col<T: Scalar>(xp: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let (hp, wp, hw) = (h + 2 * SAME_PAD, w + 2 * SAME_PAD, h * w);
    for ci in 0..c {
        for kh in 0..KERNEL {
            for kw in 0..KERNEL {
                let row = &mut cols[(ci * 9 + kh * 3 + kw) * hw..][..hw];
                for i in 0..h {
                    let src = ci * hp * wp + (i + kh) * wp + kw;
                    row[i * w..(i + 1) * w].copy_from_slice(&xp[src..src + w]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch-column grads back into a padded sample.
fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, xp: &mut [T]) {
    let (hp, wp, hw) = (h + 2 * SAME_PAD, w + 2 * SAME_PAD, h * w);
    for ci in 0..c {
        for kh in 0..KERNEL {
            for kw in 0..KERNEL {
                let row = &cols[(ci * 9 + kh * 3 + kw) * hw..][..hw];
                for i in 0..h {
                    let dst = ci * hp * wp + (i + kh) * wp + kw;
                    for (d, &s) in xp[dst..dst + w].iter_mut().zip(&row[i * w..(i + 1) * w]) {
                        *d = *d + s;
                    }
                }
            }
        }
    }
}
