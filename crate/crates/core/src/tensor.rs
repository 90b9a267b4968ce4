//! Dense row-major tensors and the elementary kernels the layers are built on.
//!
//! Storage is a flat `Vec` plus an explicit [`Shape`]; there are no strided views.
//! Every operation returns a fresh tensor, so values handed between layers are never
//! aliased.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating-point element type. `f32` is used for training and inference, `f64` for
/// finite-difference gradient checks.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Sum + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// `c = a · b (+ c)` for row-major `a: [m,k]`, `b: [k,n]`, `c: [m,n]`.
    /// `a_t`/`b_t` mean the operand is stored transposed (`[k,m]` / `[n,k]`).
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_t: bool,
        b: &[Self],
        b_t: bool,
        c: &mut [Self],
        accumulate: bool,
    );

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every scalar type")
    }
}

macro_rules! impl_scalar {
    ($t:ty, $kernel:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_t: bool,
                b: &[Self],
                b_t: bool,
                c: &mut [Self],
                accumulate: bool,
            ) {
                assert!(a.len() >= m * k, "gemm: lhs too short");
                assert!(b.len() >= k * n, "gemm: rhs too short");
                assert!(c.len() >= m * n, "gemm: output too short");
                if m == 0 || n == 0 {
                    return;
                }
                let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: the asserts above guarantee every strided access stays in bounds.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::shape("shape must have at least one dimension"));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::shape(format!("dimension {pos} of {dims:?} is zero")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::shape(format!("element count of {dims:?} overflows")))?;
        Ok(Shape(dims.to_vec()))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Tensor of the given shape with every element equal to `fill`.
    pub fn new(dims: &[usize], fill: T) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = vec![fill; shape.numel()];
        Ok(Tensor { shape, data })
    }

    /// Panics on an invalid shape; for internal buffers whose dims are already validated.
    pub fn zeros(dims: &[usize]) -> Self {
        Self::new(dims, T::zero()).expect("valid shape")
    }

    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::shape(format!(
                "{} elements cannot fill shape {shape}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        Self::from_vec(dims, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }

    pub fn elementwise(&self, other: &Tensor<T>, op: ElementwiseOp) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "elementwise {op:?} of {} and {}",
                self.shape, other.shape
            )));
        }
        let f = match op {
            ElementwiseOp::Add => |a: T, b: T| a + b,
            ElementwiseOp::Sub => |a: T, b: T| a - b,
            ElementwiseOp::Mul => |a: T, b: T| a * b,
        };
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Self> {
        self.elementwise(other, ElementwiseOp::Add)
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Self> {
        self.elementwise(other, ElementwiseOp::Sub)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Self> {
        self.elementwise(other, ElementwiseOp::Mul)
    }

    /// Matrix product of `[M,K]` and `[K,N]`.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Self> {
        let (&[m, k], &[k2, n]) = (self.dims(), other.dims()) else {
            return Err(Error::shape(format!(
                "matmul needs rank-2 operands, got {} and {}",
                self.shape, other.shape
            )));
        };
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dims differ: {} vs {}",
                self.shape, other.shape
            )));
        }
        let mut out = Tensor::zeros(&[m, n]);
        T::gemm(m, k, n, &self.data, false, &other.data, false, &mut out.data, false);
        Ok(out)
    }

    fn as_nchw(&self, what: &str) -> Result<[usize; 4]> {
        match *self.dims() {
            [n, c, h, w] => Ok([n, c, h, w]),
            _ => Err(Error::shape(format!("{what} expects [N,C,H,W], got {}", self.shape))),
        }
    }

    /// Zero-pads the two spatial axes of an `[N,C,H,W]` tensor by `pad` on every side.
    pub fn pad2d(&self, pad: usize) -> Result<Self> {
        let [n, c, h, w] = self.as_nchw("pad2d")?;
        if pad == 0 {
            return Ok(self.clone());
        }
        let (hp, wp) = (h + 2 * pad, w + 2 * pad);
        let mut out = Tensor::zeros(&[n, c, hp, wp]);
        for plane in 0..n * c {
            let src = &self.data[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out.data[plane * hp * wp..(plane + 1) * hp * wp];
            for (i, row) in src.chunks_exact(w).enumerate() {
                let start = (i + pad) * wp + pad;
                dst[start..start + w].copy_from_slice(row);
            }
        }
        Ok(out)
    }

    /// Inverse of [`Tensor::pad2d`]: drops `pad` rows/columns from every spatial border.
    pub fn crop2d(&self, pad: usize) -> Result<Self> {
        let [n, c, hp, wp] = self.as_nchw("crop2d")?;
        if pad == 0 {
            return Ok(self.clone());
        }
        if hp <= 2 * pad || wp <= 2 * pad {
            return Err(Error::shape(format!("cannot crop {pad} from {}", self.shape)));
        }
        let (h, w) = (hp - 2 * pad, wp - 2 * pad);
        let mut out = Tensor::zeros(&[n, c, h, w]);
        for plane in 0..n * c {
            let src = &self.data[plane * hp * wp..(plane + 1) * hp * wp];
            let dst = &mut out.data[plane * h * w..(plane + 1) * h * w];
            for (i, row) in dst.chunks_exact_mut(w).enumerate() {
                let start = (i + pad) * wp + pad;
                row.copy_from_slice(&src[start..start + w]);
            }
        }
        Ok(out)
    }

    /// Index of the maximum along `axis` for every position of the remaining axes
    /// (row-major order over those axes). Ties resolve to the lowest index.
    pub fn argmax_axis(&self, axis: usize) -> Result<Vec<usize>> {
        let dims = self.dims();
        if axis >= dims.len() {
            return Err(Error::shape(format!("axis {axis} out of range for {}", self.shape)));
        }
        let len = dims[axis];
        let inner: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut best = 0;
                let mut best_val = self.data[base];
                for j in 1..len {
                    let v = self.data[base + j * inner];
                    if v > best_val {
                        best = j;
                        best_val = v;
                    }
                }
                out.push(best);
            }
        }
        Ok(out)
    }
}
