//! Dense row-major tensors over `f32`/`f64`.
//!
//! The canonical activation layout is NHWC: `(batch, height, width, channels)`.
//! Weight layout for convolutions is `[kh, kw, in_channels, out_channels]`
//! (`[kh, kw, channels, 1]` for depthwise).

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use crate::error::{Error, Result};

/// Floating-point element type for tensors. Implemented for `f32` and `f64`.
///
/// Training runs at `f32`; oracle and gradient tests run at `f64` because
/// central finite differences are unreliable at `f32`.
pub trait Scalar:
    num_traits::Float
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense N-dimensional array. `data.len()` always equals the product of `shape`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension {
                op: "tensor::new",
                axis: "data length",
                expected,
                got: data.len(),
            });
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension {
                op: "tensor::new",
                axis: "shape",
                expected: 1,
                got: 0,
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![T::zero(); len] }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; len] }
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..len).map(|i| f(i)).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    /// Reinterpret the buffer under a new shape of equal element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::Dimension {
                op: "tensor::reshape",
                axis: "element count",
                expected,
                got: self.data.len(),
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Dimension guard used at kernel boundaries.
    pub fn expect_rank(&self, op: &'static str, rank: usize) -> Result<()> {
        if self.rank() != rank {
            return Err(Error::Dimension { op, axis: "rank", expected: rank, got: self.rank() });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    /// Elementwise accumulate: `self += other`. Shapes must match.
    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape, other.shape, "tensor add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    pub fn scalar_value(&self) -> T {
        assert_eq!(self.data.len(), 1, "scalar_value on non-scalar tensor");
        self.data[0]
    }

    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|x| !x.is_finite())
    }

    /// Order-dependent checksum over raw bit patterns. Used to detect any
    /// parameter change, including sign or tiny-magnitude updates.
    pub fn bit_checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for x in &self.data {
            let bits = x.as_f64().to_bits();
            h ^= bits;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        h
    }

    /// Cast the element type, rounding through `f64`.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64(x.as_f64())).collect(),
        }
    }
}

/// Row-major flat index for a rank-4 tensor.
#[inline(always)]
pub fn idx4(shape: &[usize], n: usize, h: usize, w: usize, c: usize) -> usize {
    ((n * shape[1] + h) * shape[2] + w) * shape[3] + c
}

/// Row-major flat index for a rank-2 tensor.
#[inline(always)]
pub fn idx2(shape: &[usize], r: usize, c: usize) -> usize {
    r * shape[1] + c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_length_mismatch() {
        let err = Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("data length"), "unexpected message: {msg}");
    }

    #[test]
    fn new_rejects_zero_dims() {
        assert!(Tensor::<f32>::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn data_length_tracks_shape_product() {
        let t = Tensor::<f32>::zeros(&[2, 5, 5, 3]);
        assert_eq!(t.len(), 150);
        assert_eq!(t.shape(), &[2, 5, 5, 3]);
        let r = t.reshape(vec![10, 15]).unwrap();
        assert_eq!(r.len(), 150);
    }

    #[test]
    fn idx4_is_row_major() {
        let shape = [2, 3, 4, 5];
        assert_eq!(idx4(&shape, 0, 0, 0, 0), 0);
        assert_eq!(idx4(&shape, 0, 0, 0, 4), 4);
        assert_eq!(idx4(&shape, 0, 0, 1, 0), 5);
        assert_eq!(idx4(&shape, 0, 1, 0, 0), 20);
        assert_eq!(idx4(&shape, 1, 0, 0, 0), 60);
    }

    #[test]
    fn checksum_changes_with_any_element() {
        let a = Tensor::<f32>::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let mut b = a.clone();
        b.data_mut()[2] = 3.0000002;
        assert_ne!(a.bit_checksum(), b.bit_checksum());
    }
}
