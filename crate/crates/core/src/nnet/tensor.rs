use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Scalar type of the engine: `f32` for training, `f64` for gradient checks.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("real converts to f64")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Default
        + Debug
        + Send
        + Sync
        + Sum
        + AddAssign
        + SubAssign
        + MulAssign
        + 'static
{
}

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Trips in debug builds when a NaN or infinity shows up.
    pub fn debug_assert_finite(&self, what: &str) {
        debug_assert!(self.all_finite(), "non-finite values in {what}");
    }
}

/// `out[m,n] (+)= a[m,k] * b[k,n]`.
pub fn matmul_into<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T], accumulate: bool) {
    if !accumulate {
        out[..m * n].iter_mut().for_each(|v| *v = T::zero());
    }
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * *bv;
            }
        }
    }
}

/// `out[k,n] += a[m,k]^T * b[m,n]`.
pub fn matmul_at_b_acc<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * *bv;
            }
        }
    }
}

/// `out[m,k] (+)= a[m,n] * b[k,n]^T`.
pub fn matmul_a_bt_into<T: Real>(a: &[T], b: &[T], m: usize, n: usize, k: usize, out: &mut [T], accumulate: bool) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let dot: T = arow.iter().zip(brow).fold(T::zero(), |s, (x, y)| s + *x * *y);
            if accumulate {
                out[i * k + p] += dot;
            } else {
                out[i * k + p] = dot;
            }
        }
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Numerically stable softmax.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean cross-entropy `-log p[target]`, clamped away from log(0).
pub fn cross_entropy<T: Real>(probs: &[T], target: usize) -> T {
    let tiny = T::from_f64_lossy(1e-30);
    -(probs[target].max(tiny)).ln()
}

/// Gradient of softmax + cross-entropy with respect to the logits.
pub fn softmax_cross_entropy_grad<T: Real>(probs: &[T], target: usize) -> Vec<T> {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| if i == target { p - T::one() } else { p })
        .collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::<f64>::from_vec(&[2, 3], vec![1.0; 6]).unwrap();
        assert!(t.clone().reshape(&[3, 2]).is_ok());
        assert!(t.reshape(&[4]).is_err());
    }

    #[test]
    fn matmul_variants_agree() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 - 2.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|v| (v as f64) * 0.5).collect(); // 3x4
        let mut ab = vec![0.0; 8];
        matmul_into(&a, &b, 2, 3, 4, &mut ab, false);
        for i in 0..2 {
            for j in 0..4 {
                let direct: f64 = (0..3).map(|p| a[i * 3 + p] * b[p * 4 + j]).sum();
                assert_eq!(ab[i * 4 + j], direct);
            }
        }
        // a^T * ab : [3,4]
        let mut atb = vec![0.0; 12];
        matmul_at_b_acc(&a, &ab, 2, 3, 4, &mut atb);
        for p in 0..3 {
            for j in 0..4 {
                let direct: f64 = (0..2).map(|i| a[i * 3 + p] * ab[i * 4 + j]).sum();
                assert_eq!(atb[p * 4 + j], direct);
            }
        }
        // ab * b^T : [2,3]
        let mut abbt = vec![0.0; 6];
        matmul_a_bt_into(&ab, &b, 2, 4, 3, &mut abbt, false);
        for i in 0..2 {
            for p in 0..3 {
                let direct: f64 = (0..4).map(|j| ab[i * 4 + j] * b[p * 4 + j]).sum();
                assert_eq!(abbt[i * 3 + p], direct);
            }
        }
    }

    #[test]
    fn softmax_is_a_simplex_point() {
        let p = softmax(&[1000.0f64, -1000.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| *v >= 0.0));
        assert_eq!(softmax(&[0.3f64, 0.3]), vec![0.5, 0.5]);
    }

    #[test]
    fn ce_gradient_closed_form() {
        let p = vec![0.2f64, 0.7, 0.1];
        assert_eq!(softmax_cross_entropy_grad(&p, 1), vec![0.2, 0.7 - 1.0, 0.1]);
        assert!((cross_entropy(&p, 1) + 0.7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[1.0 / 3.0; 3]), 0);
        assert_eq!(argmax(&[0.1, 0.9]), 1);
    }
}
