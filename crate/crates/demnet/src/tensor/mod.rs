//! Dense N-dimensional arrays with the arithmetic the layers need.
//!
//! Deliberately small: row-major contiguous storage only, no views, no
//! general broadcasting. The single permitted broadcast is over the channel
//! axis (axis 1), used for bias and batchnorm application. Training runs in
//! f32; f64 exists for gradient checking and oracle tests.

pub mod rng;

use crate::error::{Error, Result};
use std::fmt;

use rng::Rng;

/// Element type for tensors. f32 is the training precision, f64 the
/// verification precision.
pub trait Scalar:
    num_traits::Float + Default + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Product of extents, rejecting totals the address space cannot hold.
fn checked_len<T>(shape: &[usize]) -> Result<usize> {
    let mut n: usize = 1;
    for &d in shape {
        n = n
            .checked_mul(d)
            .ok_or_else(|| Error::Size(format!("shape {shape:?} overflows element count")))?;
    }
    let bytes = std::mem::size_of::<T>().max(1);
    if n > isize::MAX as usize / bytes {
        return Err(Error::Size(format!("shape {shape:?} exceeds addressable size")));
    }
    Ok(n)
}

impl<T: Scalar> Tensor<T> {
    /// Tensor of zeros.
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    /// Tensor filled with one value.
    pub fn full(shape: &[usize], fill: T) -> Result<Self> {
        let n = checked_len::<T>(shape)?;
        Ok(Tensor { shape: shape.to_vec(), data: vec![fill; n] })
    }

    /// Tensor from existing data. Length must equal the shape product.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = checked_len::<T>(shape)?;
        if data.len() != n {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {shape:?} (expects {n})",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    /// Normal(mean, std) fill, deterministic for a given generator state.
    pub fn randn(shape: &[usize], mean: f64, std: f64, rng: &mut Rng) -> Result<Self> {
        let n = checked_len::<T>(shape)?;
        let data = (0..n).map(|_| T::from_f64(mean + std * rng.normal())).collect();
        Ok(Tensor { shape: shape.to_vec(), data })
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

    /// Row-major strides for the current shape.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.shape[i + 1];
        }
        s
    }

    /// Linear offset of a multi-index. Panics on rank/bounds violations;
    /// intended for tests and small-tensor code, hot loops index manually.
    pub fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank mismatch");
        let mut off = 0;
        for (axis, (&i, &d)) in idx.iter().zip(&self.shape).enumerate() {
            assert!(i < d, "index {i} out of bounds for axis {axis} (extent {d})");
            off = off * d + i;
        }
        off
    }

    pub fn at(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: T) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    /// Same data under a new shape. The element count must be preserved.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n = checked_len::<T>(shape)?;
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} ({} elements) into {shape:?} ({n} elements)",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data: self.data.clone() })
    }

    /// Elementwise unary map.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    fn zip(&self, other: &Self, op: &str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{op}: shape {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, "sub", |a, b| a - b)
    }

    /// Hadamard product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, k: T) -> Self {
        self.map(|x| x * k)
    }

    pub fn max_with_scalar(&self, k: T) -> Self {
        self.map(|x| x.max(k))
    }

    /// Channel-axis broadcast add: self has rank ≥ 2 with channels on
    /// axis 1, `per_channel` is a rank-1 tensor of matching extent.
    pub fn add_channel(&self, per_channel: &Self) -> Result<Self> {
        self.channel_op(per_channel, "add_channel", |a, b| a + b)
    }

    /// Channel-axis broadcast multiply.
    pub fn mul_channel(&self, per_channel: &Self) -> Result<Self> {
        self.channel_op(per_channel, "mul_channel", |a, b| a * b)
    }

    fn channel_op(&self, per: &Self, op: &str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.rank() < 2 {
            return Err(Error::Shape(format!("{op}: needs rank >= 2, got {:?}", self.shape)));
        }
        let c = self.shape[1];
        if per.shape != [c] {
            return Err(Error::Shape(format!(
                "{op}: per-channel shape {:?} does not match channel extent {c}",
                per.shape
            )));
        }
        let inner: usize = self.shape[2..].iter().product();
        let mut out = self.clone();
        for n in 0..self.shape[0] {
            for ch in 0..c {
                let base = (n * c + ch) * inner;
                let v = per.data[ch];
                for x in &mut out.data[base..base + inner] {
                    *x = f(*x, v);
                }
            }
        }
        Ok(out)
    }

    /// 2-D matrix product: [M,K] x [K,N] -> [M,N].
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(Error::Shape(format!(
                "matmul: expects two rank-2 tensors, got {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul: inner extents differ, {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![T::zero(); m * n];
        // ikj order: the inner loop walks both b and out contiguously.
        for i in 0..m {
            for kk in 0..k {
                let a = self.data[i * k + kk];
                let brow = &other.data[kk * n..(kk + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o = *o + a * b;
                }
            }
        }
        Ok(Tensor { shape: vec![m, n], data: out })
    }

    /// 2-D transpose.
    pub fn transpose2d(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::Shape(format!("transpose2d: expects rank 2, got {:?}", self.shape)));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor { shape: vec![n, m], data })
    }

    fn reduce_prepare(&self, axes: &[usize], keep: bool) -> Result<(Vec<usize>, Vec<bool>)> {
        let mut reduced = vec![false; self.rank()];
        for &ax in axes {
            if ax >= self.rank() {
                return Err(Error::Shape(format!(
                    "reduce: axis {ax} out of range for shape {:?}",
                    self.shape
                )));
            }
            if reduced[ax] {
                return Err(Error::Shape(format!("reduce: axis {ax} listed twice")));
            }
            reduced[ax] = true;
            if self.shape[ax] == 0 {
                return Err(Error::Domain(format!(
                    "reduce: axis {ax} has extent 0 in shape {:?}",
                    self.shape
                )));
            }
        }
        let mut out_shape = Vec::new();
        for (ax, &d) in self.shape.iter().enumerate() {
            if reduced[ax] {
                if keep {
                    out_shape.push(1);
                }
            } else {
                out_shape.push(d);
            }
        }
        if out_shape.is_empty() {
            out_shape.push(1); // full reduction yields a 1-element tensor
        }
        Ok((out_shape, reduced))
    }

    /// Walks every input element once, folding into the output slot found
    /// by dropping the reduced axes from the multi-index.
    fn reduce_fold(&self, reduced: &[bool], out: &mut [T], f: impl Fn(T, T) -> T) {
        let rank = self.rank();
        let mut out_strides = vec![0usize; rank];
        {
            let mut s = 1;
            for ax in (0..rank).rev() {
                if !reduced[ax] {
                    out_strides[ax] = s;
                    s *= self.shape[ax];
                }
            }
        }
        let mut idx = vec![0usize; rank];
        for &v in &self.data {
            let mut o = 0;
            for ax in 0..rank {
                o += idx[ax] * out_strides[ax];
            }
            out[o] = f(out[o], v);
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                if idx[ax] < self.shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
    }

    /// Sum over the given axes. `keep` retains reduced axes as extent 1.
    pub fn sum_axes(&self, axes: &[usize], keep: bool) -> Result<Self> {
        let (out_shape, reduced) = self.reduce_prepare(axes, keep)?;
        let mut out = vec![T::zero(); checked_len::<T>(&out_shape)?];
        self.reduce_fold(&reduced, &mut out, |acc, v| acc + v);
        Ok(Tensor { shape: out_shape, data: out })
    }

    /// Mean over the given axes.
    pub fn mean_axes(&self, axes: &[usize], keep: bool) -> Result<Self> {
        let count: usize = axes.iter().map(|&ax| self.shape.get(ax).copied().unwrap_or(0)).product();
        let sum = self.sum_axes(axes, keep)?;
        let inv = T::from_f64(1.0 / count as f64);
        Ok(sum.scale(inv))
    }

    /// Max over the given axes.
    pub fn max_axes(&self, axes: &[usize], keep: bool) -> Result<Self> {
        let (out_shape, reduced) = self.reduce_prepare(axes, keep)?;
        let mut out = vec![T::neg_infinity(); checked_len::<T>(&out_shape)?];
        self.reduce_fold(&reduced, &mut out, |acc, v| acc.max(v));
        Ok(Tensor { shape: out_shape, data: out })
    }

    /// Sum of all elements.
    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    /// Mean of all elements. Empty tensor is a domain error.
    pub fn mean(&self) -> Result<T> {
        if self.data.is_empty() {
            return Err(Error::Domain("mean of empty tensor".into()));
        }
        Ok(self.sum() * T::from_f64(1.0 / self.data.len() as f64))
    }

    /// Index of the maximum along `axis`; ties take the first index.
    /// Results are ordered row-major over the remaining axes.
    pub fn argmax(&self, axis: usize) -> Result<Vec<usize>> {
        if axis >= self.rank() {
            return Err(Error::Shape(format!(
                "argmax: axis {axis} out of range for shape {:?}",
                self.shape
            )));
        }
        let extent = self.shape[axis];
        if extent == 0 {
            return Err(Error::Domain(format!(
                "argmax: axis {axis} has extent 0 in shape {:?}",
                self.shape
            )));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = 0usize;
                let mut best_v = self.data[o * extent * inner + i];
                for k in 1..extent {
                    let v = self.data[(o * extent + k) * inner + i];
                    if v > best_v {
                        best_v = v;
                        best = k;
                    }
                }
                out.push(best);
            }
        }
        Ok(out)
    }

    /// True when any element is NaN or infinite.
    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|v| !v.is_finite())
    }

    /// Lossless-as-possible precision change (f32 -> f64 is exact).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t<T: Scalar>(shape: &[usize], data: &[f64]) -> Tensor<T> {
        Tensor::from_vec(shape, data.iter().map(|&v| T::from_f64(v)).collect()).unwrap()
    }

    #[test]
    fn zeros_and_full() {
        let z = Tensor::<f32>::zeros(&[2, 2]).unwrap();
        assert_eq!(z.data(), &[0.0; 4]);
        let o = Tensor::<f32>::full(&[3], 1.0).unwrap();
        assert_eq!(o.data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn randn_is_deterministic_per_seed() {
        let a = Tensor::<f32>::randn(&[2], 0.0, 1.0, &mut Rng::new(7)).unwrap();
        let b = Tensor::<f32>::randn(&[2], 0.0, 1.0, &mut Rng::new(7)).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn oversized_shape_is_a_size_error() {
        let e = Tensor::<f32>::zeros(&[usize::MAX, 2]).unwrap_err();
        assert!(matches!(e, Error::Size(_)), "got {e:?}");
        let e = Tensor::<f64>::zeros(&[usize::MAX / 4]).unwrap_err();
        assert!(matches!(e, Error::Size(_)), "got {e:?}");
    }

    #[test]
    fn from_vec_checks_length() {
        let e = Tensor::<f32>::from_vec(&[2, 2], vec![1.0; 3]).unwrap_err();
        assert!(matches!(e, Error::Shape(_)));
    }

    #[test]
    fn elementwise_add() {
        let a = t::<f32>(&[2], &[1.0, 2.0]);
        let b = t::<f32>(&[2], &[3.0, 4.0]);
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn mul_by_zeros_annihilates() {
        let x = t::<f32>(&[2, 3], &[1.0, -2.0, 3.5, 0.25, 9.0, -7.0]);
        let z = Tensor::<f32>::zeros(&[2, 3]).unwrap();
        assert_eq!(x.mul(&z).unwrap().data(), &[0.0; 6]);
    }

    #[test]
    fn max_with_scalar_matches_definition() {
        let x = t::<f32>(&[2], &[-1.0, 2.0]);
        assert_eq!(x.max_with_scalar(0.0).data(), &[0.0, 2.0]);
    }

    #[test]
    fn elementwise_shape_mismatch() {
        let a = Tensor::<f32>::zeros(&[2]).unwrap();
        let b = Tensor::<f32>::zeros(&[3]).unwrap();
        assert!(matches!(a.add(&b).unwrap_err(), Error::Shape(_)));
    }

    #[test]
    fn matmul_identity() {
        let eye = t::<f64>(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let b = t::<f64>(&[2, 2], &[5.0, 6.0, 7.0, 8.0]);
        assert_eq!(eye.matmul(&b).unwrap(), b);
    }

    /// Reference matmul: textbook triple loop in ijk order, independent of
    /// the production ikj path.
    fn matmul_naive(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
        let (m, k) = (a.shape()[0], a.shape()[1]);
        let n = b.shape()[1];
        let mut out = Tensor::<f64>::zeros(&[m, n]).unwrap();
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for kk in 0..k {
                    acc += a.at(&[i, kk]) * b.at(&[kk, j]);
                }
                out.set(&[i, j], acc);
            }
        }
        out
    }

    #[test]
    fn matmul_2x2_known_product() {
        let a = t::<f64>(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t::<f64>(&[2, 2], &[5.0, 6.0, 7.0, 8.0]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
        assert_eq!(c, matmul_naive(&a, &b));
    }

    #[test]
    fn matmul_ones_row_by_column_sums() {
        let k = 13;
        let a = Tensor::<f64>::full(&[1, k], 1.0).unwrap();
        let b = Tensor::<f64>::full(&[k, 1], 1.0).unwrap();
        assert_eq!(a.matmul(&b).unwrap().data(), &[k as f64]);
    }

    #[test]
    fn matmul_inner_mismatch() {
        let a = Tensor::<f64>::zeros(&[2, 3]).unwrap();
        let b = Tensor::<f64>::zeros(&[4, 2]).unwrap();
        assert!(matches!(a.matmul(&b).unwrap_err(), Error::Shape(_)));
    }

    #[test]
    fn matmul_matches_naive_on_random_integer_matrices() {
        let mut rng = Rng::new(31);
        for _ in 0..25 {
            let m = 1 + rng.below(6);
            let k = 1 + rng.below(6);
            let n = 1 + rng.below(6);
            let fill = |rng: &mut Rng, len: usize| {
                (0..len).map(|_| rng.below(21) as f64 - 10.0).collect::<Vec<_>>()
            };
            let a = Tensor::<f64>::from_vec(&[m, k], fill(&mut rng, m * k)).unwrap();
            let b = Tensor::<f64>::from_vec(&[k, n], fill(&mut rng, k * n)).unwrap();
            assert_eq!(a.matmul(&b).unwrap(), matmul_naive(&a, &b));
        }
    }

    #[test]
    fn matmul_associativity_within_f64_tolerance() {
        let mut rng = Rng::new(77);
        for _ in 0..20 {
            let dims: Vec<usize> = (0..4).map(|_| 1 + rng.below(5)).collect();
            let fill = |rng: &mut Rng, len: usize| {
                (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect::<Vec<_>>()
            };
            let a =
                Tensor::<f64>::from_vec(&[dims[0], dims[1]], fill(&mut rng, dims[0] * dims[1]))
                    .unwrap();
            let b =
                Tensor::<f64>::from_vec(&[dims[1], dims[2]], fill(&mut rng, dims[1] * dims[2]))
                    .unwrap();
            let c =
                Tensor::<f64>::from_vec(&[dims[2], dims[3]], fill(&mut rng, dims[2] * dims[3]))
                    .unwrap();
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (l, r) in left.data().iter().zip(right.data()) {
                assert!((l - r).abs() < 1e-9, "associativity violated: {l} vs {r}");
            }
        }
    }

    #[test]
    fn transpose2d_roundtrip() {
        let a = t::<f32>(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let tt = a.transpose2d().unwrap();
        assert_eq!(tt.shape(), &[3, 2]);
        assert_eq!(tt.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(tt.transpose2d().unwrap(), a);
    }

    #[test]
    fn sum_along_axis() {
        let a = t::<f32>(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let s = a.sum_axes(&[1], false).unwrap();
        assert_eq!(s.shape(), &[2]);
        assert_eq!(s.data(), &[3.0, 7.0]);
        let k = a.sum_axes(&[1], true).unwrap();
        assert_eq!(k.shape(), &[2, 1]);
        assert_eq!(k.data(), &[3.0, 7.0]);
    }

    #[test]
    fn sum_over_leading_axis() {
        let a = t::<f32>(&[2, 3], &[1.0, 2.0, 3.0, 10.0, 20.0, 30.0]);
        let s = a.sum_axes(&[0], false).unwrap();
        assert_eq!(s.shape(), &[3]);
        assert_eq!(s.data(), &[11.0, 22.0, 33.0]);
    }

    #[test]
    fn mean_of_constant_tensor_is_the_constant() {
        let c = 3.25;
        let a = Tensor::<f32>::full(&[3, 4, 2], c).unwrap();
        let m = a.mean_axes(&[0, 1, 2], false).unwrap();
        assert_eq!(m.data(), &[c]);
        assert_eq!(a.mean().unwrap(), c);
    }

    #[test]
    fn max_reduction() {
        let a = t::<f32>(&[2, 3], &[1.0, 5.0, 2.0, 7.0, 0.0, 3.0]);
        let m = a.max_axes(&[1], false).unwrap();
        assert_eq!(m.data(), &[5.0, 7.0]);
    }

    #[test]
    fn argmax_picks_first_maximum() {
        let a = t::<f32>(&[3], &[0.1, 0.7, 0.2]);
        assert_eq!(a.argmax(0).unwrap(), vec![1]);
        let ties = t::<f32>(&[4], &[2.0, 9.0, 9.0, 1.0]);
        assert_eq!(ties.argmax(0).unwrap(), vec![1]);
        let rows = t::<f32>(&[2, 3], &[0.0, 1.0, 0.5, 0.9, 0.2, 0.1]);
        assert_eq!(rows.argmax(1).unwrap(), vec![1, 0]);
    }

    #[test]
    fn empty_reduction_extent_is_a_domain_error() {
        let a = Tensor::<f32>::zeros(&[2, 0]).unwrap();
        assert!(matches!(a.sum_axes(&[1], false).unwrap_err(), Error::Domain(_)));
        assert!(matches!(a.argmax(1).unwrap_err(), Error::Domain(_)));
        assert!(matches!(a.max_axes(&[1], false).unwrap_err(), Error::Domain(_)));
    }

    #[test]
    fn reshape_preserves_order_and_checks_size() {
        let a = t::<f32>(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = a.reshape(&[3, 2]).unwrap();
        assert_eq!(r.data(), a.data());
        assert!(matches!(a.reshape(&[4, 2]).unwrap_err(), Error::Shape(_)));
    }

    #[test]
    fn reshape_commutes_with_elementwise_add() {
        let mut rng = Rng::new(5);
        let data_a: Vec<f32> = (0..24).map(|_| rng.uniform(-2.0, 2.0) as f32).collect();
        let data_b: Vec<f32> = (0..24).map(|_| rng.uniform(-2.0, 2.0) as f32).collect();
        let a = Tensor::from_vec(&[2, 3, 4], data_a).unwrap();
        let b = Tensor::from_vec(&[2, 3, 4], data_b).unwrap();
        let lhs = a.add(&b).unwrap().reshape(&[6, 4]).unwrap();
        let rhs = a.reshape(&[6, 4]).unwrap().add(&b.reshape(&[6, 4]).unwrap()).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn channel_broadcast_add_and_mul() {
        // [1,2,2,2]: channel 0 gets +10, channel 1 gets +20.
        let x = t::<f32>(&[1, 2, 2, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let bias = t::<f32>(&[2], &[10.0, 20.0]);
        let y = x.add_channel(&bias).unwrap();
        assert_eq!(y.data(), &[11.0, 12.0, 13.0, 14.0, 25.0, 26.0, 27.0, 28.0]);
        let g = t::<f32>(&[2], &[2.0, 0.5]);
        let z = x.mul_channel(&g).unwrap();
        assert_eq!(z.data(), &[2.0, 4.0, 6.0, 8.0, 2.5, 3.0, 3.5, 4.0]);
        let bad = t::<f32>(&[3], &[0.0, 0.0, 0.0]);
        assert!(matches!(x.add_channel(&bad).unwrap_err(), Error::Shape(_)));
    }

    #[test]
    fn cast_f32_to_f64_is_exact() {
        let a = t::<f32>(&[3], &[0.1, -2.5, 1e-7]);
        let b: Tensor<f64> = a.cast();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(*x as f64, *y);
        }
    }
}
