//! Forward and backward passes for every layer in the network.
//!
//! Each forward returns the output plus a cache holding exactly what its
//! backward needs (inputs, masks, batch statistics). Backward consumes the
//! cache and produces gradients shaped like the primals. All passes are
//! pure given (input, params, cache); internal parallelism writes disjoint
//! output regions in a fixed order so results do not depend on thread count.

pub mod batchnorm;
pub mod conv;

pub use batchnorm::{batchnorm, batchnorm_backward, BatchNormCache, BnMode, BN_EPSILON, BN_MOMENTUM};
pub use conv::{
    conv2d, conv2d_backward, separable_conv2d, separable_conv2d_backward, Conv2dCache,
    ConvGrads, SeparableCache, SeparableGrads,
};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

/// Spatial padding mode for convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Zero-pad so the output extent is ceil(extent / stride); when the
    /// total padding is odd the extra pixel goes on the bottom/right.
    Same,
    /// No padding; the kernel must fit inside the input.
    Valid,
}

/// Resolved output extents and top/left padding for one convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

/// Output geometry shared by conv2d and the depthwise stage.
pub fn conv_geometry(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: Padding,
) -> Result<ConvGeom> {
    if stride == 0 {
        return Err(Error::Parameter("stride must be >= 1".into()));
    }
    if kh == 0 || kw == 0 {
        return Err(Error::Parameter("kernel extents must be >= 1".into()));
    }
    if h == 0 || w == 0 {
        return Err(Error::Shape(format!("input extents {h}x{w} must be positive")));
    }
    match padding {
        Padding::Valid => {
            if kh > h || kw > w {
                return Err(Error::Shape(format!(
                    "kernel {kh}x{kw} larger than input {h}x{w} with valid padding"
                )));
            }
            Ok(ConvGeom {
                out_h: (h - kh) / stride + 1,
                out_w: (w - kw) / stride + 1,
                pad_top: 0,
                pad_left: 0,
            })
        }
        Padding::Same => {
            let out_h = h.div_ceil(stride);
            let out_w = w.div_ceil(stride);
            let pad_h = ((out_h - 1) * stride + kh).max(h) - h;
            let pad_w = ((out_w - 1) * stride + kw).max(w) - w;
            Ok(ConvGeom { out_h, out_w, pad_top: pad_h / 2, pad_left: pad_w / 2 })
        }
    }
}

// ---------------------------------------------------------------------------
// ReLU

#[derive(Debug)]
pub struct ReluCache<T: Scalar> {
    input: Tensor<T>,
}

/// max(0, x) elementwise.
pub fn relu<T: Scalar>(input: &Tensor<T>) -> (Tensor<T>, ReluCache<T>) {
    let out = input.max_with_scalar(T::zero());
    (out, ReluCache { input: input.clone() })
}

/// Masks the gradient where the forward input was <= 0 (derivative at
/// exactly 0 is defined as 0).
pub fn relu_backward<T: Scalar>(grad_out: &Tensor<T>, cache: &ReluCache<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != cache.input.shape() {
        return Err(Error::Contract(format!(
            "relu_backward: gradient shape {:?} does not match cached input {:?}",
            grad_out.shape(),
            cache.input.shape()
        )));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(cache.input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(grad_out.shape(), data)
}

// ---------------------------------------------------------------------------
// Dense

#[derive(Debug)]
pub struct DenseCache<T: Scalar> {
    input: Tensor<T>,
    out_features: usize,
}

/// Fully connected layer: out = input · weightᵀ + bias.
/// input [N,in], weight [out,in], bias [out] -> [N,out].
pub fn dense<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(Tensor<T>, DenseCache<T>)> {
    if input.rank() != 2 || weight.rank() != 2 || bias.rank() != 1 {
        return Err(Error::Shape(format!(
            "dense: expects input [N,in], weight [out,in], bias [out]; got {:?}, {:?}, {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let (n, in_f) = (input.shape()[0], input.shape()[1]);
    let (out_f, w_in) = (weight.shape()[0], weight.shape()[1]);
    if in_f != w_in || bias.shape()[0] != out_f {
        return Err(Error::Shape(format!(
            "dense: input {:?} incompatible with weight {:?} / bias {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let x = input.data();
    let w = weight.data();
    let b = bias.data();
    let mut out = vec![T::zero(); n * out_f];
    for i in 0..n {
        let xrow = &x[i * in_f..(i + 1) * in_f];
        let orow = &mut out[i * out_f..(i + 1) * out_f];
        for o in 0..out_f {
            let wrow = &w[o * in_f..(o + 1) * in_f];
            let mut acc = b[o];
            for (xi, wi) in xrow.iter().zip(wrow) {
                acc = acc + *xi * *wi;
            }
            orow[o] = acc;
        }
    }
    let out = Tensor::from_vec(&[n, out_f], out)?;
    Ok((out, DenseCache { input: input.clone(), out_features: out_f }))
}

/// Returns (grad_input, grad_weight, grad_bias).
pub fn dense_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    weight: &Tensor<T>,
    cache: &DenseCache<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, in_f) = (cache.input.shape()[0], cache.input.shape()[1]);
    let out_f = cache.out_features;
    if grad_out.shape() != [n, out_f] {
        return Err(Error::Contract(format!(
            "dense_backward: gradient shape {:?} does not match cached output [{n}, {out_f}]",
            grad_out.shape()
        )));
    }
    let go = grad_out.data();
    let x = cache.input.data();
    let w = weight.data();

    // grad_bias[o] = Σ_n go[n,o]
    let mut gb = vec![T::zero(); out_f];
    for i in 0..n {
        for o in 0..out_f {
            gb[o] = gb[o] + go[i * out_f + o];
        }
    }
    // grad_weight[o,k] = Σ_n go[n,o]·x[n,k]
    let mut gw = vec![T::zero(); out_f * in_f];
    for i in 0..n {
        let xrow = &x[i * in_f..(i + 1) * in_f];
        for o in 0..out_f {
            let g = go[i * out_f + o];
            let wrow = &mut gw[o * in_f..(o + 1) * in_f];
            for (acc, xi) in wrow.iter_mut().zip(xrow) {
                *acc = *acc + g * *xi;
            }
        }
    }
    // grad_input[n,k] = Σ_o go[n,o]·w[o,k]
    let mut gx = vec![T::zero(); n * in_f];
    for i in 0..n {
        let grow = &mut gx[i * in_f..(i + 1) * in_f];
        for o in 0..out_f {
            let g = go[i * out_f + o];
            let wrow = &w[o * in_f..(o + 1) * in_f];
            for (acc, wi) in grow.iter_mut().zip(wrow) {
                *acc = *acc + g * *wi;
            }
        }
    }
    Ok((
        Tensor::from_vec(&[n, in_f], gx)?,
        Tensor::from_vec(&[out_f, in_f], gw)?,
        Tensor::from_vec(&[out_f], gb)?,
    ))
}

// ---------------------------------------------------------------------------
// Flatten

#[derive(Debug)]
pub struct FlattenCache {
    in_shape: Vec<usize>,
}

/// Collapses every axis after the batch axis: [N,C,H,W] -> [N,C·H·W].
pub fn flatten<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, FlattenCache)> {
    if input.rank() < 2 {
        return Err(Error::Shape(format!("flatten: needs rank >= 2, got {:?}", input.shape())));
    }
    let n = input.shape()[0];
    let rest: usize = input.shape()[1..].iter().product();
    let out = input.reshape(&[n, rest])?;
    Ok((out, FlattenCache { in_shape: input.shape().to_vec() }))
}

/// Restores the pre-flatten shape.
pub fn flatten_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &FlattenCache,
) -> Result<Tensor<T>> {
    let expect: usize = cache.in_shape.iter().product();
    if grad_out.len() != expect {
        return Err(Error::Contract(format!(
            "flatten_backward: gradient has {} elements, cached shape {:?} needs {expect}",
            grad_out.len(),
            cache.in_shape
        )));
    }
    grad_out.reshape(&cache.in_shape)
}

// ---------------------------------------------------------------------------
// Max pooling

#[derive(Debug)]
pub struct MaxPoolCache {
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
    /// For each output element (row-major), the linear index into the input
    /// data of the window maximum; ties keep the first row-major position.
    argmax: Vec<usize>,
}

/// Square-window max pooling over [N,C,H,W].
pub fn maxpool2d<T: Scalar>(
    input: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<(Tensor<T>, MaxPoolCache)> {
    if window == 0 || stride == 0 {
        return Err(Error::Parameter("maxpool2d: window and stride must be >= 1".into()));
    }
    if input.rank() != 4 {
        return Err(Error::Shape(format!("maxpool2d: expects [N,C,H,W], got {:?}", input.shape())));
    }
    let (n, c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]);
    if window > h || window > w {
        return Err(Error::Shape(format!(
            "maxpool2d: window {window} larger than input {h}x{w}"
        )));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let x = input.data();
    let mut out = vec![T::zero(); n * c * oh * ow];
    let mut argmax = vec![0usize; n * c * oh * ow];
    for plane in 0..n * c {
        let in_base = plane * h * w;
        let out_base = plane * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let y0 = oy * stride;
                let x0 = ox * stride;
                let mut best_idx = in_base + y0 * w + x0;
                let mut best = x[best_idx];
                for ky in 0..window {
                    for kx in 0..window {
                        let idx = in_base + (y0 + ky) * w + (x0 + kx);
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                out[out_base + oy * ow + ox] = best;
                argmax[out_base + oy * ow + ox] = best_idx;
            }
        }
    }
    let out = Tensor::from_vec(&[n, c, oh, ow], out)?;
    let cache = MaxPoolCache {
        in_shape: input.shape().to_vec(),
        out_shape: vec![n, c, oh, ow],
        argmax,
    };
    Ok((out, cache))
}

/// Routes each output gradient to its recorded argmax position.
pub fn maxpool2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &MaxPoolCache,
) -> Result<Tensor<T>> {
    if grad_out.shape() != cache.out_shape.as_slice() {
        return Err(Error::Contract(format!(
            "maxpool2d_backward: gradient shape {:?} does not match cached output {:?}",
            grad_out.shape(),
            cache.out_shape
        )));
    }
    let mut gx = Tensor::<T>::zeros(&cache.in_shape)?;
    let g = gx.data_mut();
    for (i, &src) in cache.argmax.iter().enumerate() {
        g[src] = g[src] + grad_out.data()[i];
    }
    Ok(gx)
}

// ---------------------------------------------------------------------------
// Softmax

/// Row-wise softmax over [N,K] with max subtraction for stability.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.rank() != 2 || logits.shape()[1] == 0 {
        return Err(Error::Shape(format!(
            "softmax: expects [N,K] with K >= 1, got {:?}",
            logits.shape()
        )));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    let x = logits.data();
    let mut out = vec![T::zero(); n * k];
    for i in 0..n {
        let row = &x[i * k..(i + 1) * k];
        let mut m = row[0];
        for &v in row {
            m = m.max(v);
        }
        let orow = &mut out[i * k..(i + 1) * k];
        let mut sum = T::zero();
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = (v - m).exp();
            sum = sum + *o;
        }
        let inv = T::one() / sum;
        for o in orow.iter_mut() {
            *o = *o * inv;
        }
    }
    Tensor::from_vec(&[n, k], out)
}

// ---------------------------------------------------------------------------
