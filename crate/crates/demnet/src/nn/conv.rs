//! Plain and depthwise-separable 2-D convolutions.
//!
//! Convolution here is cross-correlation (no kernel flip). The hot loops
//! iterate kernel offsets outermost so the innermost walk over output
//! columns reads input rows contiguously. Parallelism is over disjoint
//! output planes with a fixed summation order inside each plane, so results
//! are identical for any thread count.

use super::{conv_geometry, ConvGeom, Padding};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use rayon::prelude::*;

/// Inclusive output range [lo, hi] for which `o*stride + k_off - pad` stays
/// inside [0, extent_in). Empty ranges come back with lo > hi.
#[inline]
fn out_range(extent_in: usize, k_off: usize, pad: usize, stride: usize, extent_out: usize) -> (usize, usize) {
    let lo = if k_off >= pad { 0 } else { (pad - k_off).div_ceil(stride) };
    match (extent_in - 1 + pad).checked_sub(k_off) {
        None => (1, 0),
        Some(v) => (lo, (v / stride).min(extent_out.saturating_sub(1))),
    }
}

/// acc[oy,ox] += Σ_{ki,kj} kernel[ki,kj] · plane[oy·s+ki−pt, ox·s+kj−pl]
#[allow(clippy::too_many_arguments)]
fn correlate_into<T: Scalar>(
    acc: &mut [T],
    plane: &[T],
    kernel: &[T],
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    geom: &ConvGeom,
) {
    for ki in 0..kh {
        let (oy_lo, oy_hi) = out_range(h, ki, geom.pad_top, stride, geom.out_h);
        for kj in 0..kw {
            let wgt = kernel[ki * kw + kj];
            if wgt == T::zero() {
                continue;
            }
            let (ox_lo, ox_hi) = out_range(w, kj, geom.pad_left, stride, geom.out_w);
            let mut oy = oy_lo;
            while oy <= oy_hi {
                let iy = oy * stride + ki - geom.pad_top;
                let row = &plane[iy * w..(iy + 1) * w];
                let out_row = &mut acc[oy * geom.out_w..(oy + 1) * geom.out_w];
                let mut ox = ox_lo;
                while ox <= ox_hi {
                    let ix = ox * stride + kj - geom.pad_left;
                    out_row[ox] = out_row[ox] + wgt * row[ix];
                    ox += 1;
                }
                oy += 1;
            }
        }
    }
}

/// gx[iy,ix] += Σ kernel[ki,kj] · go[oy,ox] over the same index map.
#[allow(clippy::too_many_arguments)]
fn correlate_back_into<T: Scalar>(
    gx: &mut [T],
    go: &[T],
    kernel: &[T],
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    geom: &ConvGeom,
) {
    for ki in 0..kh {
        let (oy_lo, oy_hi) = out_range(h, ki, geom.pad_top, stride, geom.out_h);
        for kj in 0..kw {
            let wgt = kernel[ki * kw + kj];
            if wgt == T::zero() {
                continue;
            }
            let (ox_lo, ox_hi) = out_range(w, kj, geom.pad_left, stride, geom.out_w);
            let mut oy = oy_lo;
            while oy <= oy_hi {
                let iy = oy * stride + ki - geom.pad_top;
                let grow = &mut gx[iy * w..(iy + 1) * w];
                let gorow = &go[oy * geom.out_w..(oy + 1) * geom.out_w];
                let mut ox = ox_lo;
                while ox <= ox_hi {
                    let ix = ox * stride + kj - geom.pad_left;
                    grow[ix] = grow[ix] + wgt * gorow[ox];
                    ox += 1;
                }
                oy += 1;
            }
        }
    }
}

/// gk[ki,kj] += Σ_{oy,ox} go[oy,ox] · plane[oy·s+ki−pt, ox·s+kj−pl]
#[allow(clippy::too_many_arguments)]
fn grad_kernel_into<T: Scalar>(
    gk: &mut [T],
    plane: &[T],
    go: &[T],
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    geom: &ConvGeom,
) {
    for ki in 0..kh {
        let (oy_lo, oy_hi) = out_range(h, ki, geom.pad_top, stride, geom.out_h);
        for kj in 0..kw {
            let (ox_lo, ox_hi) = out_range(w, kj, geom.pad_left, stride, geom.out_w);
            let mut acc = T::zero();
            let mut oy = oy_lo;
            while oy <= oy_hi {
                let iy = oy * stride + ki - geom.pad_top;
                let row = &plane[iy * w..(iy + 1) * w];
                let gorow = &go[oy * geom.out_w..(oy + 1) * geom.out_w];
                let mut ox = ox_lo;
                while ox <= ox_hi {
                    let ix = ox * stride + kj - geom.pad_left;
                    acc = acc + gorow[ox] * row[ix];
                    ox += 1;
                }
                oy += 1;
            }
            gk[ki * kw + kj] = gk[ki * kw + kj] + acc;
        }
    }
}

// ---------------------------------------------------------------------------
// conv2d

#[derive(Debug)]
pub struct Conv2dCache<T: Scalar> {
    input: Tensor<T>,
    geom: ConvGeom,
    stride: usize,
    kernel: (usize, usize),
    out_shape: [usize; 4],
}

/// Gradients for a conv2d layer, shaped like the primals.
#[derive(Debug)]
pub struct ConvGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// 2-D convolution: input [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout].
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<(Tensor<T>, Conv2dCache<T>)> {
    if input.rank() != 4 || weight.rank() != 4 || bias.rank() != 1 {
        return Err(Error::Shape(format!(
            "conv2d: expects input [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout]; got {:?}, {:?}, {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    let [n, cin, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
    let [cout, wcin, kh, kw] =
        [weight.shape()[0], weight.shape()[1], weight.shape()[2], weight.shape()[3]];
    if cin != wcin || bias.shape()[0] != cout {
        return Err(Error::Shape(format!(
            "conv2d: weight {:?} / bias {:?} incompatible with input {:?}",
            weight.shape(),
            bias.shape(),
            input.shape()
        )));
    }
    let geom = conv_geometry(h, w, kh, kw, stride, padding)?;
    let (oh, ow) = (geom.out_h, geom.out_w);

    let mut out = Tensor::<T>::zeros(&[n, cout, oh, ow])?;
    let x = input.data();
    let wd = weight.data();
    let bd = bias.data();
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(plane, acc)| {
            let (ni, co) = (plane / cout, plane % cout);
            for v in acc.iter_mut() {
                *v = bd[co];
            }
            for ci in 0..cin {
                let xplane = &x[(ni * cin + ci) * h * w..(ni * cin + ci + 1) * h * w];
                let kernel = &wd[(co * cin + ci) * kh * kw..(co * cin + ci + 1) * kh * kw];
                correlate_into(acc, xplane, kernel, h, w, kh, kw, stride, &geom);
            }
        });

    let cache = Conv2dCache {
        input: input.clone(),
        geom,
        stride,
        kernel: (kh, kw),
        out_shape: [n, cout, oh, ow],
    };
    Ok((out, cache))
}

/// Reverse-mode gradients for conv2d.
pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    weight: &Tensor<T>,
    cache: &Conv2dCache<T>,
) -> Result<ConvGrads<T>> {
    if grad_out.shape() != cache.out_shape {
        return Err(Error::Contract(format!(
            "conv2d_backward: gradient shape {:?} does not match cached output {:?}",
            grad_out.shape(),
            cache.out_shape
        )));
    }
    let [n, cout, oh, ow] = cache.out_shape;
    let [cin, h, w] = [cache.input.shape()[1], cache.input.shape()[2], cache.input.shape()[3]];
    let (kh, kw) = cache.kernel;
    let (stride, geom) = (cache.stride, cache.geom);
    let x = cache.input.data();
    let wd = weight.data();
    let go = grad_out.data();

    let mut grad_bias = Tensor::<T>::zeros(&[cout])?;
    grad_bias.data_mut().par_iter_mut().enumerate().for_each(|(co, gb)| {
        let mut acc = T::zero();
        for ni in 0..n {
            let plane = &go[(ni * cout + co) * oh * ow..(ni * cout + co + 1) * oh * ow];
            for &g in plane {
                acc = acc + g;
            }
        }
        *gb = acc;
    });

    let mut grad_weight = Tensor::<T>::zeros(weight.shape())?;
    grad_weight
        .data_mut()
        .par_chunks_mut(cin * kh * kw)
        .enumerate()
        .for_each(|(co, gw)| {
            for ni in 0..n {
                let goplane = &go[(ni * cout + co) * oh * ow..(ni * cout + co + 1) * oh * ow];
                for ci in 0..cin {
                    let xplane = &x[(ni * cin + ci) * h * w..(ni * cin + ci + 1) * h * w];
                    grad_kernel_into(
                        &mut gw[ci * kh * kw..(ci + 1) * kh * kw],
                        xplane,
                        goplane,
                        h,
                        w,
                        kh,
                        kw,
                        stride,
                        &geom,
                    );
                }
            }
        });

    let mut grad_input = Tensor::<T>::zeros(cache.input.shape())?;
    grad_input
        .data_mut()
        .par_chunks_mut(cin * h * w)
        .enumerate()
        .for_each(|(ni, gx)| {
            for co in 0..cout {
                let goplane = &go[(ni * cout + co) * oh * ow..(ni * cout + co + 1) * oh * ow];
                for ci in 0..cin {
                    let kernel = &wd[(co * cin + ci) * kh * kw..(co * cin + ci + 1) * kh * kw];
                    correlate_back_into(
                        &mut gx[ci * h * w..(ci + 1) * h * w],
                        goplane,
                        kernel,
                        h,
                        w,
                        kh,
                        kw,
                        stride,
                        &geom,
                    );
                }
            }
        });

    Ok(ConvGrads { input: grad_input, weight: grad_weight, bias: grad_bias })
}

// ---------------------------------------------------------------------------
// separable conv2d

#[derive(Debug)]
pub struct SeparableCache<T: Scalar> {
    input: Tensor<T>,
    /// Depthwise stage output, needed by both pointwise gradients.
    mid: Tensor<T>,
    geom: ConvGeom,
    stride: usize,
    kernel: (usize, usize),
    out_shape: [usize; 4],
}

/// Gradients for a separable conv layer.
#[derive(Debug)]
pub struct SeparableGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub depthwise: Tensor<T>,
    pub pointwise: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Depthwise-separable convolution with depth multiplier 1: a per-channel
/// spatial correlation (no bias) followed by a 1x1 pointwise mix (with
/// bias). depthwise [Cin,kh,kw], pointwise [Cout,Cin], bias [Cout].
pub fn separable_conv2d<T: Scalar>(
    input: &Tensor<T>,
    depthwise: &Tensor<T>,
    pointwise: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<(Tensor<T>, SeparableCache<T>)> {
    if input.rank() != 4 || depthwise.rank() != 3 || pointwise.rank() != 2 || bias.rank() != 1 {
        return Err(Error::Shape(format!(
            "separable_conv2d: expects input [N,Cin,H,W], depthwise [Cin,kh,kw], pointwise [Cout,Cin], bias [Cout]; got {:?}, {:?}, {:?}, {:?}",
            input.shape(),
            depthwise.shape(),
            pointwise.shape(),
            bias.shape()
        )));
    }
    let [n, cin, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
    let [dcin, kh, kw] = [depthwise.shape()[0], depthwise.shape()[1], depthwise.shape()[2]];
    let [cout, pcin] = [pointwise.shape()[0], pointwise.shape()[1]];
    if dcin != cin || pcin != cin || bias.shape()[0] != cout {
        return Err(Error::Shape(format!(
            "separable_conv2d: depthwise {:?} / pointwise {:?} / bias {:?} incompatible with input {:?}",
            depthwise.shape(),
            pointwise.shape(),
            bias.shape(),
            input.shape()
        )));
    }
    let geom = conv_geometry(h, w, kh, kw, stride, padding)?;
    let (oh, ow) = (geom.out_h, geom.out_w);

    // Depthwise stage: one spatial kernel per input channel.
    let mut mid = Tensor::<T>::zeros(&[n, cin, oh, ow])?;
    let x = input.data();
    let dw = depthwise.data();
    mid.data_mut()
        .par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(plane, acc)| {
            let (ni, ci) = (plane / cin, plane % cin);
            let xplane = &x[(ni * cin + ci) * h * w..(ni * cin + ci + 1) * h * w];
            let kernel = &dw[ci * kh * kw..(ci + 1) * kh * kw];
            correlate_into(acc, xplane, kernel, h, w, kh, kw, stride, &geom);
        });

    // Pointwise stage: 1x1 mix across channels plus bias.
    let mut out = Tensor::<T>::zeros(&[n, cout, oh, ow])?;
    let md = mid.data();
    let pw = pointwise.data();
    let bd = bias.data();
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(plane, acc)| {
            let (ni, co) = (plane / cout, plane % cout);
            for v in acc.iter_mut() {
                *v = bd[co];
            }
            for ci in 0..cin {
                let wgt = pw[co * cin + ci];
                if wgt == T::zero() {
                    continue;
                }
                let mplane = &md[(ni * cin + ci) * oh * ow..(ni * cin + ci + 1) * oh * ow];
                for (o, &m) in acc.iter_mut().zip(mplane) {
                    *o = *o + wgt * m;
                }
            }
        });

    let cache = SeparableCache {
        input: input.clone(),
        mid,
        geom,
        stride,
        kernel: (kh, kw),
        out_shape: [n, cout, oh, ow],
    };
    Ok((out, cache))
}

/// Reverse-mode gradients for separable_conv2d.
pub fn separable_conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    depthwise: &Tensor<T>,
    pointwise: &Tensor<T>,
    cache: &SeparableCache<T>,
) -> Result<SeparableGrads<T>> {
    if grad_out.shape() != cache.out_shape {
        return Err(Error::Contract(format!(
            "separable_conv2d_backward: gradient shape {:?} does not match cached output {:?}",
            grad_out.shape(),
            cache.out_shape
        )));
    }
    let [n, cout, oh, ow] = cache.out_shape;
    let [cin, h, w] = [cache.input.shape()[1], cache.input.shape()[2], cache.input.shape()[3]];
    let (kh, kw) = cache.kernel;
    let (stride, geom) = (cache.stride, cache.geom);
    let x = cache.input.data();
    let md = cache.mid.data();
    let dw = depthwise.data();
    let pw = pointwise.data();
    let go = grad_out.data();

    let mut grad_bias = Tensor::<T>::zeros(&[cout])?;
    grad_bias.data_mut().par_iter_mut().enumerate().for_each(|(co, gb)| {
        let mut acc = T::zero();
        for ni in 0..n {
            for &g in &go[(ni * cout + co) * oh * ow..(ni * cout + co + 1) * oh * ow] {
                acc = acc + g;
            }
        }
        *gb = acc;
    });

    // grad_pointwise[co,ci] = Σ_{n,y,x} go[n,co,y,x] · mid[n,ci,y,x]
    let mut grad_pw = Tensor::<T>::zeros(&[cout, cin])?;
    grad_pw.data_mut().par_chunks_mut(cin).enumerate().for_each(|(co, row)| {
        for ni in 0..n {
            let goplane = &go[(ni * cout + co) * oh * ow..(ni * cout + co + 1) * oh * ow];
            for (ci, acc) in row.iter_mut().enumerate() {
                let mplane = &md[(ni * cin + ci) * oh * ow..(ni * cin + ci + 1) * oh * ow];
                let mut s = T::zero();
                for (&g, &m) in goplane.iter().zip(mplane) {
                    s = s + g * m;
                }
                *acc = *acc + s;
            }
        }
    });

    // grad_mid[n,ci] = Σ_co pointwise[co,ci] · go[n,co]
    let mut grad_mid = Tensor::<T>::zeros(&[n, cin, oh, ow])?;
    grad_mid
        .data_mut()
        .par_chunks_mut(cin * oh * ow)
        .enumerate()
        .for_each(|(ni, gm)| {
            for co in 0..cout {
                let goplane = &go[(ni * cout + co) * oh * ow..(ni * cout + co + 1) * oh * ow];
                for ci in 0..cin {
                    let wgt = pw[co * cin + ci];
                    if wgt == T::zero() {
                        continue;
                    }
                    let gplane = &mut gm[ci * oh * ow..(ci + 1) * oh * ow];
                    for (o, &g) in gplane.iter_mut().zip(goplane) {
                        *o = *o + wgt * g;
                    }
                }
            }
        });

    // Depthwise stage gradients from grad_mid.
    let gmd = grad_mid.data();
    let mut grad_dw = Tensor::<T>::zeros(depthwise.shape())?;
    grad_dw.data_mut().par_chunks_mut(kh * kw).enumerate().for_each(|(ci, gk)| {
        for ni in 0..n {
            let xplane = &x[(ni * cin + ci) * h * w..(ni * cin + ci + 1) * h * w];
            let gmplane = &gmd[(ni * cin + ci) * oh * ow..(ni * cin + ci + 1) * oh * ow];
            grad_kernel_into(gk, xplane, gmplane, h, w, kh, kw, stride, &geom);
        }
    });

    let mut grad_input = Tensor::<T>::zeros(cache.input.shape())?;
    grad_input
        .data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(plane, gx)| {
            let (ni, ci) = (plane / cin, plane % cin);
            let gmplane = &gmd[(ni * cin + ci) * oh * ow..(ni * cin + ci + 1) * oh * ow];
            let kernel = &dw[ci * kh * kw..(ci + 1) * kh * kw];
            correlate_back_into(gx, gmplane, kernel, h, w, kh, kw, stride, &geom);
        });

    Ok(SeparableGrads {
        input: grad_input,
        depthwise: grad_dw,
        pointwise: grad_pw,
        bias: grad_bias,
    })
}
