//! Batch normalization over the channel axis of [N,C,H,W] tensors.
//!
//! Train mode normalizes with per-channel batch statistics (biased
//! variance) and folds them into the running estimates; infer mode uses the
//! running estimates untouched. Statistics are computed per channel in a
//! fixed order over (batch, spatial) so parallel evaluation cannot change
//! results.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use rayon::prelude::*;

/// Normalization epsilon added to the variance.
pub const BN_EPSILON: f64 = 1e-5;
/// Running-statistics update weight: running ← (1−m)·running + m·batch.
pub const BN_MOMENTUM: f64 = 0.01;

/// Whether to normalize with batch statistics (and update running stats)
/// or with the stored running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

#[derive(Debug)]
pub struct BatchNormCache<T: Scalar> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
    mode: BnMode,
    /// Elements per channel (N·H·W); meaningful in train mode.
    count: usize,
}

/// Per-channel (mean, biased variance) of a [N,C,H,W] tensor, summed in
/// batch-then-spatial order.
fn channel_stats<T: Scalar>(x: &[T], n: usize, c: usize, hw: usize) -> Vec<(T, T)> {
    let m = T::from_f64((n * hw) as f64);
    (0..c)
        .into_par_iter()
        .map(|ci| {
            let mut sum = T::zero();
            for ni in 0..n {
                let plane = &x[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                for &v in plane {
                    sum = sum + v;
                }
            }
            let mean = sum / m;
            let mut sq = T::zero();
            for ni in 0..n {
                let plane = &x[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
                for &v in plane {
                    let d = v - mean;
                    sq = sq + d * d;
                }
            }
            (mean, sq / m)
        })
        .collect()
}

/// Batch normalization forward. Running statistics are mutated only in
/// train mode.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &mut Tensor<T>,
    running_var: &mut Tensor<T>,
    mode: BnMode,
    momentum: f64,
    epsilon: f64,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    if input.rank() != 4 {
        return Err(Error::Shape(format!("batchnorm: expects [N,C,H,W], got {:?}", input.shape())));
    }
    let [n, c, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
    for (name, t) in
        [("gamma", gamma), ("beta", beta), ("running_mean", running_mean), ("running_var", running_var)]
    {
        if t.shape() != [c] {
            return Err(Error::Shape(format!(
                "batchnorm: {name} shape {:?} does not match channel count {c}",
                t.shape()
            )));
        }
    }
    let hw = h * w;
    let count = n * hw;

    let (means, vars): (Vec<T>, Vec<T>) = match mode {
        BnMode::Train => {
            if count < 2 {
                return Err(Error::Contract(format!(
                    "batchnorm: train mode needs at least 2 values per channel, got {count}"
                )));
            }
            let stats = channel_stats(input.data(), n, c, hw);
            stats.into_iter().unzip()
        }
        BnMode::Infer => (running_mean.data().to_vec(), running_var.data().to_vec()),
    };

    let eps = T::from_f64(epsilon);
    let mut inv_std = Vec::with_capacity(c);
    for (ci, &v) in vars.iter().enumerate() {
        let denom = v + eps;
        if denom <= T::zero() {
            return Err(Error::Numeric(format!(
                "batchnorm: variance + epsilon is {denom} for channel {ci}"
            )));
        }
        inv_std.push(T::one() / denom.sqrt());
    }

    let mut xhat = Tensor::<T>::zeros(input.shape())?;
    let x = input.data();
    xhat.data_mut()
        .par_chunks_mut(hw)
        .enumerate()
        .for_each(|(plane, out)| {
            let ci = plane % c;
            let (mu, is) = (means[ci], inv_std[ci]);
            let src = &x[plane * hw..(plane + 1) * hw];
            for (o, &v) in out.iter_mut().zip(src) {
                *o = (v - mu) * is;
            }
        });

    let mut out = Tensor::<T>::zeros(input.shape())?;
    let xh = xhat.data();
    let g = gamma.data();
    let b_ = beta.data();
    out.data_mut()
        .par_chunks_mut(hw)
        .enumerate()
        .for_each(|(plane, o)| {
            let ci = plane % c;
            let (gc, bc) = (g[ci], b_[ci]);
            let src = &xh[plane * hw..(plane + 1) * hw];
            for (ov, &v) in o.iter_mut().zip(src) {
                *ov = gc * v + bc;
            }
        });

    if mode == BnMode::Train {
        let keep = T::from_f64(1.0 - momentum);
        let take = T::from_f64(momentum);
        let rm = running_mean.data_mut();
        let rv = running_var.data_mut();
        for ci in 0..c {
            rm[ci] = keep * rm[ci] + take * means[ci];
            rv[ci] = keep * rv[ci] + take * vars[ci];
        }
    }

    Ok((out, BatchNormCache { xhat, inv_std, mode, count }))
}

/// Returns (grad_input, grad_gamma, grad_beta).
pub fn batchnorm_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    gamma: &Tensor<T>,
    cache: &BatchNormCache<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    if grad_out.shape() != cache.xhat.shape() {
        return Err(Error::Contract(format!(
            "batchnorm_backward: gradient shape {:?} does not match cached input {:?}",
            grad_out.shape(),
            cache.xhat.shape()
        )));
    }
    let [n, c, h, w] = [
        grad_out.shape()[0],
        grad_out.shape()[1],
        grad_out.shape()[2],
        grad_out.shape()[3],
    ];
    let hw = h * w;
    let go = grad_out.data();
    let xh = cache.xhat.data();
    let g = gamma.data();

    // Per-channel sums of go and go·xhat, fixed batch-then-spatial order.
    let sums: Vec<(T, T)> = (0..c)
        .into_par_iter()
        .map(|ci| {
            let mut s = T::zero();
            let mut sx = T::zero();
            for ni in 0..n {
                let base = (ni * c + ci) * hw;
                for i in 0..hw {
                    s = s + go[base + i];
                    sx = sx + go[base + i] * xh[base + i];
                }
            }
            (s, sx)
        })
        .collect();

    let grad_beta = Tensor::from_vec(&[c], sums.iter().map(|&(s, _)| s).collect())?;
    let grad_gamma = Tensor::from_vec(&[c], sums.iter().map(|&(_, sx)| sx).collect())?;

    let mut grad_input = Tensor::<T>::zeros(grad_out.shape())?;
    match cache.mode {
        BnMode::Train => {
            let m = T::from_f64(cache.count as f64);
            grad_input
                .data_mut()
                .par_chunks_mut(hw)
                .enumerate()
                .for_each(|(plane, gx)| {
                    let ci = plane % c;
                    let (s, sx) = sums[ci];
                    let scale = g[ci] * cache.inv_std[ci] / m;
                    let base = plane * hw;
                    for (i, o) in gx.iter_mut().enumerate() {
                        *o = scale * (m * go[base + i] - s - xh[base + i] * sx);
                    }
                });
        }
        BnMode::Infer => {
            // Running stats are constants here, so the map is purely linear.
            grad_input
                .data_mut()
                .par_chunks_mut(hw)
                .enumerate()
                .for_each(|(plane, gx)| {
                    let ci = plane % c;
                    let scale = g[ci] * cache.inv_std[ci];
                    let base = plane * hw;
                    for (i, o) in gx.iter_mut().enumerate() {
                        *o = scale * go[base + i];
                    }
                });
        }
    }
    Ok((grad_input, grad_gamma, grad_beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::testutil::*;
    use crate::tensor::rng::Rng;

    fn fresh_stats(c: usize) -> (Tensor<f64>, Tensor<f64>) {
        (Tensor::<f64>::zeros(&[c]).unwrap(), Tensor::<f64>::full(&[c], 1.0).unwrap())
    }

    fn unit_affine(c: usize) -> (Tensor<f64>, Tensor<f64>) {
        (Tensor::<f64>::full(&[c], 1.0).unwrap(), Tensor::<f64>::zeros(&[c]).unwrap())
    }

    #[test]
    fn train_mode_output_is_normalized_per_channel() {
        let mut rng = Rng::new(10);
        let x = Tensor::<f64>::randn(&[4, 3, 5, 5], 2.0, 3.0, &mut rng).unwrap();
        let (gamma, beta) = unit_affine(3);
        let (mut rm, mut rv) = fresh_stats(3);
        let (y, _) =
            batchnorm(&x, &gamma, &beta, &mut rm, &mut rv, BnMode::Train, BN_MOMENTUM, BN_EPSILON)
                .unwrap();
        let m = 4 * 5 * 5;
        for ci in 0..3 {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for ni in 0..4 {
                for yy in 0..5 {
                    for xx in 0..5 {
                        let v = y.at(&[ni, ci, yy, xx]);
                        sum += v;
                        sq += v * v;
                    }
                }
            }
            let mean = sum / m as f64;
            let var = sq / m as f64 - mean * mean;
            assert!(mean.abs() < 1e-5, "channel {ci} mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "channel {ci} var {var}");
        }
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let x = Tensor::<f64>::full(&[2, 1, 3, 3], 42.0).unwrap();
        let gamma = Tensor::<f64>::full(&[1], 1.5).unwrap();
        let beta = Tensor::<f64>::full(&[1], -0.75).unwrap();
        let (mut rm, mut rv) = fresh_stats(1);
        let (y, _) =
            batchnorm(&x, &gamma, &beta, &mut rm, &mut rv, BnMode::Train, BN_MOMENTUM, BN_EPSILON)
                .unwrap();
        for &v in y.data() {
            assert!((v - -0.75).abs() < 1e-9, "got {v}");
        }
    }

    #[test]
    fn infer_with_identity_statistics_is_near_identity() {
        let mut rng = Rng::new(12);
        let x = Tensor::<f64>::randn(&[2, 3, 4, 4], 0.0, 1.0, &mut rng).unwrap();
        let (gamma, beta) = unit_affine(3);
        let (mut rm, mut rv) = fresh_stats(3);
        let (y, _) =
            batchnorm(&x, &gamma, &beta, &mut rm, &mut rv, BnMode::Infer, BN_MOMENTUM, BN_EPSILON)
                .unwrap();
        // y = x / sqrt(1 + eps): off by at most ~eps/2 relative.
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() <= a.abs() * 6e-6 + 1e-12);
        }
        // Infer mode must not touch the running stats.
        assert!(rm.data().iter().all(|&v| v == 0.0));
        assert!(rv.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn running_stats_blend_with_momentum() {
        let mut rng = Rng::new(14);
        let x = Tensor::<f64>::randn(&[3, 2, 4, 4], 5.0, 2.0, &mut rng).unwrap();
        let (gamma, beta) = unit_affine(2);
        let (mut rm, mut rv) = fresh_stats(2);
        batchnorm(&x, &gamma, &beta, &mut rm, &mut rv, BnMode::Train, BN_MOMENTUM, BN_EPSILON)
            .unwrap();
        // Direct two-pass batch statistics per channel.
        let m = 3 * 16;
        for ci in 0..2 {
            let mut vals = Vec::new();
            for ni in 0..3 {
                for yy in 0..4 {
                    for xx in 0..4 {
                        vals.push(x.at(&[ni, ci, yy, xx]));
                    }
                }
            }
            let mean: f64 = vals.iter().sum::<f64>() / m as f64;
            let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let want_m = 0.99 * 0.0 + 0.01 * mean;
            let want_v = 0.99 * 1.0 + 0.01 * var;
            assert!((rm.at(&[ci]) - want_m).abs() < 1e-12);
            assert!((rv.at(&[ci]) - want_v).abs() < 1e-12);
        }
    }

    #[test]
    fn train_mode_needs_two_values_per_channel() {
        let x = Tensor::<f64>::zeros(&[1, 3, 1, 1]).unwrap();
        let (gamma, beta) = unit_affine(3);
        let (mut rm, mut rv) = fresh_stats(3);
        let err =
            batchnorm(&x, &gamma, &beta, &mut rm, &mut rv, BnMode::Train, BN_MOMENTUM, BN_EPSILON)
                .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn backward_grad_beta_is_gradient_sum_per_channel() {
        let mut rng = Rng::new(16);
        let x = Tensor::<f64>::randn(&[2, 2, 3, 3], 0.0, 1.0, &mut rng).unwrap();
        let (gamma, beta) = unit_affine(2);
        let (mut rm, mut rv) = fresh_stats(2);
        let (y, cache) =
            batchnorm(&x, &gamma, &beta, &mut rm, &mut rv, BnMode::Train, BN_MOMENTUM, BN_EPSILON)
                .unwrap();
        let go = Tensor::<f64>::randn(y.shape(), 0.0, 1.0, &mut rng).unwrap();
        let (_, _, gb) = batchnorm_backward(&go, &gamma, &cache).unwrap();
        for ci in 0..2 {
            let mut want = 0.0;
            for ni in 0..2 {
                for yy in 0..3 {
                    for xx in 0..3 {
                        want += go.at(&[ni, ci, yy, xx]);
                    }
                }
            }
            assert!((gb.at(&[ci]) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_zero_gradient_gives_zeros() {
        let mut rng = Rng::new(18);
        let x = Tensor::<f64>::randn(&[2, 2, 3, 3], 0.0, 1.0, &mut rng).unwrap();
        let (gamma, beta) = unit_affine(2);
        let (mut rm, mut rv) = fresh_stats(2);
        let (y, cache) =
            batchnorm(&x, &gamma, &beta, &mut rm, &mut rv, BnMode::Train, BN_MOMENTUM, BN_EPSILON)
                .unwrap();
        let go = Tensor::<f64>::zeros(y.shape()).unwrap();
        let (gx, gg, gb) = batchnorm_backward(&go, &gamma, &cache).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(gg.data().iter().all(|&v| v == 0.0));
        assert!(gb.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn train_gradients_match_finite_differences() {
        let mut rng = Rng::new(20);
        let x = Tensor::<f64>::randn(&[2, 2, 3, 3], 0.5, 1.5, &mut rng).unwrap();
        let gamma = Tensor::<f64>::randn(&[2], 1.0, 0.2, &mut rng).unwrap();
        let beta = Tensor::<f64>::randn(&[2], 0.0, 0.2, &mut rng).unwrap();
        let lw = loss_weights(2 * 2 * 3 * 3, 33);
        let loss = |xd: &[f64], gd: &[f64], bd: &[f64]| -> f64 {
            let x = Tensor::from_vec(&[2, 2, 3, 3], xd.to_vec()).unwrap();
            let g = Tensor::from_vec(&[2], gd.to_vec()).unwrap();
            let b = Tensor::from_vec(&[2], bd.to_vec()).unwrap();
            let mut rm = Tensor::<f64>::zeros(&[2]).unwrap();
            let mut rv = Tensor::<f64>::full(&[2], 1.0).unwrap();
            let (y, _) =
                batchnorm(&x, &g, &b, &mut rm, &mut rv, BnMode::Train, BN_MOMENTUM, BN_EPSILON)
                    .unwrap();
            y.data().iter().zip(&lw).map(|(a, c)| a * c).sum()
        };
        let (mut rm, mut rv) = (Tensor::<f64>::zeros(&[2]).unwrap(), Tensor::<f64>::full(&[2], 1.0).unwrap());
        let (y, cache) =
            batchnorm(&x, &gamma, &beta, &mut rm, &mut rv, BnMode::Train, BN_MOMENTUM, BN_EPSILON)
                .unwrap();
        let go = Tensor::from_vec(y.shape(), lw.clone()).unwrap();
        let (gx, gg, gb) = batchnorm_backward(&go, &gamma, &cache).unwrap();
        let h = 1e-5;
        let fx = fd_grad(|p| loss(p, gamma.data(), beta.data()), x.data(), h);
        let fg = fd_grad(|p| loss(x.data(), p, beta.data()), gamma.data(), h);
        let fb = fd_grad(|p| loss(x.data(), gamma.data(), p), beta.data(), h);
        assert!(max_rel_err(gx.data(), &fx) < 1e-6, "grad_input err {}", max_rel_err(gx.data(), &fx));
        assert!(max_rel_err(gg.data(), &fg) < 1e-6);
        assert!(max_rel_err(gb.data(), &fb) < 1e-6);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = Rng::new(24);
        let x = Tensor::<f64>::randn(&[4, 8, 6, 6], 0.0, 1.0, &mut rng).unwrap();
        let (gamma, beta) = unit_affine(8);
        let run = || {
            let (mut rm, mut rv) = fresh_stats(8);
            let (y, _) = batchnorm(
                &x, &gamma, &beta, &mut rm, &mut rv, BnMode::Train, BN_MOMENTUM, BN_EPSILON,
            )
            .unwrap();
            (y, rm, rv)
        };
        let (y1, rm1, rv1) = run();
        let (y2, rm2, rv2) = run();
        assert_eq!(y1, y2);
        assert_eq!(rm1, rm2);
        assert_eq!(rv1, rv2);
    }
}
