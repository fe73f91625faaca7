//! Categorical cross-entropy loss and the Adam optimizer.

use crate::error::{Error, Result};
use crate::nn::softmax;
use crate::tensor::{Scalar, Tensor};

pub const ADAM_LR: f64 = 0.001;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Probabilities are clamped to [PROB_FLOOR, 1] before the log.
pub const PROB_FLOOR: f64 = 1e-7;

fn check_one_hot<T: Scalar>(targets: &Tensor<T>) -> Result<()> {
    let k = targets.shape()[1];
    for (row_idx, row) in targets.data().chunks(k).enumerate() {
        let mut ones = 0;
        for &v in row {
            if v == T::one() {
                ones += 1;
            } else if v != T::zero() {
                return Err(Error::Contract(format!(
                    "target row {row_idx} is not one-hot: contains {v}"
                )));
            }
        }
        if ones != 1 {
            return Err(Error::Contract(format!(
                "target row {row_idx} is not one-hot: {ones} entries equal 1"
            )));
        }
    }
    Ok(())
}

/// Mean negative log-likelihood of one-hot targets under `probs`.
/// Returns the loss and its gradient with respect to the probabilities,
/// consistent with the clamped log (zero gradient where the clamp is
/// active). Rows of `probs` must sum to 1 within 1e-4.
pub fn categorical_cross_entropy<T: Scalar>(
    probs: &Tensor<T>,
    targets: &Tensor<T>,
) -> Result<(T, Tensor<T>)> {
    if probs.rank() != 2 || probs.shape() != targets.shape() {
        return Err(Error::Shape(format!(
            "cross_entropy: probs {:?} and targets {:?} must share a [N,K] shape",
            probs.shape(),
            targets.shape()
        )));
    }
    let (n, k) = (probs.shape()[0], probs.shape()[1]);
    if n == 0 {
        return Err(Error::Domain("cross_entropy: empty batch".into()));
    }
    check_one_hot(targets)?;
    for (row_idx, row) in probs.data().chunks(k).enumerate() {
        let sum: f64 = row.iter().map(|&v| Scalar::to_f64(v)).sum();
        if (sum - 1.0).abs() > 1e-4 {
            return Err(Error::Contract(format!(
                "cross_entropy: probability row {row_idx} sums to {sum}, not 1"
            )));
        }
    }

    let floor = T::from_f64(PROB_FLOOR);
    let inv_n = T::from_f64(1.0 / n as f64);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); n * k];
    for (i, g) in grad.iter_mut().enumerate() {
        let t = targets.data()[i];
        if t == T::zero() {
            continue;
        }
        let p = probs.data()[i];
        let clamped = p.max(floor).min(T::one());
        loss = loss - clamped.ln();
        // The clamp is constant outside [floor, 1], so its gradient is 0 there.
        if p >= floor && p <= T::one() {
            *g = -inv_n / clamped;
        }
    }
    Ok((loss * inv_n, Tensor::from_vec(&[n, k], grad)?))
}

/// Fused softmax + cross-entropy: numerically stable training path.
/// Returns (loss, probabilities, gradient w.r.t. logits = (p − t)/N).
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    targets: &Tensor<T>,
) -> Result<(T, Tensor<T>, Tensor<T>)> {
    if logits.shape() != targets.shape() {
        return Err(Error::Shape(format!(
            "softmax_cross_entropy: logits {:?} and targets {:?} must match",
            logits.shape(),
            targets.shape()
        )));
    }
    check_one_hot(targets)?;
    let probs = softmax(logits)?;
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    let floor = T::from_f64(PROB_FLOOR);
    let inv_n = T::from_f64(1.0 / n as f64);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); n * k];
    for (i, g) in grad.iter_mut().enumerate() {
        let p = probs.data()[i];
        let t = targets.data()[i];
        if t == T::one() {
            loss = loss - p.max(floor).min(T::one()).ln();
        }
        *g = (p - t) * inv_n;
    }
    Ok((loss * inv_n, probs, Tensor::from_vec(&[n, k], grad)?))
}

/// Adam optimizer state: first/second moment estimates per parameter plus
/// the shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Scalar> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Completed steps; moments are bias-corrected with this counter.
    pub t: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh state with zero moments shaped like `shapes`, default
    /// hyperparameters.
    pub fn new(lr: f64, shapes: &[Vec<usize>]) -> Result<Self> {
        let m = shapes.iter().map(|s| Tensor::zeros(s)).collect::<Result<Vec<_>>>()?;
        let v = shapes.iter().map(|s| Tensor::zeros(s)).collect::<Result<Vec<_>>>()?;
        Ok(AdamState {
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            t: 0,
            m,
            v,
        })
    }

    pub fn num_params(&self) -> usize {
        self.m.len()
    }

    /// Moment tensors in parameter order, for serialization.
    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.m, &self.v)
    }

    /// Restores previously serialized moments and step counter.
    pub fn restore(&mut self, t: u64, m: Vec<Tensor<T>>, v: Vec<Tensor<T>>) -> Result<()> {
        if m.len() != self.m.len() || v.len() != self.v.len() {
            return Err(Error::Contract(format!(
                "adam restore: moment counts {}/{} do not match state {}",
                m.len(),
                v.len(),
                self.m.len()
            )));
        }
        for (idx, (have, want)) in m.iter().zip(&self.m).enumerate() {
            if have.shape() != want.shape() {
                return Err(Error::Contract(format!(
                    "adam restore: moment {idx} has shape {:?}, expected {:?}",
                    have.shape(),
                    want.shape()
                )));
            }
        }
        self.t = t;
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// One Adam update over all parameters. `name_of` labels a parameter
    /// index for error reporting.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<T>],
        grads: &[&Tensor<T>],
        name_of: impl Fn(usize) -> String,
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Contract(format!(
                "adam step: got {} params / {} grads for state of {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (idx, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[idx].shape() {
                return Err(Error::Contract(format!(
                    "adam step: parameter {} shape {:?} vs gradient {:?} vs moment {:?}",
                    name_of(idx),
                    p.shape(),
                    g.shape(),
                    self.m[idx].shape()
                )));
            }
            if g.has_non_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for parameter {}",
                    name_of(idx)
                )));
            }
        }
        self.t += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one = T::one();
        let corr1 = T::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let corr2 = T::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.epsilon);
        for (idx, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[idx].data_mut();
            let v = self.v[idx].data_mut();
            let pd = p.data_mut();
            for ((pv, &gv), (mv, vv)) in
                pd.iter_mut().zip(g.data()).zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / corr1;
                let v_hat = *vv / corr2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
