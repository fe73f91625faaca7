//! Verifies analytic layer gradients against central finite differences.
//!
//! Runs a dense layer and a convolution in 64-bit mode, perturbs every
//! parameter by +-h, and compares the resulting loss slope with what the
//! backward pass reports. Run with: cargo run --example tensor_gradients

use demnet::nn::{conv2d, conv2d_backward, dense, dense_backward, Padding};
use demnet::tensor::rng::Rng;
use demnet::{Result, Tensor};

/// Scalar loss: dot product of the output with fixed coefficients, so the
/// loss gradient w.r.t. the output is just those coefficients.
fn coeffs(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    (0..len).map(|_| rng.normal()).collect()
}

fn dot(t: &Tensor<f64>, c: &[f64]) -> f64 {
    t.data().iter().zip(c).map(|(a, b)| a * b).sum()
}

fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

fn check_dense() -> Result<f64> {
    let mut rng = Rng::new(7);
    let x = Tensor::<f64>::randn(&[3, 5], 0.0, 1.0, &mut rng)?;
    let mut w = Tensor::<f64>::randn(&[4, 5], 0.0, 1.0, &mut rng)?;
    let b = Tensor::<f64>::randn(&[4], 0.0, 1.0, &mut rng)?;
    let c = coeffs(12, 1);

    let (out, cache) = dense(&x, &w, &b)?;
    let grad_out = Tensor::from_vec(out.shape(), c.clone())?;
    let (_, gw, _) = dense_backward(&grad_out, &w, &cache)?;

    let h = 1e-5;
    let mut numeric = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let orig = w.data()[i];
        w.data_mut()[i] = orig + h;
        let up = dot(&dense(&x, &w, &b)?.0, &c);
        w.data_mut()[i] = orig - h;
        let down = dot(&dense(&x, &w, &b)?.0, &c);
        w.data_mut()[i] = orig;
        numeric.push((up - down) / (2.0 * h));
    }
    Ok(max_rel_err(gw.data(), &numeric))
}

fn check_conv() -> Result<f64> {
    let mut rng = Rng::new(9);
    let x = Tensor::<f64>::randn(&[2, 2, 6, 6], 0.0, 1.0, &mut rng)?;
    let mut w = Tensor::<f64>::randn(&[3, 2, 3, 3], 0.0, 0.5, &mut rng)?;
    let b = Tensor::<f64>::randn(&[3], 0.0, 0.5, &mut rng)?;
    let c = coeffs(2 * 3 * 6 * 6, 2);

    let (out, cache) = conv2d(&x, &w, &b, 1, Padding::Same)?;
    let grad_out = Tensor::from_vec(out.shape(), c.clone())?;
    let grads = conv2d_backward(&grad_out, &w, &cache)?;

    let h = 1e-5;
    let mut numeric = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let orig = w.data()[i];
        w.data_mut()[i] = orig + h;
        let up = dot(&conv2d(&x, &w, &b, 1, Padding::Same)?.0, &c);
        w.data_mut()[i] = orig - h;
        let down = dot(&conv2d(&x, &w, &b, 1, Padding::Same)?.0, &c);
        w.data_mut()[i] = orig;
        numeric.push((up - down) / (2.0 * h));
    }
    Ok(max_rel_err(grads.weight.data(), &numeric))
}

fn main() -> Result<()> {
    let dense_err = check_dense()?;
    println!("dense weight gradient  max rel err = {dense_err:.3e}");
    let conv_err = check_conv()?;
    println!("conv2d weight gradient max rel err = {conv_err:.3e}");
    assert!(dense_err < 1e-6 && conv_err < 1e-6);
    println!("both within 1e-6 of finite differences");
    Ok(())
}
