//! Deterministic synthetic dataset: four classes of geometric patterns.
//!
//! The pipeline's real subject matter (clinical MRI) cannot ship with the
//! repository, so smoke tests and examples run on generated images whose
//! classes are separable by construction: disks, horizontal stripes,
//! vertical stripes, and crosses, each with jittered geometry and noisy
//! backgrounds. One seed fixes every pixel.

use crate::augment::Image;
use crate::dataset::{ImageSample, Provenance, CLASS_NAMES};
use crate::error::{Error, Result};
use crate::model::{LayerSpec, ModelConfig};
use crate::nn::Padding;
use crate::tensor::rng::Rng;
use crate::tensor::Tensor;
use std::path::Path;

/// Default image extents for the synthetic set: a quarter of the real
/// pipeline resolution in each direction.
pub const SYNTH_HEIGHT: usize = 44;
pub const SYNTH_WIDTH: usize = 52;

fn background(rng: &mut Rng, h: usize, w: usize) -> Vec<f32> {
    (0..h * w).map(|_| 20.0 + 25.0 * rng.next_f64() as f32).collect()
}

fn paint_disk(px: &mut [f32], h: usize, w: usize, rng: &mut Rng) {
    let cy = h as f64 / 2.0 + (rng.next_f64() - 0.5) * h as f64 * 0.2;
    let cx = w as f64 / 2.0 + (rng.next_f64() - 0.5) * w as f64 * 0.2;
    let r = h.min(w) as f64 * (0.22 + 0.08 * rng.next_f64());
    let bright = 180.0 + 60.0 * rng.next_f64() as f32 as f64;
    for y in 0..h {
        for x in 0..w {
            let d = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
            if d <= r {
                px[y * w + x] = bright as f32;
            }
        }
    }
}

fn paint_stripes(px: &mut [f32], h: usize, w: usize, rng: &mut Rng, horizontal: bool) {
    let period = 6 + rng.below(4);
    let phase = rng.below(period);
    let bright = (180.0 + 60.0 * rng.next_f64()) as f32;
    for y in 0..h {
        for x in 0..w {
            let along = if horizontal { y } else { x };
            if (along + phase) % period < period / 2 {
                px[y * w + x] = bright;
            }
        }
    }
}

fn paint_cross(px: &mut [f32], h: usize, w: usize, rng: &mut Rng) {
    let cy = h / 2 + rng.below(7);
    let cx = w / 2 + rng.below(7);
    let cy = cy.saturating_sub(3).min(h - 1);
    let cx = cx.saturating_sub(3).min(w - 1);
    let thickness = 2 + rng.below(3);
    let bright = (180.0 + 60.0 * rng.next_f64()) as f32;
    for y in 0..h {
        for x in 0..w {
            let in_row = y.abs_diff(cy) < thickness;
            let in_col = x.abs_diff(cx) < thickness;
            if in_row || in_col {
                px[y * w + x] = bright;
            }
        }
    }
}

/// One synthetic image of the given class (0 disk, 1 horizontal stripes,
/// 2 vertical stripes, 3 cross).
fn synth_image(class: usize, h: usize, w: usize, rng: &mut Rng) -> Result<Image> {
    let mut px = background(rng, h, w);
    match class {
        0 => paint_disk(&mut px, h, w, rng),
        1 => paint_stripes(&mut px, h, w, rng, true),
        2 => paint_stripes(&mut px, h, w, rng, false),
        3 => paint_cross(&mut px, h, w, rng),
        _ => return Err(Error::Parameter(format!("class {class} out of range 0..4"))),
    }
    Image::new(Tensor::from_vec(&[h, w], px)?)
}

/// Generates `n_per_class` images per class, deterministically from the
/// seed. Samples come out grouped by class, labelled in class order.
pub fn synthetic_dataset(
    n_per_class: usize,
    h: usize,
    w: usize,
    seed: u64,
) -> Result<Vec<ImageSample>> {
    if n_per_class == 0 || h < 8 || w < 8 {
        return Err(Error::Parameter(format!(
            "synthetic dataset needs n_per_class >= 1 and extents >= 8, got {n_per_class} at {h}x{w}"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(4 * n_per_class);
    for (class, name) in CLASS_NAMES.iter().enumerate() {
        for i in 0..n_per_class {
            out.push(ImageSample {
                image: synth_image(class, h, w, &mut rng)?,
                label: class,
                provenance: Provenance::Original,
                source_path: format!("synth://{name}/{i:03}"),
            });
        }
    }
    Ok(out)
}

/// Writes a synthetic dataset as PGM files in the class-directory layout
/// that [`crate::dataset::load_directory`] reads. Returns the image count.
pub fn write_synthetic_dataset(
    root: &Path,
    n_per_class: usize,
    h: usize,
    w: usize,
    seed: u64,
) -> Result<usize> {
    let samples = synthetic_dataset(n_per_class, h, w, seed)?;
    for (class, name) in CLASS_NAMES.iter().enumerate() {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (i, sample) in samples.iter().filter(|s| s.label == class).enumerate() {
            crate::dataset::codec::write_pgm(&dir.join(format!("synth_{i:03}.pgm")), &sample.image)?;
        }
    }
    Ok(samples.len())
}

/// A five-block config proportionally shrunk for small inputs such as the
/// synthetic 44x52 set.
pub fn shrunken_config(input_height: usize, input_width: usize, seed: u64) -> ModelConfig {
    let conv = |channels: usize| LayerSpec::Conv2d {
        channels,
        kernel: 3,
        stride: 1,
        padding: Padding::Same,
    };
    let sep = |channels: usize| LayerSpec::SeparableConv2d {
        channels,
        kernel: 3,
        stride: 1,
        padding: Padding::Same,
    };
    let pool = LayerSpec::Maxpool { window: 2, stride: None };
    let mut blocks = vec![vec![conv(8), LayerSpec::Relu, pool.clone()]];
    for channels in [12, 16, 16, 16] {
        blocks.push(vec![
            sep(channels),
            LayerSpec::Relu,
            LayerSpec::Batchnorm,
            pool.clone(),
        ]);
    }
    // Batch 4 gives the slow-moving batchnorm running statistics enough
    // updates (hundreds per run) to converge within 20 desk-scale epochs.
    ModelConfig {
        input_height,
        input_width,
        blocks,
        dense: vec![32, 16, 8, 4],
        seed,
        learning_rate: 0.003,
        batch_size: 4,
        epochs: 20,
    }
}
