//! Label-preserving image transforms: rotations, flips, blur, noise.
//!
//! All transforms keep the image dimensions, keep pixel values inside
//! [0, 255], and are pure functions of (image, parameters, seed). Per-image
//! randomness comes from a stream derived from (master seed, image index,
//! transform id), so the augmented output of a dataset is independent of
//! evaluation order.

use crate::error::{Error, Result};
use crate::tensor::rng::{Rng, Stream};
use crate::tensor::Tensor;

/// Single-channel image: a [H,W] tensor of values in [0, 255].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Tensor<f32>,
}

impl Image {
    /// Wraps a [H,W] tensor, rejecting empty extents and out-of-range or
    /// non-finite values.
    pub fn new(pixels: Tensor<f32>) -> Result<Self> {
        if pixels.rank() != 2 || pixels.shape().contains(&0) {
            return Err(Error::Shape(format!(
                "image: expects non-empty [H,W], got {:?}",
                pixels.shape()
            )));
        }
        for &v in pixels.data() {
            if !(0.0..=255.0).contains(&v) {
                return Err(Error::Domain(format!("image: pixel value {v} outside [0, 255]")));
            }
        }
        Ok(Image { pixels })
    }

    /// Image from raw 8-bit rows.
    pub fn from_bytes(h: usize, w: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != h * w {
            return Err(Error::Shape(format!(
                "image: {h}x{w} needs {} bytes, got {}",
                h * w,
                bytes.len()
            )));
        }
        let data = bytes.iter().map(|&b| b as f32).collect();
        Ok(Image { pixels: Tensor::from_vec(&[h, w], data)? })
    }

    /// Rounds to the nearest 8-bit level, row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.data().iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect()
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn pixels(&self) -> &Tensor<f32> {
        &self.pixels
    }

    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.pixels.data()[y * self.width() + x]
    }
}

/// The six supported transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transform {
    RotateCcw,
    RotateCw,
    HFlip,
    VFlip,
    Blur,
    Noise,
}

impl Transform {
    pub const ALL: [Transform; 6] = [
        Transform::RotateCcw,
        Transform::RotateCw,
        Transform::HFlip,
        Transform::VFlip,
        Transform::Blur,
        Transform::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Transform::RotateCcw => "rotate_ccw",
            Transform::RotateCw => "rotate_cw",
            Transform::HFlip => "hflip",
            Transform::VFlip => "vflip",
            Transform::Blur => "blur",
            Transform::Noise => "noise",
        }
    }

    pub fn parse(token: &str) -> Result<Self> {
        Transform::ALL
            .into_iter()
            .find(|t| t.name() == token)
            .ok_or_else(|| Error::Config(format!("unknown transform {token:?}")))
    }

    fn id(self) -> u64 {
        Transform::ALL.iter().position(|&t| t == self).unwrap() as u64
    }
}

/// Which transforms to apply, with their parameters and the master seed.
#[derive(Debug, Clone)]
pub struct AugmentPlan {
    transforms: Vec<Transform>,
    pub blur_sigma: f64,
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl AugmentPlan {
    /// Plan over the given transforms, each allowed at most once.
    pub fn new(transforms: &[Transform], seed: u64) -> Result<Self> {
        for (i, t) in transforms.iter().enumerate() {
            if transforms[..i].contains(t) {
                return Err(Error::Config(format!("transform {} listed twice", t.name())));
            }
        }
        Ok(AugmentPlan {
            transforms: transforms.to_vec(),
            blur_sigma: 1.0,
            noise_amplitude: 0.05,
            seed,
        })
    }

    /// Plan with all six transforms enabled.
    pub fn all(seed: u64) -> Self {
        AugmentPlan::new(&Transform::ALL, seed).unwrap()
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }
}

/// Rotation sense. "Ccw" turns image content counter-clockwise on screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Cw,
    Ccw,
}

/// Flip axis: horizontal reverses columns, vertical reverses rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlipAxis {
    Horizontal,
    Vertical,
}

/// Noise distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    Uniform,
}

/// Rotation about the image center with bilinear interpolation; samples
/// falling outside the source are filled with 0. Output size equals input
/// size. The angle must lie in [0, 180] degrees.
pub fn rotate(img: &Image, direction: Direction, angle_deg: f64) -> Result<Image> {
    if !(0.0..=180.0).contains(&angle_deg) {
        return Err(Error::Parameter(format!(
            "rotation angle {angle_deg} outside [0, 180] degrees"
        )));
    }
    let (h, w) = (img.height(), img.width());
    // Screen y grows downward, so visual ccw is a negative math angle.
    let alpha = match direction {
        Direction::Ccw => -angle_deg.to_radians(),
        Direction::Cw => angle_deg.to_radians(),
    };
    let (sin, cos) = alpha.sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let src = img.pixels.data();
    let mut out = vec![0f32; h * w];

    let sample = |sy: f64, sx: f64| -> f64 {
        let y0 = sy.floor();
        let x0 = sx.floor();
        let fy = sy - y0;
        let fx = sx - x0;
        let mut acc = 0.0;
        for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
            if wy == 0.0 {
                continue;
            }
            let yy = y0 as i64 + dy;
            if yy < 0 || yy >= h as i64 {
                continue;
            }
            for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                if wx == 0.0 {
                    continue;
                }
                let xx = x0 as i64 + dx;
                if xx < 0 || xx >= w as i64 {
                    continue;
                }
                acc += wy * wx * src[yy as usize * w + xx as usize] as f64;
            }
        }
        acc
    };

    for y in 0..h {
        let dy = y as f64 - cy;
        for x in 0..w {
            let dx = x as f64 - cx;
            // Inverse map: rotate the destination offset by -alpha.
            let sx = cx + dx * cos + dy * sin;
            let sy = cy - dx * sin + dy * cos;
            out[y * w + x] = sample(sy, sx).clamp(0.0, 255.0) as f32;
        }
    }
    Ok(Image { pixels: Tensor::from_vec(&[h, w], out)? })
}

/// Exact index reversal along one axis; lossless.
pub fn flip(img: &Image, axis: FlipAxis) -> Image {
    let (h, w) = (img.height(), img.width());
    let src = img.pixels.data();
    let mut out = vec![0f32; h * w];
    match axis {
        FlipAxis::Horizontal => {
            for y in 0..h {
                for x in 0..w {
                    out[y * w + x] = src[y * w + (w - 1 - x)];
                }
            }
        }
        FlipAxis::Vertical => {
            for y in 0..h {
                out[y * w..(y + 1) * w].copy_from_slice(&src[(h - 1 - y) * w..(h - y) * w]);
            }
        }
    }
    Image { pixels: Tensor::from_vec(&[h, w], out).unwrap() }
}

/// Normalized 1-D Gaussian kernel with radius ceil(3σ), evaluated in f64.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (-(radius as i64)..=radius as i64)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    for v in &mut k {
        *v /= total;
    }
    k
}

/// Reflected index for borders: ..., 1, 0 | 0, 1, ... (edge repeated).
#[inline]
fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian blur with reflected borders. Accumulation runs in
/// f64, which keeps constant images exactly constant after the f32 store.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::Parameter(format!("blur sigma {sigma} must be positive")));
    }
    let (h, w) = (img.height(), img.width());
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() - 1) / 2;
    let src = img.pixels.data();

    // Horizontal pass.
    let mut mid = vec![0f64; h * w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (j, &kv) in kernel.iter().enumerate() {
                let xx = reflect(x as i64 + j as i64 - radius as i64, w);
                acc += kv * row[xx] as f64;
            }
            mid[y * w + x] = acc;
        }
    }
    // Vertical pass.
    let mut out = vec![0f32; h * w];
    for x in 0..w {
        for y in 0..h {
            let mut acc = 0.0;
            for (j, &kv) in kernel.iter().enumerate() {
                let yy = reflect(y as i64 + j as i64 - radius as i64, h);
                acc += kv * mid[yy * w + x];
            }
            out[y * w + x] = acc.clamp(0.0, 255.0) as f32;
        }
    }
    Ok(Image { pixels: Tensor::from_vec(&[h, w], out)? })
}

/// Additive noise: gaussian N(0, amplitude·255) or uniform
/// U(−amplitude·255, +amplitude·255), clamped back to [0, 255].
pub fn add_noise(img: &Image, kind: NoiseKind, amplitude: f64, rng: &mut Rng) -> Result<Image> {
    if amplitude < 0.0 {
        return Err(Error::Parameter(format!("noise amplitude {amplitude} must be >= 0")));
    }
    let scale = amplitude * 255.0;
    let data = img
        .pixels
        .data()
        .iter()
        .map(|&v| {
            let n = match kind {
                NoiseKind::Gaussian => rng.normal() * scale,
                NoiseKind::Uniform => rng.uniform(-scale, scale),
            };
            (v as f64 + n).clamp(0.0, 255.0) as f32
        })
        .collect();
    Ok(Image { pixels: Tensor::from_vec(img.pixels.shape(), data)? })
}

/// Applies one planned transform to the image at `image_index`, drawing any
/// randomness from the (seed, index, transform) stream.
pub fn apply_transform(
    img: &Image,
    transform: Transform,
    plan: &AugmentPlan,
    image_index: u64,
) -> Result<Image> {
    let mut rng = Rng::stream(
        plan.seed,
        Stream::Augment,
        image_index * Transform::ALL.len() as u64 + transform.id(),
    );
    match transform {
        Transform::RotateCcw => rotate(img, Direction::Ccw, rng.uniform(0.0, 180.0)),
        Transform::RotateCw => rotate(img, Direction::Cw, rng.uniform(0.0, 180.0)),
        Transform::HFlip => Ok(flip(img, FlipAxis::Horizontal)),
        Transform::VFlip => Ok(flip(img, FlipAxis::Vertical)),
        Transform::Blur => gaussian_blur(img, plan.blur_sigma),
        Transform::Noise => {
            let kind = if rng.below(2) == 0 { NoiseKind::Gaussian } else { NoiseKind::Uniform };
            add_noise(img, kind, plan.noise_amplitude, &mut rng)
        }
    }
}

/// Expands a dataset with one augmented copy per sample per enabled
/// transform: originals first (in input order), then augmented copies
/// grouped by source sample in plan order. Labels carry over.
pub fn augment_dataset(
    samples: &[crate::dataset::ImageSample],
    plan: &AugmentPlan,
) -> Result<Vec<crate::dataset::ImageSample>> {
    use crate::dataset::{ImageSample, Provenance};
    if samples.is_empty() {
        return Err(Error::Config("augment: dataset is empty".into()));
    }
    let mut out: Vec<ImageSample> = samples.to_vec();
    out.reserve(samples.len() * plan.transforms.len());
    for (idx, sample) in samples.iter().enumerate() {
        for &tf in &plan.transforms {
            let image = apply_transform(&sample.image, tf, plan, idx as u64)?;
            out.push(ImageSample {
                image,
                label: sample.label,
                provenance: Provenance::Augmented(tf),
                source_path: sample.source_path.clone(),
            });
        }
    }
    Ok(out)
}
