//! Dataset plumbing: directory ingestion, resizing, splitting, batching.
//!
//! The on-disk layout is one subdirectory per class under a root:
//! `non_demented/`, `very_mild/`, `mild/`, `moderate/`, holding .pgm or
//! .png files. Class indices follow that order (0..3). Loading sorts all
//! paths lexicographically so sample order never depends on filesystem
//! enumeration order.

pub mod codec;

use crate::augment::{Image, Transform};
use crate::error::{Error, Result};
use crate::tensor::rng::{Rng, Stream};
use crate::tensor::Tensor;
use std::fmt::Write as _;
use std::path::Path;

/// Class directory names, in label order.
pub const CLASS_NAMES: [&str; 4] = ["non_demented", "very_mild", "mild", "moderate"];
pub const NUM_CLASSES: usize = 4;

/// Default input resolution (height, width).
pub const INPUT_HEIGHT: usize = 176;
pub const INPUT_WIDTH: usize = 208;

/// Whether a sample is an original file or an augmented copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Original,
    Augmented(Transform),
}

/// One labelled image.
#[derive(Debug, Clone)]
pub struct ImageSample {
    pub image: Image,
    /// Class index, < 4.
    pub label: usize,
    pub provenance: Provenance,
    pub source_path: String,
}

impl ImageSample {
    /// Path as written to split manifests: augmented copies carry a
    /// `#<transform>` suffix on their source path.
    pub fn manifest_path(&self) -> String {
        match self.provenance {
            Provenance::Original => self.source_path.clone(),
            Provenance::Augmented(tf) => format!("{}#{}", self.source_path, tf.name()),
        }
    }
}

/// Result of scanning a dataset root: decoded samples plus per-file skip
/// reasons for anything undecodable.
#[derive(Debug)]
pub struct LoadReport {
    pub samples: Vec<ImageSample>,
    pub skipped: Vec<(String, String)>,
}

/// Loads every .pgm/.png under the four class directories. Undecodable
/// files are recorded as skips, not errors; a missing class directory is a
/// configuration error naming what was found instead.
pub fn load_directory(root: &Path) -> Result<LoadReport> {
    if !root.is_dir() {
        return Err(Error::Config(format!("dataset root {} is not a directory", root.display())));
    }
    let mut missing = Vec::new();
    let mut files: Vec<(String, usize)> = Vec::new();
    for (label, class) in CLASS_NAMES.iter().enumerate() {
        let dir = root.join(class);
        if !dir.is_dir() {
            missing.push(*class);
            continue;
        }
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let path = entry.path();
            if !path.is_file() {
                continue;
            }
            let ext = path
                .extension()
                .map(|e| e.to_string_lossy().to_ascii_lowercase())
                .unwrap_or_default();
            if ext == "pgm" || ext == "png" {
                files.push((path.to_string_lossy().into_owned(), label));
            }
        }
    }
    if !missing.is_empty() {
        let found: Vec<String> = std::fs::read_dir(root)
            .map_err(|e| Error::io(root, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        return Err(Error::Config(format!(
            "missing class directories {missing:?} under {}; found entries: {found:?}",
            root.display()
        )));
    }
    files.sort();

    let mut samples = Vec::with_capacity(files.len());
    let mut skipped = Vec::new();
    for (path, label) in files {
        match codec::read_image(Path::new(&path)) {
            Ok(image) => samples.push(ImageSample {
                image,
                label,
                provenance: Provenance::Original,
                source_path: path,
            }),
            Err(e) => skipped.push((path, e.to_string())),
        }
    }
    Ok(LoadReport { samples, skipped })
}

/// Bilinear resize with half-pixel-aligned sample centers. Equal source and
/// target extents return the input untouched.
pub fn resize(img: &Image, target_h: usize, target_w: usize) -> Result<Image> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::Parameter(format!("resize target {target_h}x{target_w} must be positive")));
    }
    let (h, w) = (img.height(), img.width());
    if (h, w) == (target_h, target_w) {
        return Ok(img.clone());
    }
    let scale_y = h as f64 / target_h as f64;
    let scale_x = w as f64 / target_w as f64;
    let src = img.pixels().data();
    let mut out = vec![0f32; target_h * target_w];
    for ty in 0..target_h {
        let sy = ((ty as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for tx in 0..target_w {
            let sx = ((tx as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            let p00 = src[y0 * w + x0] as f64;
            let p01 = src[y0 * w + x1] as f64;
            let p10 = src[y1 * w + x0] as f64;
            let p11 = src[y1 * w + x1] as f64;
            let top = p00 * (1.0 - fx) + p01 * fx;
            let bottom = p10 * (1.0 - fx) + p11 * fx;
            out[ty * target_w + tx] = (top * (1.0 - fy) + bottom * fy).clamp(0.0, 255.0) as f32;
        }
    }
    Image::new(Tensor::from_vec(&[target_h, target_w], out)?)
}

/// Stratified 6:2:2 split.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: Vec<ImageSample>,
    pub validation: Vec<ImageSample>,
    pub test: Vec<ImageSample>,
    pub seed: u64,
}

/// Splits per class: shuffle with a class-derived stream, then assign the
/// first floor(n/5) samples to test, the next floor(n/5) to validation,
/// and the remainder to train.
pub fn split(samples: &[ImageSample], seed: u64) -> Result<SplitDataset> {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (idx, s) in samples.iter().enumerate() {
        if s.label >= NUM_CLASSES {
            return Err(Error::Contract(format!(
                "sample {idx} has label {} outside 0..{NUM_CLASSES}",
                s.label
            )));
        }
        per_class[s.label].push(idx);
    }
    for (label, members) in per_class.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::Config(format!(
                "class {} ({}) has no samples",
                label, CLASS_NAMES[label]
            )));
        }
    }
    let mut out = SplitDataset {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for (label, members) in per_class.iter_mut().enumerate() {
        let mut rng = Rng::stream(seed, Stream::Split, label as u64);
        rng.shuffle(members);
        let fifth = members.len() / 5;
        for (pos, &idx) in members.iter().enumerate() {
            let sample = samples[idx].clone();
            if pos < fifth {
                out.test.push(sample);
            } else if pos < 2 * fifth {
                out.validation.push(sample);
            } else {
                out.train.push(sample);
            }
        }
    }
    Ok(out)
}

/// Split manifest CSV: header `path,label,split`, then one row per sample
/// in train, validation, test order.
pub fn split_manifest_csv(split: &SplitDataset) -> String {
    let mut out = String::from("path,label,split\n");
    for (name, part) in
        [("train", &split.train), ("validation", &split.validation), ("test", &split.test)]
    {
        for s in part {
            let _ = writeln!(out, "{},{},{}", s.manifest_path(), s.label, name);
        }
    }
    out
}

/// One-hot encodes labels into a [N,K] tensor.
pub fn one_hot(labels: &[usize], k: usize) -> Result<Tensor<f32>> {
    let mut t = Tensor::<f32>::zeros(&[labels.len(), k])?;
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::Contract(format!("label {label} out of range for {k} classes")));
        }
        t.set(&[i, label], 1.0);
    }
    Ok(t)
}

/// One training batch: normalized images and one-hot targets.
#[derive(Debug, Clone)]
pub struct Batch {
    /// [B,1,H,W], pixels scaled to [0,1].
    pub images: Tensor<f32>,
    /// [B,K] one-hot.
    pub targets: Tensor<f32>,
    pub labels: Vec<usize>,
}

/// Batches samples, normalizing pixels to [0,1]. `shuffle` takes
/// (master seed, epoch) and derives a per-epoch stream; `None` keeps input
/// order. The final partial batch is kept. All images must share one
/// resolution.
pub fn to_batches(
    samples: &[ImageSample],
    batch_size: usize,
    shuffle: Option<(u64, u64)>,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Parameter("batch size must be >= 1".into()));
    }
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let (h, w) = (samples[0].image.height(), samples[0].image.width());
    for (i, s) in samples.iter().enumerate() {
        if (s.image.height(), s.image.width()) != (h, w) {
            return Err(Error::Shape(format!(
                "sample {i} is {}x{}, expected {h}x{w}; resize the dataset first",
                s.image.height(),
                s.image.width()
            )));
        }
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    if let Some((seed, epoch)) = shuffle {
        let mut rng = Rng::stream(seed, Stream::Shuffle, epoch);
        rng.shuffle(&mut order);
    }
    let inv = 1.0f32 / 255.0;
    let mut batches = Vec::with_capacity(order.len().div_ceil(batch_size));
    for chunk in order.chunks(batch_size) {
        let b = chunk.len();
        let mut pixels = Vec::with_capacity(b * h * w);
        let mut labels = Vec::with_capacity(b);
        for &idx in chunk {
            let s = &samples[idx];
            pixels.extend(s.image.pixels().data().iter().map(|&v| v * inv));
            labels.push(s.label);
        }
        batches.push(Batch {
            images: Tensor::from_vec(&[b, 1, h, w], pixels)?,
            targets: one_hot(&labels, NUM_CLASSES)?,
            labels,
        });
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::codec::write_pgm;

    fn make_image(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> Image {
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                data.push(f(y, x));
            }
        }
        Image::new(Tensor::from_vec(&[h, w], data).unwrap()).unwrap()
    }

    fn make_sample(label: usize, tag: usize) -> ImageSample {
        ImageSample {
            image: make_image(4, 4, |y, x| ((label * 40 + tag * 7 + y * 4 + x) % 256) as f32),
            label,
            provenance: Provenance::Original,
            source_path: format!("mem://{label}/{tag}"),
        }
    }

    fn write_class_dirs(root: &Path, counts: [usize; 4]) {
        for (label, class) in CLASS_NAMES.iter().enumerate() {
            let dir = root.join(class);
            std::fs::create_dir_all(&dir).unwrap();
            for i in 0..counts[label] {
                let img = make_image(6, 5, |y, x| ((label * 50 + i * 11 + y + x) % 256) as f32);
                write_pgm(&dir.join(format!("img_{i:03}.pgm")), &img).unwrap();
            }
        }
    }

    #[test]
    fn load_directory_labels_by_class_dir() {
        let dir = tempfile::tempdir().unwrap();
        write_class_dirs(dir.path(), [1, 1, 1, 1]);
        let report = load_directory(dir.path()).unwrap();
        assert_eq!(report.samples.len(), 4);
        assert!(report.skipped.is_empty());
        let mut labels: Vec<usize> = report.samples.iter().map(|s| s.label).collect();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn load_directory_order_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        write_class_dirs(dir.path(), [3, 2, 4, 1]);
        let a = load_directory(dir.path()).unwrap();
        let b = load_directory(dir.path()).unwrap();
        let paths = |r: &LoadReport| -> Vec<String> {
            r.samples.iter().map(|s| s.source_path.clone()).collect()
        };
        assert_eq!(paths(&a), paths(&b));
        let mut sorted = paths(&a);
        sorted.sort();
        assert_eq!(paths(&a), sorted, "paths are emitted in lexicographic order");
    }

    #[test]
    fn load_directory_reports_missing_class_dirs() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("non_demented")).unwrap();
        std::fs::create_dir_all(dir.path().join("unrelated")).unwrap();
        let err = load_directory(dir.path()).unwrap_err();
        match err {
            Error::Config(msg) => {
                assert!(msg.contains("very_mild"), "{msg}");
                assert!(msg.contains("unrelated"), "{msg}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn load_directory_skips_undecodable_files() {
        let dir = tempfile::tempdir().unwrap();
        write_class_dirs(dir.path(), [1, 1, 1, 1]);
        std::fs::write(dir.path().join("mild/broken.pgm"), b"not a pgm").unwrap();
        let report = load_directory(dir.path()).unwrap();
        assert_eq!(report.samples.len(), 4);
        assert_eq!(report.skipped.len(), 1);
        assert!(report.skipped[0].0.ends_with("broken.pgm"));
    }

    #[test]
    fn resize_to_same_extent_is_identity() {
        let img = make_image(7, 9, |y, x| ((y * 9 + x) % 256) as f32);
        let out = resize(&img, 7, 9).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn resize_preserves_constants_exactly_on_doubling() {
        let img = make_image(88, 104, |_, _| 93.0);
        let out = resize(&img, 176, 208).unwrap();
        assert_eq!(out.height(), 176);
        assert_eq!(out.width(), 208);
        assert!(out.pixels().data().iter().all(|&v| v == 93.0));
    }

    #[test]
    fn downsampling_a_checkerboard_preserves_the_mean() {
        let img = make_image(352, 416, |y, x| if (y + x) % 2 == 0 { 0.0 } else { 255.0 });
        let out = resize(&img, 176, 208).unwrap();
        let mean_in: f64 =
            img.pixels().data().iter().map(|&v| v as f64).sum::<f64>() / (352.0 * 416.0);
        let mean_out: f64 =
            out.pixels().data().iter().map(|&v| v as f64).sum::<f64>() / (176.0 * 208.0);
        assert!((mean_in - mean_out).abs() < 1.0 / 255.0, "{mean_in} vs {mean_out}");
    }

    #[test]
    fn split_is_exact_for_multiples_of_five() {
        for (n, want) in [(100usize, (60, 20, 20)), (10, (6, 2, 2))] {
            let mut samples = Vec::new();
            for label in 0..4 {
                for tag in 0..n {
                    samples.push(make_sample(label, tag));
                }
            }
            let s = split(&samples, 7).unwrap();
            for label in 0..4 {
                let count = |part: &[ImageSample]| part.iter().filter(|s| s.label == label).count();
                assert_eq!(count(&s.train), want.0, "train, class {label}");
                assert_eq!(count(&s.validation), want.1, "val, class {label}");
                assert_eq!(count(&s.test), want.2, "test, class {label}");
            }
        }
    }

    #[test]
    fn split_floors_and_gives_the_remainder_to_train() {
        let mut samples = Vec::new();
        for label in 0..4 {
            for tag in 0..5 {
                samples.push(make_sample(label, tag));
            }
        }
        // 5 per class: 3 train / 1 val / 1 test.
        let s = split(&samples, 1).unwrap();
        assert_eq!(s.train.len(), 12);
        assert_eq!(s.validation.len(), 4);
        assert_eq!(s.test.len(), 4);
    }

    #[test]
    fn split_partitions_the_input() {
        let mut samples = Vec::new();
        for label in 0..4 {
            for tag in 0..9 {
                samples.push(make_sample(label, tag));
            }
        }
        let s = split(&samples, 3).unwrap();
        let mut seen: Vec<String> = s
            .train
            .iter()
            .chain(&s.validation)
            .chain(&s.test)
            .map(|x| x.source_path.clone())
            .collect();
        assert_eq!(seen.len(), samples.len());
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), samples.len(), "no sample appears twice");
    }

    #[test]
    fn split_requires_every_class() {
        let samples: Vec<ImageSample> = (0..3).map(|label| make_sample(label, 0)).collect();
        let err = split(&samples, 1).unwrap_err();
        match err {
            Error::Config(msg) => assert!(msg.contains("moderate"), "{msg}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let mut samples = Vec::new();
        for label in 0..4 {
            for tag in 0..10 {
                samples.push(make_sample(label, tag));
            }
        }
        let a = split(&samples, 5).unwrap();
        let b = split(&samples, 5).unwrap();
        assert_eq!(split_manifest_csv(&a), split_manifest_csv(&b));
        let c = split(&samples, 6).unwrap();
        assert_ne!(split_manifest_csv(&a), split_manifest_csv(&c));
    }

    #[test]
    fn manifest_has_header_and_one_row_per_sample() {
        let mut samples = Vec::new();
        for label in 0..4 {
            for tag in 0..5 {
                samples.push(make_sample(label, tag));
            }
        }
        let s = split(&samples, 2).unwrap();
        let csv = split_manifest_csv(&s);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "path,label,split");
        assert_eq!(lines.len(), 21);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 3));
    }

    #[test]
    fn one_hot_basics() {
        let t = one_hot(&[2], 4).unwrap();
        assert_eq!(t.data(), &[0.0, 0.0, 1.0, 0.0]);
        let t = one_hot(&[0, 3, 1], 4).unwrap();
        for row in 0..3 {
            let sum: f32 = (0..4).map(|k| t.at(&[row, k])).sum();
            assert_eq!(sum, 1.0);
        }
        assert_eq!(t.argmax(1).unwrap(), vec![0, 3, 1]);
        assert!(matches!(one_hot(&[4], 4).unwrap_err(), Error::Contract(_)));
    }

    #[test]
    fn batches_partition_and_normalize() {
        let samples: Vec<ImageSample> = (0..10).map(|i| make_sample(i % 4, i)).collect();
        let batches = to_batches(&samples, 4, None).unwrap();
        let sizes: Vec<usize> = batches.iter().map(|b| b.labels.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        assert_eq!(batches[0].images.shape(), &[4, 1, 4, 4]);
        assert_eq!(batches[0].targets.shape(), &[4, 4]);
        // Unshuffled batches preserve input order.
        let labels: Vec<usize> = batches.iter().flat_map(|b| b.labels.clone()).collect();
        let want: Vec<usize> = samples.iter().map(|s| s.label).collect();
        assert_eq!(labels, want);
    }

    #[test]
    fn batch_normalization_maps_255_to_one() {
        let sample = ImageSample {
            image: make_image(2, 2, |_, _| 255.0),
            label: 0,
            provenance: Provenance::Original,
            source_path: "mem://white".into(),
        };
        let batches = to_batches(&[sample], 1, None).unwrap();
        assert!(batches[0].images.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn shuffled_batches_are_deterministic_per_seed_and_epoch() {
        let samples: Vec<ImageSample> = (0..20).map(|i| make_sample(i % 4, i)).collect();
        let a = to_batches(&samples, 8, Some((9, 0))).unwrap();
        let b = to_batches(&samples, 8, Some((9, 0))).unwrap();
        let lab = |bs: &[Batch]| bs.iter().flat_map(|b| b.labels.clone()).collect::<Vec<_>>();
        assert_eq!(lab(&a), lab(&b));
        let c = to_batches(&samples, 8, Some((9, 1))).unwrap();
        assert_ne!(lab(&a), lab(&c), "different epochs reshuffle");
    }

    #[test]
    fn batches_reject_mixed_resolutions() {
        let a = make_sample(0, 0);
        let b = ImageSample {
            image: make_image(5, 5, |_, _| 0.0),
            label: 1,
            provenance: Provenance::Original,
            source_path: "mem://odd".into(),
        };
        assert!(matches!(to_batches(&[a, b], 2, None).unwrap_err(), Error::Shape(_)));
    }

    #[test]
    fn augment_then_split_keeps_augmented_paths_distinct() {
        use crate::augment::AugmentPlan;
        let mut samples = Vec::new();
        for label in 0..4 {
            for tag in 0..5 {
                samples.push(make_sample(label, tag));
            }
        }
        let plan = AugmentPlan::all(11);
        let expanded = crate::augment::augment_dataset(&samples, &plan).unwrap();
        assert_eq!(expanded.len(), 20 * 7);
        let s = split(&expanded, 11).unwrap();
        let csv = split_manifest_csv(&s);
        assert_eq!(csv.lines().count(), 141);
        assert!(csv.contains("#rotate_ccw"));
    }
}
