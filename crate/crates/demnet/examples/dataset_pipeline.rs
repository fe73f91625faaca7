//! Walks the dataset plumbing end to end: write a synthetic set to disk,
//! load it back, resize, split 6:2:2 per class, and batch.
//!
//! Run with: cargo run --example dataset_pipeline

use demnet::dataset::{load_directory, resize, split, to_batches, CLASS_NAMES};
use demnet::synth::write_synthetic_dataset;
use std::path::Path;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new("target/dataset_pipeline");
    if root.exists() {
        std::fs::remove_dir_all(root)?;
    }
    let count = write_synthetic_dataset(root, 15, 44, 52, 9)?;
    println!("wrote {count} PGM files under {}", root.display());

    let report = load_directory(root)?;
    println!("loaded {} samples, skipped {}", report.samples.len(), report.skipped.len());

    // Resize to double resolution to show the interpolation path.
    let mut resized = Vec::with_capacity(report.samples.len());
    for mut sample in report.samples {
        sample.image = resize(&sample.image, 88, 104)?;
        resized.push(sample);
    }

    let splits = split(&resized, 9)?;
    println!("split: train={} validation={} test={}", splits.train.len(), splits.validation.len(), splits.test.len());
    for (label, class) in CLASS_NAMES.iter().enumerate() {
        let per = |part: &[demnet::dataset::ImageSample]| {
            part.iter().filter(|s| s.label == label).count()
        };
        println!(
            "  {class:<14} train={} validation={} test={}",
            per(&splits.train),
            per(&splits.validation),
            per(&splits.test)
        );
    }

    let batches = to_batches(&splits.train, 8, Some((9, 0)))?;
    println!("train batches of 8: {:?}", batches.iter().map(|b| b.labels.len()).collect::<Vec<_>>());
    let first = &batches[0];
    println!(
        "first batch tensor {:?}, pixel range [{:.3}, {:.3}], labels {:?}",
        first.images.shape(),
        first.images.data().iter().cloned().fold(f32::INFINITY, f32::min),
        first.images.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max),
        first.labels
    );
    Ok(())
}
