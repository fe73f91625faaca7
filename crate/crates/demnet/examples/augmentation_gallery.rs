//! Applies every augmentation to one synthetic image and writes the
//! results as PGM files for visual inspection.
//!
//! Run with: cargo run --example augmentation_gallery
//! Output lands in target/augmentation_gallery/.

use demnet::augment::{apply_transform, AugmentPlan, Transform};
use demnet::dataset::codec::write_pgm;
use demnet::synth::synthetic_dataset;
use std::path::Path;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = Path::new("target/augmentation_gallery");
    std::fs::create_dir_all(out)?;

    // One disk image from the synthetic set as the subject.
    let samples = synthetic_dataset(1, 88, 104, 5)?;
    let original = &samples[0].image;
    write_pgm(&out.join("original.pgm"), original)?;

    let plan = AugmentPlan::all(5);
    for transform in Transform::ALL {
        let augmented = apply_transform(original, transform, &plan, 0)?;
        let path = out.join(format!("{}.pgm", transform.name()));
        write_pgm(&path, &augmented)?;
        let delta: f32 = augmented
            .pixels()
            .data()
            .iter()
            .zip(original.pixels().data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f32>()
            / original.pixels().len() as f32;
        println!("{:<12} mean |delta| = {delta:>8.3}  -> {}", transform.name(), path.display());
    }

    // The multiplier rule: originals plus one copy per transform.
    let expanded = demnet::augment::augment_dataset(&samples, &plan)?;
    println!(
        "dataset multiplier: {} original -> {} total (1 + {} transforms)",
        samples.len(),
        expanded.len(),
        Transform::ALL.len()
    );
    Ok(())
}
