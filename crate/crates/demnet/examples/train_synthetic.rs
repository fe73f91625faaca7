//! Trains the shrunken architecture on the synthetic 4-class set and
//! prints the learning curve plus a held-out evaluation.
//!
//! Run with: cargo run --release --example train_synthetic

use demnet::dataset::{split, CLASS_NAMES};
use demnet::model::{build_model, evaluate, metrics_csv, train};
use demnet::synth::{shrunken_config, synthetic_dataset, SYNTH_HEIGHT, SYNTH_WIDTH};
use demnet::Result;

fn main() -> Result<()> {
    let seed = 42;
    let samples = synthetic_dataset(50, SYNTH_HEIGHT, SYNTH_WIDTH, seed)?;
    let splits = split(&samples, seed)?;
    println!(
        "dataset: {} images, train={} validation={} test={}",
        samples.len(),
        splits.train.len(),
        splits.validation.len(),
        splits.test.len()
    );

    let config = shrunken_config(SYNTH_HEIGHT, SYNTH_WIDTH, seed);
    let mut state = build_model(&config)?;
    let metrics = train(
        &mut state,
        &splits.train,
        &splits.validation,
        config.epochs,
        config.batch_size,
    )?;
    print!("{}", metrics_csv(&metrics));

    let best = state.best.as_ref().expect("training ran at least one epoch");
    println!(
        "best validation accuracy {:.4} at epoch {}",
        best.val_accuracy, best.epoch
    );

    let report = evaluate(&mut state.network, &splits.test, config.batch_size)?;
    println!("test loss={:.4} accuracy={:.4}", report.loss, report.accuracy);
    println!("confusion (rows = true class):");
    for (class, row) in CLASS_NAMES.iter().zip(&report.confusion) {
        println!("  {class:<14} {row:?}");
    }
    Ok(())
}
