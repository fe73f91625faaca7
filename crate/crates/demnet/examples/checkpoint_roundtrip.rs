//! Trains briefly, saves a checkpoint, reloads it, and verifies the
//! restored model evaluates identically to the original.
//!
//! Run with: cargo run --release --example checkpoint_roundtrip

use demnet::dataset::split;
use demnet::model::{build_model, evaluate, load_checkpoint, save_checkpoint, train};
use demnet::synth::{shrunken_config, synthetic_dataset, SYNTH_HEIGHT, SYNTH_WIDTH};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 7;
    let samples = synthetic_dataset(12, SYNTH_HEIGHT, SYNTH_WIDTH, seed)?;
    let splits = split(&samples, seed)?;

    let mut config = shrunken_config(SYNTH_HEIGHT, SYNTH_WIDTH, seed);
    config.epochs = 2;
    let mut state = build_model(&config)?;
    train(
        &mut state,
        &splits.train,
        &splits.validation,
        config.epochs,
        config.batch_size,
    )?;

    let dir = std::env::temp_dir().join("demnet_checkpoint_roundtrip");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ckpt");
    save_checkpoint(&path, &state)?;
    let bytes = std::fs::metadata(&path)?.len();
    println!("saved {} ({bytes} bytes)", path.display());

    let mut restored = load_checkpoint(&path)?;
    assert_eq!(restored.epoch, state.epoch);
    assert_eq!(restored.seed, state.seed);
    assert_eq!(restored.adam.t, state.adam.t);

    let before = evaluate(&mut state.network, &splits.test, config.batch_size)?;
    let after = evaluate(&mut restored.network, &splits.test, config.batch_size)?;
    println!("original  loss={:.6} accuracy={:.4}", before.loss, before.accuracy);
    println!("restored  loss={:.6} accuracy={:.4}", after.loss, after.accuracy);
    assert_eq!(before.loss.to_bits(), after.loss.to_bits());
    assert_eq!(before.accuracy.to_bits(), after.accuracy.to_bits());
    println!("restored model evaluates bit-identically");

    // A second save of the restored state must reproduce the file exactly.
    let path2 = dir.join("model2.ckpt");
    save_checkpoint(&path2, &restored)?;
    let a = std::fs::read(&path)?;
    let b = std::fs::read(&path2)?;
    assert_eq!(a, b);
    println!("re-saved checkpoint is byte-identical");
    Ok(())
}
