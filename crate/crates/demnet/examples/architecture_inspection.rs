//! Prints the layer-by-layer parameter accounting for the default
//! architecture and for a custom configuration loaded from JSON.
//!
//! Run with: cargo run --example architecture_inspection

use demnet::model::{count_parameters, ModelConfig};
use demnet::Result;

fn print_counts(label: &str, config: &ModelConfig) -> Result<()> {
    let (c, h, w) = config.feature_shape()?;
    let counts = count_parameters(config)?;
    println!("== {label} ==");
    println!(
        "input 1x{}x{}  final feature map {c}x{h}x{w}",
        config.input_height, config.input_width
    );
    println!("{:<22} {:>12} {:>14}", "layer", "trainable", "non-trainable");
    for (name, trainable, non_trainable) in &counts.per_layer {
        println!("{name:<22} {trainable:>12} {non_trainable:>14}");
    }
    println!(
        "{:<22} {:>12} {:>14}   total {}",
        "sum",
        counts.trainable,
        counts.non_trainable,
        counts.total()
    );
    println!();
    Ok(())
}

fn main() -> Result<()> {
    print_counts("default architecture", &ModelConfig::default())?;

    // The same recipe with narrower blocks, parsed from a JSON config.
    let json = r#"{
        "input_height": 176,
        "input_width": 208,
        "blocks": [
            [{"conv2d": {"channels": 4, "kernel": 3}}, "relu",
             {"conv2d": {"channels": 4, "kernel": 3}}, "relu",
             {"maxpool": {}}],
            [{"separable_conv2d": {"channels": 8, "kernel": 3}}, "relu",
             {"separable_conv2d": {"channels": 8, "kernel": 3}}, "relu",
             "batchnorm", {"maxpool": {}}],
            [{"separable_conv2d": {"channels": 9, "kernel": 3}}, "relu",
             {"separable_conv2d": {"channels": 9, "kernel": 3}}, "relu",
             "batchnorm", {"maxpool": {}}],
            [{"separable_conv2d": {"channels": 449, "kernel": 3}}, "relu",
             {"separable_conv2d": {"channels": 449, "kernel": 3}}, "relu",
             "batchnorm", {"maxpool": {}}],
            [{"separable_conv2d": {"channels": 421, "kernel": 3}}, "relu",
             {"separable_conv2d": {"channels": 421, "kernel": 3}}, "relu",
             "batchnorm", {"maxpool": {}}]
        ],
        "dense": [97, 128, 32, 4]
    }"#;
    let config: ModelConfig = serde_json::from_str(json)
        .map_err(|e| demnet::Error::Format(format!("config parse: {e}")))?;
    config.validate()?;
    print_counts("narrow variant from JSON", &config)?;
    Ok(())
}
