//! The training loop, evaluation, and metrics export.

use super::{BestSnapshot, TrainState};
use crate::dataset::{to_batches, ImageSample, Batch, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::optim::softmax_cross_entropy;
use crate::tensor::Tensor;
use std::fmt::Write as _;
use std::path::Path;

/// One row of the training curve.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Evaluation summary over a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Mean cross-entropy.
    pub loss: f64,
    /// Fraction of samples whose argmax probability hits the label.
    pub accuracy: f64,
    /// confusion[true][predicted] sample counts.
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

fn batch_correct(probs: &Tensor<f32>, labels: &[usize]) -> Result<usize> {
    let preds = probs.argmax(1)?;
    Ok(preds.iter().zip(labels).filter(|(p, l)| p == l).count())
}

/// Trains for `epochs` full passes: shuffled train batches with batchnorm
/// in train mode and one Adam step per batch, then a no-update validation
/// pass with batchnorm in infer mode. Keeps the snapshot with the highest
/// validation accuracy on `state.best`. A non-finite loss aborts with the
/// epoch/batch position.
pub fn train(
    state: &mut TrainState,
    train_samples: &[ImageSample],
    val_samples: &[ImageSample],
    epochs: usize,
    batch_size: usize,
) -> Result<Vec<EpochMetrics>> {
    if epochs > 0 && (train_samples.is_empty() || val_samples.is_empty()) {
        return Err(Error::Config(
            "training needs non-empty train and validation sets".into(),
        ));
    }
    let mut metrics = Vec::with_capacity(epochs);
    let param_names = state.network.param_names();
    for _ in 0..epochs {
        let epoch = state.epoch;
        let batches = to_batches(train_samples, batch_size, Some((state.seed, epoch as u64)))?;
        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (bi, batch) in batches.iter().enumerate() {
            let (logits, caches) = state.network.forward_train(&batch.images)?;
            let (loss, probs, grad_logits) = softmax_cross_entropy(&logits, &batch.targets)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {loss} at epoch {} batch {bi}",
                    epoch + 1
                )));
            }
            loss_sum += loss as f64 * batch.labels.len() as f64;
            correct += batch_correct(&probs, &batch.labels)?;
            let grads = state.network.backward(&grad_logits, caches)?;
            let grad_refs: Vec<&Tensor<f32>> = grads.iter().collect();
            let mut params = state.network.params_mut();
            state.adam.step(&mut params, &grad_refs, |i| param_names[i].clone())?;
        }
        let n_train = train_samples.len() as f64;
        let val = evaluate(&mut state.network, val_samples, batch_size)?;
        state.epoch += 1;
        let row = EpochMetrics {
            epoch: state.epoch,
            train_loss: loss_sum / n_train,
            train_acc: correct as f64 / n_train,
            val_loss: val.loss,
            val_acc: val.accuracy,
        };
        let improved = state.best.as_ref().is_none_or(|b| val.accuracy > b.val_accuracy);
        if improved {
            state.best = Some(BestSnapshot {
                epoch: state.epoch,
                val_accuracy: val.accuracy,
                network: state.network.clone(),
                adam: state.adam.clone(),
            });
        }
        metrics.push(row);
    }
    Ok(metrics)
}

/// Class probabilities for a prepared batch tensor, batchnorm in infer
/// mode. Rows sum to 1.
pub fn predict_probs(network: &mut Network<f32>, images: &Tensor<f32>) -> Result<Tensor<f32>> {
    let logits = network.forward_infer(images)?;
    crate::nn::softmax(&logits)
}

/// Mean loss, accuracy, and the 4x4 confusion matrix (rows = true class)
/// over a sample set, batchnorm in infer mode, no parameter updates.
pub fn evaluate(
    network: &mut Network<f32>,
    samples: &[ImageSample],
    batch_size: usize,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Config("evaluation needs a non-empty sample set".into()));
    }
    let batches: Vec<Batch> = to_batches(samples, batch_size, None)?;
    let mut loss_sum = 0.0f64;
    let mut correct = 0usize;
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for batch in &batches {
        let logits = network.forward_infer(&batch.images)?;
        let (loss, probs, _) = softmax_cross_entropy(&logits, &batch.targets)?;
        loss_sum += loss as f64 * batch.labels.len() as f64;
        let preds = probs.argmax(1)?;
        for (&pred, &label) in preds.iter().zip(&batch.labels) {
            confusion[label][pred] += 1;
            if pred == label {
                correct += 1;
            }
        }
    }
    let n = samples.len() as f64;
    Ok(EvalReport {
        loss: loss_sum / n,
        accuracy: correct as f64 / n,
        confusion,
    })
}

/// Renders the metrics CSV: header plus one row per epoch, reals with six
/// decimal places.
pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
    for m in metrics {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            m.epoch, m.train_loss, m.train_acc, m.val_loss, m.val_acc
        );
    }
    out
}

pub fn export_metrics(metrics: &[EpochMetrics], path: &Path) -> Result<()> {
    std::fs::write(path, metrics_csv(metrics)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::Image;
    use crate::dataset::Provenance;
    use crate::model::{build_model, LayerSpec, ModelConfig};
    use crate::nn::Padding;
    use crate::tensor::rng::Rng;

    /// Small config over 32x32 inputs so loop tests stay quick.
    pub(crate) fn small_config(seed: u64) -> ModelConfig {
        let conv = |channels: usize| LayerSpec::Conv2d {
            channels,
            kernel: 3,
            stride: 1,
            padding: Padding::Same,
        };
        let pool = LayerSpec::Maxpool { window: 2, stride: None };
        let mut blocks = vec![vec![conv(4), LayerSpec::Relu, pool.clone()]];
        for channels in [6, 8, 8] {
            blocks.push(vec![
                LayerSpec::SeparableConv2d {
                    channels,
                    kernel: 3,
                    stride: 1,
                    padding: Padding::Same,
                },
                LayerSpec::Relu,
                LayerSpec::Batchnorm,
                pool.clone(),
            ]);
        }
        blocks.push(vec![conv(8), LayerSpec::Relu, pool.clone()]);
        ModelConfig {
            input_height: 32,
            input_width: 32,
            blocks,
            dense: vec![16, 12, 8, 4],
            seed,
            learning_rate: 0.005,
            ..ModelConfig::default()
        }
    }

    /// Noise images with class-dependent brightness, linearly separable.
    fn banded_samples(n_per_class: usize, seed: u64) -> Vec<ImageSample> {
        let mut rng = Rng::new(seed);
        let mut out = Vec::new();
        for label in 0..4 {
            for i in 0..n_per_class {
                let base = 40.0 + 55.0 * label as f32;
                let mut px = Vec::with_capacity(32 * 32);
                for _ in 0..32 * 32 {
                    px.push((base + 10.0 * rng.normal() as f32).clamp(0.0, 255.0));
                }
                out.push(ImageSample {
                    image: Image::new(Tensor::from_vec(&[32, 32], px).unwrap()).unwrap(),
                    label,
                    provenance: Provenance::Original,
                    source_path: format!("mem://band/{label}/{i}"),
                });
            }
        }
        out
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let config = small_config(3);
        let mut state = build_model(&config).unwrap();
        let before = state.network.clone();
        let samples = banded_samples(2, 1);
        let metrics = train(&mut state, &samples, &samples, 0, 4).unwrap();
        assert!(metrics.is_empty());
        assert_eq!(state.network, before);
        assert_eq!(state.epoch, 0);
        assert!(state.best.is_none());
    }

    #[test]
    fn training_reduces_loss_on_a_separable_task() {
        let config = small_config(5);
        let mut state = build_model(&config).unwrap();
        let samples = banded_samples(8, 2);
        let metrics = train(&mut state, &samples, &samples, 10, 8).unwrap();
        assert_eq!(metrics.len(), 10);
        assert!(
            metrics.last().unwrap().train_loss < metrics[0].train_loss,
            "{metrics:?}"
        );
        assert!(metrics.last().unwrap().train_acc > 0.5, "{metrics:?}");
        assert_eq!(state.epoch, 10);
        let best = state.best.as_ref().unwrap();
        for m in &metrics {
            assert!(best.val_accuracy >= m.val_acc, "best snapshot dominates every epoch");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let samples = banded_samples(4, 7);
        let run = || {
            let config = small_config(9);
            let mut state = build_model(&config).unwrap();
            let metrics = train(&mut state, &samples, &samples, 2, 4).unwrap();
            (metrics_csv(&metrics), state.network)
        };
        let (csv_a, net_a) = run();
        let (csv_b, net_b) = run();
        assert_eq!(csv_a, csv_b);
        assert_eq!(net_a, net_b);
    }

    #[test]
    fn untrained_model_scores_chance_level_on_balanced_data() {
        let config = small_config(13);
        let mut state = build_model(&config).unwrap();
        let samples = banded_samples(100, 3);
        let report = evaluate(&mut state.network, &samples, 32).unwrap();
        // Binomial 4-sigma band around 0.25 for n=400.
        let sigma = (0.25 * 0.75 / 400.0f64).sqrt();
        assert!(
            (report.accuracy - 0.25).abs() <= 4.0 * sigma,
            "accuracy {} outside chance band",
            report.accuracy
        );
    }

    #[test]
    fn confusion_matrix_partitions_the_samples() {
        let config = small_config(15);
        let mut state = build_model(&config).unwrap();
        let samples = banded_samples(5, 4);
        let report = evaluate(&mut state.network, &samples, 8).unwrap();
        let total: usize = report.confusion.iter().flatten().sum();
        assert_eq!(total, samples.len());
        let diagonal: usize = (0..4).map(|i| report.confusion[i][i]).sum();
        assert_eq!(diagonal as f64 / samples.len() as f64, report.accuracy);
    }

    #[test]
    fn perfect_predictions_give_diagonal_confusion() {
        // Train to saturation on an easy task, then check the diagonal.
        let config = small_config(17);
        let mut state = build_model(&config).unwrap();
        let samples = banded_samples(6, 9);
        train(&mut state, &samples, &samples, 12, 8).unwrap();
        let report = evaluate(&mut state.network, &samples, 8).unwrap();
        if report.accuracy == 1.0 {
            for (t, row) in report.confusion.iter().enumerate() {
                for (p, &count) in row.iter().enumerate() {
                    assert_eq!(count, if t == p { 6 } else { 0 });
                }
            }
        } else {
            // Accuracy short of 1.0 still must match the diagonal mass.
            let diagonal: usize = (0..4).map(|i| report.confusion[i][i]).sum();
            assert_eq!(diagonal, (report.accuracy * samples.len() as f64).round() as usize);
        }
    }

    #[test]
    fn predict_rows_sum_to_one() {
        let config = small_config(19);
        let mut state = build_model(&config).unwrap();
        let samples = banded_samples(3, 5);
        let batches = to_batches(&samples, 12, None).unwrap();
        let probs = predict_probs(&mut state.network, &batches[0].images).unwrap();
        assert_eq!(probs.shape(), &[12, 4]);
        for row in 0..12 {
            let sum: f32 = (0..4).map(|k| probs.at(&[row, k])).sum();
            assert!((sum - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn metrics_csv_format() {
        let metrics = vec![
            EpochMetrics { epoch: 1, train_loss: 1.25, train_acc: 0.5, val_loss: 1.5, val_acc: 0.25 },
            EpochMetrics { epoch: 2, train_loss: 0.75, train_acc: 0.625, val_loss: 1.0, val_acc: 0.5 },
        ];
        let csv = metrics_csv(&metrics);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,train_acc,val_loss,val_acc");
        assert_eq!(lines[1], "1,1.250000,0.500000,1.500000,0.250000");
        assert_eq!(lines[2], "2,0.750000,0.625000,1.000000,0.500000");
        assert_eq!(metrics_csv(&[]), "epoch,train_loss,train_acc,val_loss,val_acc\n");
    }

    #[test]
    fn csv_values_round_trip_within_printed_precision() {
        let metrics = vec![EpochMetrics {
            epoch: 1,
            train_loss: 1.234_567_89,
            train_acc: 0.333_333_33,
            val_loss: 0.987_654_32,
            val_acc: 0.666_666_67,
        }];
        let csv = metrics_csv(&metrics);
        let row: Vec<f64> =
            csv.lines().nth(1).unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();
        assert!((row[0] - 1.234_567_89).abs() < 5e-7);
        assert!((row[1] - 0.333_333_33).abs() < 5e-7);
        assert!((row[2] - 0.987_654_32).abs() < 5e-7);
        assert!((row[3] - 0.666_666_67).abs() < 5e-7);
    }
}
