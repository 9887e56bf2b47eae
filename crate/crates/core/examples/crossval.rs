// Rotating k-fold cross-validation with a validation slice carved from
// the training folds.

use slideqc::config::{Architecture, RunConfig};
use slideqc::segmentation::{run_crossval, TrainOptions};
use slideqc::{synth, OptimizerKind};

pub fn run() -> slideqc::Result<()> {
    let data: Vec<_> = synth::blob_dataset(12, 16, 3).into_iter().enumerate().map(|(i, p)| (format!("tile{i:02}"), p)).collect();
    let cfg = RunConfig {
        epochs: 5,
        batch_size: 4,
        learning_rate: 1e-2,
        optimizer: OptimizerKind::Rmsprop,
        model: Architecture::UnetBaseline,
        width_scale: 0.125,
        ..RunConfig::default()
    };
    let rounds = run_crossval(&data, 4, 1, &cfg, &[0.9, 0.85], &TrainOptions::default())?;
    for r in &rounds {
        println!(
            "round {} train {} test {}: {} epochs, avg iou {:.4}",
            r.round, r.train_folds, r.test_fold, r.epochs_run, r.report.avg_test_iou
        );
    }
    let mean = rounds.iter().map(|r| r.report.avg_test_iou).sum::<f64>() / rounds.len() as f64;
    println!("mean over folds {mean:.4}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> slideqc::Result<()> {
    run()
}
