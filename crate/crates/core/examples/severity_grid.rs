// Backbone x optimizer x loss grid for severity grading, then base
// selection from the results.

use slideqc::severity::{run_grid, select_base_models, Backbone, BackboneSpec, GridSettings, GridSpec};
use slideqc::{synth, LossKind, OptimizerKind};

pub fn run() -> slideqc::Result<()> {
    let train = synth::severity_dataset(12, 32, 1);
    let test = synth::severity_dataset(6, 32, 2);
    let grid = GridSpec {
        backbones: [Backbone::Vgg16, Backbone::MobileNet, Backbone::DenseNet121].into_iter().map(BackboneSpec::desk).collect(),
        optimizers: vec![OptimizerKind::Adam, OptimizerKind::Rmsprop],
        losses: vec![LossKind::CategoricalCrossEntropy],
    };
    let settings = GridSettings { epochs: 8, learning_rate: 1e-2, seed: 3, ..GridSettings::default() };
    let outcome = run_grid(&train, None, &test, &grid, &settings)?;
    for r in &outcome.results {
        println!("{:<12} {:<8} accuracy {:.3} roc {:.3} val loss {:.4}", r.backbone, r.optimizer, r.test_accuracy, r.roc_score, r.val_loss);
    }
    for r in select_base_models(&outcome.results, 3)? {
        println!("selected {}", r.key());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> slideqc::Result<()> {
    run()
}
