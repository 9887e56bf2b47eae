// Tile a synthetic slide, segment each tile, grade flagged tiles with a
// stacked ensemble and write the decision report.

use std::collections::BTreeMap;

use slideqc::config::{Architecture, RunConfig};
use slideqc::pipeline::{emit_report, run_pipeline, ArtifactSegmenter, PipelineConfig, Policy};
use slideqc::segmentation::{train_segmenter, ResUnetOptions, SegModel};
use slideqc::severity::{Backbone, GridResult, GridSettings};
use slideqc::stacking::{build_severity_stack, MetaLearnerKind, MetaProtocol, StackBundle, StackedModel};
use slideqc::{synth, ArtifactKind, LossKind, OptimizerKind};

pub fn run() -> slideqc::Result<()> {
    let seg_cfg = RunConfig {
        epochs: 20,
        batch_size: 4,
        learning_rate: 1e-2,
        optimizer: OptimizerKind::Rmsprop,
        model: Architecture::UnetBaseline,
        width_scale: 0.125,
        ..RunConfig::default()
    };
    let blobs = synth::blob_dataset(8, 32, 4);
    let seg = SegModel::build(seg_cfg.model, (32, 32), seg_cfg.width_scale, 0, ResUnetOptions::default())?;
    let (seg, _) = train_segmenter(seg, &blobs, &blobs, &seg_cfg)?;

    let ranked: Vec<GridResult> = [Backbone::Vgg16, Backbone::MobileNetV2]
        .into_iter()
        .map(|backbone| GridResult {
            backbone,
            optimizer: OptimizerKind::Adam,
            loss: LossKind::CategoricalCrossEntropy,
            learning_rate: 1e-2,
            val_loss: 0.0,
            test_accuracy: 0.0,
            roc_score: 0.0,
            checkpoint: None,
        })
        .collect();
    let settings = GridSettings { epochs: 8, learning_rate: 1e-2, seed: 1, ..GridSettings::default() };
    let stack = build_severity_stack(
        &ranked,
        &synth::severity_dataset(10, 32, 5),
        &synth::severity_dataset(4, 32, 6),
        &settings,
        MetaProtocol::OutOfFold { folds: 3 },
    )?;
    let meta = StackedModel::fit(MetaLearnerKind::LogisticRegression, &stack.train_features, stack.base_names(), 1)?;
    let grader = StackBundle::new(stack.bases, meta)?;

    let (slide, _) = synth::synthetic_slide(256, 256, 5, 9);
    let models: BTreeMap<ArtifactKind, &dyn ArtifactSegmenter> = BTreeMap::from([(ArtifactKind::TissueFold, &seg as &dyn ArtifactSegmenter)]);
    let config = PipelineConfig {
        tile_side: 128,
        stride: 128,
        kinds: vec![ArtifactKind::TissueFold],
        policy: Policy::default(),
    };
    let report = run_pipeline(&slide, "demo", &models, &grader, &config)?;
    for v in &report.verdicts {
        let grade = v.severity.map_or("-", |s| s.name());
        println!("{} artifact {:.3} severity {grade} -> {}", v.tile_id, v.artifact_fraction, v.decision);
    }
    let out = std::env::temp_dir().join("slideqc-triage-demo");
    let files = emit_report(&report, &out)?;
    println!("verdicts in {}", files.verdicts.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> slideqc::Result<()> {
    run()
}
