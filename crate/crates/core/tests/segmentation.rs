use slideqc::config::{Architecture, LossKind, PlateauConfig, RunConfig};
use slideqc::segmentation::{
    evaluate_segmenter, per_image_iou, train_segmenter, ResUnetOptions, SegModel, StopReason,
};
use slideqc::synth;
use slideqc::OptimizerKind;

fn overfit_config(arch: Architecture) -> RunConfig {
    RunConfig {
        seed: 3,
        batch_size: 8,
        epochs: 200,
        learning_rate: 1e-2,
        optimizer: OptimizerKind::Rmsprop,
        loss: LossKind::DiceCoefLoss,
        plateau: PlateauConfig { factor: 0.5, patience: 10 },
        early_stop_patience: 30,
        model: arch,
        width_scale: 0.125,
    }
}

// the two main architectures get the same treatment in the acceptance suite
fn overfit(arch: Architecture) {
    let side = 32;
    let data = synth::blob_dataset(8, side, 21);
    let cfg = overfit_config(arch);
    let model = SegModel::build(arch, (side, side), cfg.width_scale, cfg.seed, ResUnetOptions::default()).unwrap();
    let (model, history) = train_segmenter(model, &data, &data, &cfg).unwrap();
    let ious = per_image_iou(&model, &data).unwrap();
    let mean = ious.iter().sum::<f64>() / ious.len() as f64;
    assert!(mean >= 0.9, "{arch}: soft IOU {mean}");
    assert!(history.learning_rates().windows(2).all(|w| w[1] <= w[0]));
    let report = evaluate_segmenter(&model, &data, &[0.9, 0.85]).unwrap();
    assert!((report.avg_test_iou - mean).abs() < 1e-12);
}

#[test]
fn unet_baseline_overfits_blobs() {
    overfit(Architecture::UnetBaseline);
}

#[test]
fn stagnant_run_stops_early() {
    // all-black images and empty masks: nothing to learn, validation loss flat
    let side = 16;
    let blank = slideqc::SegPair::new(
        slideqc::RgbImage::zeros((side, side, 3)),
        slideqc::BinaryMask::zeros((side, side)),
    )
    .unwrap();
    let data = vec![blank; 4];
    let cfg = RunConfig {
        epochs: 60,
        batch_size: 4,
        learning_rate: 1e-300,
        optimizer: OptimizerKind::Sgd,
        early_stop_patience: 10,
        model: Architecture::UnetBaseline,
        width_scale: 0.125,
        ..RunConfig::default()
    };
    let model = SegModel::build(cfg.model, (side, side), cfg.width_scale, 0, ResUnetOptions::default()).unwrap();
    let (_, history) = train_segmenter(model, &data, &data, &cfg).unwrap();
    assert_eq!(history.stop_reason, StopReason::EarlyStop);
    assert!(history.records.len() < 60);
}

#[test]
fn crossval_tests_every_fold_once() {
    let data: Vec<_> = synth::blob_dataset(6, 16, 2).into_iter().enumerate().map(|(i, p)| (format!("t{i}"), p)).collect();
    let cfg = RunConfig { epochs: 2, batch_size: 2, model: Architecture::UnetBaseline, width_scale: 0.125, ..RunConfig::default() };
    let folds = slideqc::segmentation::run_crossval(&data, 3, 1, &cfg, &[0.9], &Default::default()).unwrap();
    assert_eq!(folds.len(), 3);
    let tested: Vec<char> = folds.iter().map(|f| f.test_fold).collect();
    assert_eq!(tested, vec!['C', 'A', 'B']);
    assert_eq!(folds[0].train_folds, "AB");
    assert!(folds.iter().all(|f| f.report.per_image_iou.len() == 2));
}

#[test]
fn history_csv_has_one_row_per_epoch() {
    let data = synth::blob_dataset(2, 16, 5);
    let cfg = RunConfig { epochs: 3, batch_size: 2, model: Architecture::UnetBaseline, width_scale: 0.125, ..RunConfig::default() };
    let model = SegModel::build(cfg.model, (16, 16), cfg.width_scale, 0, ResUnetOptions::default()).unwrap();
    let (model, history) = train_segmenter(model, &data, &data, &cfg).unwrap();
    let csv = history.to_csv_string().unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,loss,val_loss,dice,val_dice,iou,val_iou,mean_iou,precision,recall,learning_rate"
    );
    assert_eq!(lines.count(), 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    let back = SegModel::load(&path).unwrap();
    assert_eq!(back.store.fingerprint(), model.store.fingerprint());
}

#[test]
fn divergence_is_reported_with_its_exit_code() {
    let data = synth::blob_dataset(2, 16, 5);
    let cfg = RunConfig {
        epochs: 3,
        batch_size: 2,
        learning_rate: 1e300,
        optimizer: OptimizerKind::Sgd,
        loss: LossKind::BinaryCrossEntropy,
        model: Architecture::UnetBaseline,
        width_scale: 0.125,
        ..RunConfig::default()
    };
    let model = SegModel::build(cfg.model, (16, 16), cfg.width_scale, 0, ResUnetOptions::default()).unwrap();
    let err = train_segmenter(model, &data, &data, &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}
