use slideqc::config::LossKind;
use slideqc::severity::{
    read_grid_csv, run_grid, select_base_models, Backbone, BackboneSpec, GridSettings, GridSpec,
};
use slideqc::synth::severity_dataset;
use slideqc_nn::OptimizerKind;

fn desk_settings() -> GridSettings {
    GridSettings { learning_rate: 1e-2, seed: 5, ..GridSettings::default() }
}

#[test]
fn desk_grid_separates_synthetic_classes() {
    let train = severity_dataset(30, 64, 1);
    let test = severity_dataset(15, 64, 2);
    let grid = GridSpec {
        backbones: vec![BackboneSpec::desk(Backbone::Vgg16), BackboneSpec::desk(Backbone::MobileNet)],
        optimizers: vec![OptimizerKind::Adam],
        losses: vec![LossKind::CategoricalCrossEntropy],
    };
    let outcome = run_grid(&train, None, &test, &grid, &desk_settings()).unwrap();
    assert!(outcome.failures.is_empty(), "{:?}", outcome.failures);
    assert_eq!(outcome.results.len(), 2);
    for r in &outcome.results {
        assert!(r.test_accuracy > 0.9, "{} {}", r.backbone, r.test_accuracy);
        assert!((0.0..=1.0).contains(&r.roc_score));
    }
}

#[test]
fn grid_resumes_from_results_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("grid.csv");
    let train = severity_dataset(6, 32, 3);
    let test = severity_dataset(3, 32, 4);
    let grid = GridSpec {
        backbones: vec![BackboneSpec::desk(Backbone::Xception)],
        optimizers: vec![OptimizerKind::Adamax, OptimizerKind::Rmsprop],
        losses: vec![LossKind::CategoricalCrossEntropy, LossKind::KlDivergence],
    };
    let settings = GridSettings {
        epochs: 2,
        results_csv: Some(csv.clone()),
        checkpoint_dir: Some(dir.path().join("ckpt")),
        ..desk_settings()
    };
    let first = run_grid(&train, None, &test, &grid, &settings).unwrap();
    assert_eq!(first.results.len(), 4);
    let keys: std::collections::BTreeSet<_> = first.results.iter().map(|r| r.key()).collect();
    assert_eq!(keys.len(), 4);
    let saved = read_grid_csv(&csv).unwrap();
    assert_eq!(saved.len(), 4);
    for r in &saved {
        assert!(dir.path().join("ckpt").join(r.checkpoint.as_ref().unwrap()).exists());
    }

    // Rerunning with a bogus training set would change results; resumed rows must not.
    let again = run_grid(&severity_dataset(6, 32, 99), None, &test, &grid, &settings).unwrap();
    let mut a = first.results.clone();
    let mut b = again.results.clone();
    a.sort_by_key(|r| r.key());
    b.sort_by_key(|r| r.key());
    assert_eq!(a, b);
    assert_eq!(select_base_models(&b, 4).unwrap().len(), 4);
}

#[test]
fn pretrained_backbone_failure_is_recorded() {
    let train = severity_dataset(3, 32, 3);
    let test = severity_dataset(2, 32, 4);
    let grid = GridSpec {
        backbones: vec![BackboneSpec::pretrained(Backbone::ResNet50), BackboneSpec::desk(Backbone::ResNet50)],
        optimizers: vec![OptimizerKind::Adam],
        losses: vec![LossKind::KlDivergence],
    };
    let out = run_grid(&train, None, &test, &grid, &GridSettings { epochs: 1, ..desk_settings() }).unwrap();
    assert_eq!(out.failures.len(), 1);
    assert_eq!(out.results.len(), 0, "same key is only attempted once");
}

#[test]
fn full_grid_has_sixty_cells() {
    let g = GridSpec::full(true);
    assert_eq!(g.len(), 60);
    let keys: std::collections::BTreeSet<_> =
        g.combinations().iter().map(|(b, o, l)| (b.name, *o, *l)).collect();
    assert_eq!(keys.len(), 60);
}
