use ndarray::Array2;
use slideqc::severity::{Backbone, GridResult, GridSettings};
use slideqc::stacking::{
    accuracy, build_severity_stack, fit_meta_learner, make_meta_features, mean_vote_accuracy, run_stacking_comparison,
    stacked_predict, stacked_predict_batch, BaseModel, MetaFeatureMatrix, MetaLearnerKind, MetaProtocol, StackedModel,
};
use slideqc::synth::{noisy_base_probabilities, severity_dataset};
use slideqc::{LossKind, OptimizerKind, Result, RgbImage};

/// Looks up a fixed probability row by the sample id stored in pixel (0, 0).
struct TableBase {
    rows: Array2<f64>,
    salt: u64,
}

impl BaseModel for TableBase {
    fn name(&self) -> String {
        format!("table{}", self.salt)
    }
    fn input_side(&self) -> usize {
        2
    }
    fn num_classes(&self) -> usize {
        self.rows.ncols()
    }
    fn predict_proba(&self, images: &[&RgbImage]) -> Result<Array2<f64>> {
        Ok(self.rows.select(ndarray::Axis(0), &images.iter().map(|i| i[[0, 0, 0]] as usize).collect::<Vec<_>>()))
    }
    fn fingerprint(&self) -> u64 {
        self.salt
    }
}

fn id_images(n: usize) -> Vec<RgbImage> {
    (0..n).map(|i| RgbImage::from_elem((2, 2, 3), i as f64)).collect()
}

fn labels(n: usize) -> Vec<usize> {
    (0..n).map(|i| (i * 7 + i / 3) % 3).collect()
}

fn one_hot(y: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((y.len(), 3), |(i, c)| f64::from(u8::from(y[i] == c)))
}

#[test]
fn feature_layout_and_identity_stacking() {
    let n = 420;
    let y = labels(n);
    let bases: Vec<TableBase> =
        (0..3).map(|s| TableBase { rows: noisy_base_probabilities(&y, 3, 0.8, s), salt: s }).collect();
    let refs: Vec<&dyn BaseModel> = bases.iter().map(|b| b as &dyn BaseModel).collect();
    let imgs = id_images(n);
    let img_refs: Vec<&RgbImage> = imgs.iter().collect();
    let mf = make_meta_features(&refs, &img_refs, y.clone()).unwrap();
    assert_eq!(mf.features.dim(), (420, 9));
    for m in 0..3 {
        assert_eq!(mf.block(m), bases[m].rows.view());
        for r in mf.block(m).rows() {
            assert!((r.sum() - 1.0).abs() < 1e-6);
        }
    }
    let again = make_meta_features(&refs, &img_refs, y.clone()).unwrap();
    assert_eq!(mf.features, again.features);

    let single = make_meta_features(&refs[..1], &img_refs, y.clone()).unwrap();
    assert_eq!(single.features, bases[0].rows);

    let perm: Vec<usize> = (0..n).rev().collect();
    let permuted: Vec<&RgbImage> = perm.iter().map(|&i| &imgs[i]).collect();
    let pm = make_meta_features(&refs, &permuted, Vec::new()).unwrap();
    assert_eq!(pm.features, mf.rows(&perm).features);
    assert!(make_meta_features(&[], &img_refs, Vec::new()).is_err());
}

#[test]
fn stacked_prediction_and_order_guard() {
    let y = labels(90);
    let bases = [
        TableBase { rows: one_hot(&y), salt: 1 },
        TableBase { rows: noisy_base_probabilities(&y, 3, 0.6, 2), salt: 2 },
    ];
    let refs: Vec<&dyn BaseModel> = bases.iter().map(|b| b as &dyn BaseModel).collect();
    let imgs = id_images(90);
    let img_refs: Vec<&RgbImage> = imgs.iter().collect();
    let mf = make_meta_features(&refs, &img_refs, y.clone()).unwrap();
    let before: Vec<u64> = refs.iter().map(|b| b.fingerprint()).collect();
    let model = StackedModel::fit(MetaLearnerKind::LogisticRegression, &mf, vec!["a".into(), "b".into()], 0).unwrap();
    assert_eq!(before, refs.iter().map(|b| b.fingerprint()).collect::<Vec<_>>());

    let batch = stacked_predict_batch(&refs, &model, &img_refs).unwrap();
    for (i, img) in imgs.iter().enumerate().step_by(17) {
        let (c, scores) = stacked_predict(&refs, &model, img).unwrap();
        assert_eq!(c, y[i]);
        assert_eq!((c, scores), batch[i]);
    }
    let swapped = [refs[1], refs[0]];
    assert!(stacked_predict(&swapped, &model, &imgs[0]).is_err());
    let back = StackedModel::from_json(&model.to_json().unwrap()).unwrap();
    assert_eq!(back, model);

    // Identity stacking: one base, logistic meta, predictions follow the base.
    let solo = make_meta_features(&refs[1..], &img_refs, y.clone()).unwrap();
    let meta = StackedModel::fit(MetaLearnerKind::LogisticRegression, &solo, vec!["b".into()], 0).unwrap();
    let base_pred: Vec<usize> = bases[1]
        .rows
        .rows()
        .into_iter()
        .map(|r| r.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0)
        .collect();
    let stacked: Vec<usize> = stacked_predict_batch(&refs[1..], &meta, &img_refs).unwrap().into_iter().map(|p| p.0).collect();
    assert_eq!(stacked, base_pred);
}

#[test]
fn comparison_table_has_combo_rows_and_learner_columns() {
    let y = labels(150);
    let yt = labels(120);
    let blocks = |y: &[usize], off: u64| (0..6).map(|s| noisy_base_probabilities(y, 3, 0.7 + 0.04 * s as f64, s + off)).collect::<Vec<_>>();
    let train = MetaFeatureMatrix::from_blocks(&blocks(&y, 0), y.clone(), 1).unwrap();
    let eval = MetaFeatureMatrix::from_blocks(&blocks(&yt, 100), yt.clone(), 1).unwrap();
    let combos: Vec<usize> = (2..=6).collect();
    let table = run_stacking_comparison(&train, &eval, &MetaLearnerKind::ALL, &combos, 3).unwrap();
    assert_eq!(table.accuracy.len(), 5);
    assert!(table.accuracy.iter().all(|r| r.len() == 10));
    let csv = table.to_csv_string();
    assert!(csv.starts_with("combination,logistic_regression,knn,svm,"));
    assert_eq!(csv.lines().count(), 6);
    assert!(run_stacking_comparison(&train, &eval, &MetaLearnerKind::ALL, &[7], 3).is_err());

    // Top-1 under an arg-max meta is the base's own accuracy.
    let top1 = eval.top(1, 0).unwrap();
    let own = accuracy(
        &top1.features.rows().into_iter().map(|r| r.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0).collect::<Vec<_>>(),
        &yt,
    );
    assert_eq!(mean_vote_accuracy(&top1), own);
}

#[test]
fn perfect_bases_evaluate_perfectly() {
    let y = labels(120);
    let yt = labels(300);
    let train = MetaFeatureMatrix::from_blocks(&[one_hot(&y), one_hot(&y), one_hot(&y)], y.clone(), 0).unwrap();
    let eval = MetaFeatureMatrix::from_blocks(&[one_hot(&yt), one_hot(&yt), one_hot(&yt)], yt.clone(), 0).unwrap();
    for kind in MetaLearnerKind::ALL {
        let m = fit_meta_learner(kind, train.features.view(), &y, 3, 0).unwrap();
        let acc = accuracy(&m.predict(eval.features.view()), &yt);
        let floor = if kind == MetaLearnerKind::GbRegressor { 0.999 } else { 1.0 };
        assert!(acc >= floor, "{kind}: {acc}");
    }
}

#[test]
fn stacked_logistic_beats_best_single_noisy_base() {
    let seed = 2024;
    let y_train = labels(3000);
    let y_eval: Vec<usize> = (0..10_000).map(|i| (i * 5 + i / 7) % 3).collect();
    let train_blocks: Vec<Array2<f64>> = (0..3).map(|b| noisy_base_probabilities(&y_train, 3, 0.8, seed + b)).collect();
    let eval_blocks: Vec<Array2<f64>> = (0..3).map(|b| noisy_base_probabilities(&y_eval, 3, 0.8, seed + 10 + b)).collect();
    let train = MetaFeatureMatrix::from_blocks(&train_blocks, y_train.clone(), 0).unwrap();
    let eval = MetaFeatureMatrix::from_blocks(&eval_blocks, y_eval.clone(), 0).unwrap();
    let best_single = (0..3)
        .map(|b| mean_vote_accuracy(&MetaFeatureMatrix::from_blocks(&eval_blocks[b..=b], y_eval.clone(), 0).unwrap()))
        .fold(0.0, f64::max);
    let m = fit_meta_learner(MetaLearnerKind::LogisticRegression, train.features.view(), &y_train, 3, 0).unwrap();
    let stacked = accuracy(&m.predict(eval.features.view()), &y_eval);
    assert!(stacked >= best_single, "stacked {stacked} vs best base {best_single}");
}

#[test]
fn out_of_fold_stack_over_desk_bases() {
    let train = severity_dataset(10, 32, 41);
    let test = severity_dataset(5, 32, 42);
    let ranked: Vec<GridResult> = [Backbone::Vgg16, Backbone::MobileNet]
        .into_iter()
        .map(|b| GridResult {
            backbone: b,
            optimizer: OptimizerKind::Adam,
            loss: LossKind::CategoricalCrossEntropy,
            learning_rate: 1e-2,
            val_loss: 0.1,
            test_accuracy: 0.9,
            roc_score: 0.9,
            checkpoint: None,
        })
        .collect();
    let settings = GridSettings { learning_rate: 1e-2, epochs: 10, seed: 8, ..GridSettings::default() };
    let stack = build_severity_stack(&ranked, &train, &test, &settings, MetaProtocol::OutOfFold { folds: 5 }).unwrap();
    assert_eq!(stack.train_features.features.dim(), (30, 6));
    assert_eq!(stack.eval_features.features.dim(), (15, 6));
    assert_eq!(stack.train_features.order_fingerprint, stack.eval_features.order_fingerprint);
    let model = StackedModel::fit(MetaLearnerKind::LogisticRegression, &stack.train_features, stack.base_names(), 0).unwrap();
    let imgs: Vec<&RgbImage> = test.iter().map(|(i, _)| i).collect();
    let preds = stacked_predict_batch(&stack.base_refs(), &model, &imgs).unwrap();
    assert_eq!(preds.len(), 15);

    let on_test = build_severity_stack(&ranked, &train, &test, &settings, MetaProtocol::TestSplit).unwrap();
    assert_eq!(on_test.train_features, on_test.eval_features);
}
