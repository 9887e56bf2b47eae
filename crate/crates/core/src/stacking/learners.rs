//! The ten interchangeable meta learners.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Gini, Newton, SquaredError, Tree, TreeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaLearnerKind {
    LogisticRegression,
    Knn,
    Svm,
    DecisionTree,
    RandomForest,
    Adaboost,
    XgbClassifier,
    GbRegressor,
    GbClassifier,
    GaussianNb,
}

impl MetaLearnerKind {
    pub const ALL: [MetaLearnerKind; 10] = [
        MetaLearnerKind::LogisticRegression,
        MetaLearnerKind::Knn,
        MetaLearnerKind::Svm,
        MetaLearnerKind::DecisionTree,
        MetaLearnerKind::RandomForest,
        MetaLearnerKind::Adaboost,
        MetaLearnerKind::XgbClassifier,
        MetaLearnerKind::GbRegressor,
        MetaLearnerKind::GbClassifier,
        MetaLearnerKind::GaussianNb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetaLearnerKind::LogisticRegression => "logistic_regression",
            MetaLearnerKind::Knn => "knn",
            MetaLearnerKind::Svm => "svm",
            MetaLearnerKind::DecisionTree => "decision_tree",
            MetaLearnerKind::RandomForest => "random_forest",
            MetaLearnerKind::Adaboost => "adaboost",
            MetaLearnerKind::XgbClassifier => "xgb_classifier",
            MetaLearnerKind::GbRegressor => "gb_regressor",
            MetaLearnerKind::GbClassifier => "gb_classifier",
            MetaLearnerKind::GaussianNb => "gaussian_nb",
        }
    }
}

impl fmt::Display for MetaLearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetaLearnerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown meta learner `{s}`"))
    }
}

/// Fixed hyperparameters.
pub const KNN_NEIGHBOURS: usize = 5;
pub const FOREST_TREES: usize = 100;
pub const BOOST_ROUNDS: usize = 100;
pub const BOOST_DEPTH: usize = 3;
pub const XGB_ETA: f64 = 0.3;
pub const XGB_LAMBDA: f64 = 1.0;
pub const GB_LEARNING_RATE: f64 = 0.1;
pub const REGULARIZATION_C: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub support: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetaModel {
    LogisticRegression { weights: Vec<Vec<f64>>, bias: Vec<f64> },
    Knn { points: Vec<Vec<f64>>, labels: Vec<usize>, k: usize, classes: usize },
    Svm { machines: Vec<BinarySvm>, gamma: f64 },
    DecisionTree { tree: Tree },
    RandomForest { trees: Vec<Tree> },
    Adaboost { trees: Vec<Tree>, alphas: Vec<f64>, classes: usize },
    XgbClassifier { rounds: Vec<Vec<Tree>>, eta: f64 },
    GbRegressor { init: Vec<f64>, rounds: Vec<Vec<Tree>>, learning_rate: f64 },
    GbClassifier { init: Vec<f64>, rounds: Vec<Vec<Tree>>, learning_rate: f64 },
    GaussianNb { means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>, log_prior: Vec<f64> },
}

impl MetaModel {
    pub fn kind(&self) -> MetaLearnerKind {
        match self {
            MetaModel::LogisticRegression { .. } => MetaLearnerKind::LogisticRegression,
            MetaModel::Knn { .. } => MetaLearnerKind::Knn,
            MetaModel::Svm { .. } => MetaLearnerKind::Svm,
            MetaModel::DecisionTree { .. } => MetaLearnerKind::DecisionTree,
            MetaModel::RandomForest { .. } => MetaLearnerKind::RandomForest,
            MetaModel::Adaboost { .. } => MetaLearnerKind::Adaboost,
            MetaModel::XgbClassifier { .. } => MetaLearnerKind::XgbClassifier,
            MetaModel::GbRegressor { .. } => MetaLearnerKind::GbRegressor,
            MetaModel::GbClassifier { .. } => MetaLearnerKind::GbClassifier,
            MetaModel::GaussianNb { .. } => MetaLearnerKind::GaussianNb,
        }
    }

    /// Per-class scores, larger is more likely. Probabilities for the
    /// probabilistic learners, votes or decision values for the rest.
    pub fn scores(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match self {
            MetaModel::LogisticRegression { weights, bias } => softmax_rows(linear(x, weights, bias)),
            MetaModel::Knn { points, labels, k, classes } => {
                let mut out = Array2::zeros((x.nrows(), *classes));
                for (r, row) in x.rows().into_iter().enumerate() {
                    let mut d: Vec<(f64, usize)> =
                        points.iter().enumerate().map(|(i, p)| (sq_dist(row.as_slice().unwrap_or(&row.to_vec()), p), i)).collect();
                    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    let kk = (*k).min(d.len());
                    for &(_, i) in &d[..kk] {
                        out[[r, labels[i]]] += 1.0 / kk as f64;
                    }
                }
                out
            }
            MetaModel::Svm { machines, gamma } => {
                let mut out = Array2::zeros((x.nrows(), machines.len()));
                for (r, row) in x.rows().into_iter().enumerate() {
                    let row = row.to_vec();
                    for (c, m) in machines.iter().enumerate() {
                        out[[r, c]] = m
                            .support
                            .iter()
                            .zip(&m.coef)
                            .map(|(s, a)| a * (-gamma * sq_dist(&row, s)).exp())
                            .sum::<f64>()
                            - m.rho;
                    }
                }
                out
            }
            MetaModel::DecisionTree { tree } => leaf_rows(tree, x),
            MetaModel::RandomForest { trees } => {
                let mut acc = leaf_rows(&trees[0], x);
                for t in &trees[1..] {
                    acc += &leaf_rows(t, x);
                }
                acc / trees.len() as f64
            }
            MetaModel::Adaboost { trees, alphas, classes } => {
                let mut out = Array2::zeros((x.nrows(), *classes));
                for (t, a) in trees.iter().zip(alphas) {
                    for (r, row) in x.rows().into_iter().enumerate() {
                        out[[r, argmax(t.leaf_value(&row.to_vec()))]] += a;
                    }
                }
                let total: f64 = alphas.iter().sum();
                if total > 0.0 {
                    out /= total;
                }
                out
            }
            MetaModel::XgbClassifier { rounds, eta } => {
                let classes = rounds.first().map_or(0, Vec::len);
                let mut f = Array2::zeros((x.nrows(), classes));
                add_boosted(&mut f, rounds, *eta, x);
                softmax_rows(f)
            }
            MetaModel::GbClassifier { init, rounds, learning_rate } => {
                let mut f = broadcast_init(init, x.nrows());
                add_boosted(&mut f, rounds, *learning_rate, x);
                softmax_rows(f)
            }
            MetaModel::GbRegressor { init, rounds, learning_rate } => {
                let mut f = broadcast_init(init, x.nrows());
                add_boosted(&mut f, rounds, *learning_rate, x);
                f
            }
            MetaModel::GaussianNb { means, variances, log_prior } => {
                let jll = Array2::from_shape_fn((x.nrows(), means.len()), |(r, c)| {
                    log_prior[c]
                        - 0.5
                            * x.row(r)
                                .iter()
                                .zip(means[c].iter().zip(&variances[c]))
                                .map(|(v, (m, s))| (2.0 * std::f64::consts::PI * s).ln() + (v - m).powi(2) / s)
                                .sum::<f64>()
                });
                softmax_rows(jll)
            }
        }
    }

    /// Arg-max of [`MetaModel::scores`]; the lowest class index wins ties.
    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        self.scores(x).rows().into_iter().map(|r| argmax(&r.to_vec())).collect()
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn linear(x: ArrayView2<f64>, w: &[Vec<f64>], b: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((x.nrows(), b.len()), |(r, c)| {
        b[c] + x.row(r).iter().zip(&w[c]).map(|(v, wv)| v * wv).sum::<f64>()
    })
}

fn softmax_rows(mut z: Array2<f64>) -> Array2<f64> {
    for mut row in z.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    z
}

fn leaf_rows(tree: &Tree, x: ArrayView2<f64>) -> Array2<f64> {
    super::tree::predict_rows(tree, x)
}

fn broadcast_init(init: &[f64], n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, init.len()), |(_, c)| init[c])
}

fn add_boosted(f: &mut Array2<f64>, rounds: &[Vec<Tree>], rate: f64, x: ArrayView2<f64>) {
    for (r, row) in x.rows().into_iter().enumerate() {
        let row = row.to_vec();
        for round in rounds {
            for (c, t) in round.iter().enumerate() {
                f[[r, c]] += rate * t.leaf_value(&row)[0];
            }
        }
    }
}

fn one_hot(y: &[usize], classes: usize) -> Array2<f64> {
    Array2::from_shape_fn((y.len(), classes), |(i, c)| f64::from(u8::from(y[i] == c)))
}

/// Trains a meta learner on rows `x` with class labels `y` in `0..classes`.
pub fn fit_meta_learner(kind: MetaLearnerKind, x: ArrayView2<f64>, y: &[usize], classes: usize, seed: u64) -> Result<MetaModel> {
    if x.nrows() != y.len() {
        return Err(Error::SizeMismatch(format!("{} rows, {} labels", x.nrows(), y.len())));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
        return Err(Error::InvalidArgument(format!("label {bad} outside {classes} classes")));
    }
    let mut present = vec![false; classes];
    for &c in y {
        present[c] = true;
    }
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::InvalidArgument("meta learner needs at least two classes in its training labels".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite meta features".into()));
    }
    Ok(match kind {
        MetaLearnerKind::LogisticRegression => fit_logistic(x, y, classes),
        MetaLearnerKind::Knn => MetaModel::Knn {
            points: x.rows().into_iter().map(|r| r.to_vec()).collect(),
            labels: y.to_vec(),
            k: KNN_NEIGHBOURS,
            classes,
        },
        MetaLearnerKind::Svm => fit_svm(x, y, classes),
        MetaLearnerKind::DecisionTree => {
            let w = vec![1.0; y.len()];
            let tree = grow(x, (0..y.len()).collect(), &Gini { labels: y, weights: &w, classes }, TreeParams::default(), None);
            MetaModel::DecisionTree { tree }
        }
        MetaLearnerKind::RandomForest => fit_forest(x, y, classes, seed),
        MetaLearnerKind::Adaboost => fit_adaboost(x, y, classes),
        MetaLearnerKind::XgbClassifier => fit_xgb(x, y, classes),
        MetaLearnerKind::GbClassifier => fit_gb_classifier(x, y, classes),
        MetaLearnerKind::GbRegressor => fit_gb_regressor(x, y, classes),
        MetaLearnerKind::GaussianNb => fit_gaussian_nb(x, y, classes),
    })
}

/// Multinomial logistic regression minimising `C * sum(CE) + |W|^2 / 2`
/// (intercepts unpenalised) by damped Newton steps.
fn fit_logistic(x: ArrayView2<f64>, y: &[usize], classes: usize) -> MetaModel {
    let (n, d) = x.dim();
    let width = d + 1;
    let dim = classes * width;
    let t = one_hot(y, classes);
    let aug = |i: usize, j: usize| if j < d { x[[i, j]] } else { 1.0 };
    let unpack = |theta: &Array1<f64>| {
        let w: Vec<Vec<f64>> = (0..classes).map(|k| (0..d).map(|j| theta[k * width + j]).collect()).collect();
        let b: Vec<f64> = (0..classes).map(|k| theta[k * width + d]).collect();
        (w, b)
    };
    let objective = |theta: &Array1<f64>| -> (f64, Array2<f64>) {
        let (w, b) = unpack(theta);
        let p = softmax_rows(linear(x, &w, &b));
        let ce: f64 = (0..n).map(|i| -p[[i, y[i]]].max(1e-300).ln()).sum();
        let reg: f64 = w.iter().flatten().map(|v| v * v).sum::<f64>() / 2.0;
        (REGULARIZATION_C * ce + reg, p)
    };
    let mut theta = Array1::<f64>::zeros(dim);
    let (mut f, mut p) = objective(&theta);
    for _ in 0..100 {
        let mut grad = Array1::<f64>::zeros(dim);
        let mut hess = Array2::<f64>::zeros((dim, dim));
        for i in 0..n {
            for k in 0..classes {
                let r = REGULARIZATION_C * (p[[i, k]] - t[[i, k]]);
                for j in 0..width {
                    grad[k * width + j] += r * aug(i, j);
                }
                for l in 0..classes {
                    let c = REGULARIZATION_C * p[[i, k]] * (f64::from(u8::from(k == l)) - p[[i, l]]);
                    if c == 0.0 {
                        continue;
                    }
                    for j in 0..width {
                        let cj = c * aug(i, j);
                        for m in 0..width {
                            hess[[k * width + j, l * width + m]] += cj * aug(i, m);
                        }
                    }
                }
            }
        }
        for k in 0..classes {
            for j in 0..width {
                let at = k * width + j;
                if j < d {
                    grad[at] += theta[at];
                    hess[[at, at]] += 1.0;
                } else {
                    // Softmax intercepts are only defined up to a shared shift.
                    hess[[at, at]] += 1e-8;
                }
            }
        }
        let gnorm = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if gnorm < 1e-9 {
            break;
        }
        let step = solve(hess, grad.clone());
        let slope: f64 = -grad.dot(&step);
        let mut s = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand = &theta - &(&step * s);
            let (fc, pc) = objective(&cand);
            if fc <= f + 1e-4 * s * slope {
                theta = cand;
                f = fc;
                p = pc;
                moved = true;
                break;
            }
            s *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let (weights, bias) = unpack(&theta);
    MetaModel::LogisticRegression { weights, bias }
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs())).unwrap_or(col);
        if a[[piv, col]].abs() < 1e-300 {
            continue;
        }
        if piv != col {
            for k in 0..n {
                a.swap([col, k], [piv, k]);
            }
            b.swap(col, piv);
        }
        for r in col + 1..n {
            let f = a[[r, col]] / a[[col, col]];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[[r, k]] -= f * a[[col, k]];
            }
            b[r] -= f * b[col];
        }
    }
    let mut out = Array1::zeros(n);
    for r in (0..n).rev() {
        if a[[r, r]].abs() < 1e-300 {
            continue;
        }
        let s: f64 = (r + 1..n).map(|k| a[[r, k]] * out[k]).sum();
        out[r] = (b[r] - s) / a[[r, r]];
    }
    out
}

/// `1 / (features * var(X))`, or 1 for constant input.
pub fn gamma_scale(x: ArrayView2<f64>) -> f64 {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (x.ncols() as f64 * var)
    } else {
        1.0
    }
}

fn fit_svm(x: ArrayView2<f64>, y: &[usize], classes: usize) -> MetaModel {
    let n = y.len();
    let gamma = gamma_scale(x);
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    let kernel = Array2::from_shape_fn((n, n), |(i, j)| (-gamma * sq_dist(&rows[i], &rows[j])).exp());
    let machines = (0..classes)
        .map(|c| {
            let signs: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            let (alpha, rho) = smo(&kernel, &signs, REGULARIZATION_C);
            let mut support = Vec::new();
            let mut coef = Vec::new();
            for i in 0..n {
                if alpha[i] > 0.0 {
                    support.push(rows[i].clone());
                    coef.push(alpha[i] * signs[i]);
                }
            }
            BinarySvm { support, coef, rho }
        })
        .collect();
    MetaModel::Svm { machines, gamma }
}

/// Dual C-SVM by maximal-violating-pair SMO. Returns `(alpha, rho)`.
fn smo(k: &Array2<f64>, y: &[f64], c: f64) -> (Vec<f64>, f64) {
    let n = y.len();
    let eps = 1e-3;
    let tau = 1e-12;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * k[[i, j]];
    let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);
    for _ in 0..(100 * n).max(10_000) {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < eps {
            break;
        }
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(tau);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(tau);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }
    let mut free = 0usize;
    let mut sum = 0.0;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
    (alpha, rho)
}

fn fit_forest(x: ArrayView2<f64>, y: &[usize], classes: usize, seed: u64) -> MetaModel {
    let n = y.len();
    let mut rng = crate::data::seeded(seed);
    let max_features = ((x.ncols() as f64).sqrt().floor() as usize).max(1);
    let w = vec![1.0; n];
    let params = TreeParams { max_features: Some(max_features), ..Default::default() };
    let trees = (0..FOREST_TREES)
        .map(|_| {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            grow(x, idx, &Gini { labels: y, weights: &w, classes }, params, Some(&mut rng))
        })
        .collect();
    MetaModel::RandomForest { trees }
}

/// Multiclass AdaBoost (SAMME) over depth-limited trees.
fn fit_adaboost(x: ArrayView2<f64>, y: &[usize], classes: usize) -> MetaModel {
    let n = y.len();
    let mut w = vec![1.0 / n as f64; n];
    let params = TreeParams { max_depth: Some(BOOST_DEPTH), ..Default::default() };
    let mut trees = Vec::new();
    let mut alphas = Vec::new();
    let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    for _ in 0..BOOST_ROUNDS {
        let tree = grow(x, (0..n).collect(), &Gini { labels: y, weights: &w, classes }, params, None);
        let wrong: Vec<bool> = rows.iter().zip(y).map(|(r, &l)| argmax(tree.leaf_value(r)) != l).collect();
        let total: f64 = w.iter().sum();
        let err: f64 = w.iter().zip(&wrong).filter(|(_, b)| **b).map(|(v, _)| v).sum::<f64>() / total;
        if err <= 0.0 {
            trees.push(tree);
            alphas.push(1.0);
            break;
        }
        if err >= 1.0 - 1.0 / classes as f64 {
            if trees.is_empty() {
                trees.push(tree);
                alphas.push(1.0);
            }
            break;
        }
        let alpha = ((1.0 - err) / err).ln() + ((classes - 1) as f64).ln();
        for (v, &b) in w.iter_mut().zip(&wrong) {
            if b {
                *v *= alpha.exp();
            }
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        trees.push(tree);
        alphas.push(alpha);
    }
    MetaModel::Adaboost { trees, alphas, classes }
}

/// Softmax boosting with second-order leaf weights.
fn fit_xgb(x: ArrayView2<f64>, y: &[usize], classes: usize) -> MetaModel {
    let n = y.len();
    let t = one_hot(y, classes);
    let mut f = Array2::<f64>::zeros((n, classes));
    let params = TreeParams { max_depth: Some(BOOST_DEPTH), ..Default::default() };
    let mut rounds = Vec::with_capacity(BOOST_ROUNDS);
    for _ in 0..BOOST_ROUNDS {
        let p = softmax_rows(f.clone());
        let mut round = Vec::with_capacity(classes);
        for c in 0..classes {
            let g: Vec<f64> = (0..n).map(|i| p[[i, c]] - t[[i, c]]).collect();
            let h: Vec<f64> = (0..n).map(|i| (2.0 * p[[i, c]] * (1.0 - p[[i, c]])).max(1e-16)).collect();
            let tree = grow(x, (0..n).collect(), &Newton { grad: &g, hess: &h, lambda: XGB_LAMBDA, min_child_weight: 1.0 }, params, None);
            round.push(tree);
        }
        add_boosted(&mut f, std::slice::from_ref(&round), XGB_ETA, x);
        rounds.push(round);
    }
    MetaModel::XgbClassifier { rounds, eta: XGB_ETA }
}

fn fit_gb_classifier(x: ArrayView2<f64>, y: &[usize], classes: usize) -> MetaModel {
    let n = y.len();
    let t = one_hot(y, classes);
    let prior = t.sum_axis(Axis(0)) / n as f64;
    let init: Vec<f64> = prior.iter().map(|p| p.max(1e-300).ln()).collect();
    let mut f = broadcast_init(&init, n);
    let params = TreeParams { max_depth: Some(BOOST_DEPTH), ..Default::default() };
    let k = classes as f64;
    let mut rounds = Vec::with_capacity(BOOST_ROUNDS);
    for _ in 0..BOOST_ROUNDS {
        let p = softmax_rows(f.clone());
        let mut round = Vec::with_capacity(classes);
        for c in 0..classes {
            let r: Vec<f64> = (0..n).map(|i| t[[i, c]] - p[[i, c]]).collect();
            let leaf = |idx: &[usize]| {
                let num: f64 = idx.iter().map(|&i| r[i]).sum();
                let den: f64 = idx.iter().map(|&i| r[i].abs() * (1.0 - r[i].abs())).sum();
                if den.abs() < 1e-150 {
                    0.0
                } else {
                    (k - 1.0) / k * num / den
                }
            };
            round.push(grow(x, (0..n).collect(), &SquaredError { target: &r, leaf_fn: leaf }, params, None));
        }
        add_boosted(&mut f, std::slice::from_ref(&round), GB_LEARNING_RATE, x);
        rounds.push(round);
    }
    MetaModel::GbClassifier { init, rounds, learning_rate: GB_LEARNING_RATE }
}

/// One squared-error regressor per class on one-hot targets.
fn fit_gb_regressor(x: ArrayView2<f64>, y: &[usize], classes: usize) -> MetaModel {
    let n = y.len();
    let t = one_hot(y, classes);
    let init: Vec<f64> = (t.sum_axis(Axis(0)) / n as f64).to_vec();
    let mut f = broadcast_init(&init, n);
    let params = TreeParams { max_depth: Some(BOOST_DEPTH), ..Default::default() };
    let mut rounds = Vec::with_capacity(BOOST_ROUNDS);
    for _ in 0..BOOST_ROUNDS {
        let mut round = Vec::with_capacity(classes);
        for c in 0..classes {
            let r: Vec<f64> = (0..n).map(|i| t[[i, c]] - f[[i, c]]).collect();
            let leaf = |idx: &[usize]| idx.iter().map(|&i| r[i]).sum::<f64>() / idx.len().max(1) as f64;
            round.push(grow(x, (0..n).collect(), &SquaredError { target: &r, leaf_fn: leaf }, params, None));
        }
        add_boosted(&mut f, std::slice::from_ref(&round), GB_LEARNING_RATE, x);
        rounds.push(round);
    }
    MetaModel::GbRegressor { init, rounds, learning_rate: GB_LEARNING_RATE }
}

fn fit_gaussian_nb(x: ArrayView2<f64>, y: &[usize], classes: usize) -> MetaModel {
    let (n, d) = x.dim();
    let col_var = x.var_axis(Axis(0), 0.0);
    let smoothing = 1e-9 * col_var.fold(0.0, |a: f64, &b| a.max(b)).max(f64::MIN_POSITIVE);
    let mut means = vec![vec![0.0; d]; classes];
    let mut variances = vec![vec![smoothing; d]; classes];
    let mut log_prior = vec![f64::NEG_INFINITY; classes];
    for c in 0..classes {
        let idx: Vec<usize> = (0..n).filter(|&i| y[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        let sub = x.select(Axis(0), &idx);
        means[c] = sub.mean_axis(Axis(0)).map_or_else(|| vec![0.0; d], |m| m.to_vec());
        variances[c] = sub.var_axis(Axis(0), 0.0).iter().map(|v| v + smoothing).collect();
        log_prior[c] = (idx.len() as f64 / n as f64).ln();
    }
    MetaModel::GaussianNb { means, variances, log_prior }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand_distr::{Distribution, Normal};

    fn one_hot_features(labels: &[usize], blocks: usize) -> Array2<f64> {
        Array2::from_shape_fn((labels.len(), 3 * blocks), |(i, j)| f64::from(u8::from(j % 3 == labels[i])))
    }

    #[test]
    fn perfect_features_give_perfect_accuracy_for_every_kind() {
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let x = one_hot_features(&labels, 3);
        for kind in MetaLearnerKind::ALL {
            let m = fit_meta_learner(kind, x.view(), &labels, 3, 1).unwrap();
            assert_eq!(accuracy(&m.predict(x.view()), &labels), 1.0, "{kind}");
        }
    }

    #[test]
    fn logistic_separates_four_point_fixture() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [3.0, 3.0], [3.0, 4.0]];
        let y = [0, 0, 1, 1];
        let m = fit_meta_learner(MetaLearnerKind::LogisticRegression, x.view(), &y, 2, 0).unwrap();
        assert_eq!(m.predict(x.view()), y.to_vec());
        let p = m.scores(array![[1.5, 2.0]].view());
        assert!((p.row(0).sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_gradient_vanishes_at_solution() {
        // Stationarity of C * sum(CE) + |W|^2 / 2 checked directly.
        let x = array![[0.2, 0.9], [0.5, 0.1], [0.9, 0.4], [0.3, 0.3], [0.8, 0.8], [0.1, 0.6]];
        let y = [0, 1, 2, 0, 2, 1];
        let MetaModel::LogisticRegression { weights, bias } =
            fit_meta_learner(MetaLearnerKind::LogisticRegression, x.view(), &y, 3, 0).unwrap()
        else {
            unreachable!()
        };
        let p = softmax_rows(linear(x.view(), &weights, &bias));
        for k in 0..3 {
            for j in 0..2 {
                let g: f64 = (0..6).map(|i| (p[[i, k]] - f64::from(u8::from(y[i] == k))) * x[[i, j]]).sum::<f64>() + weights[k][j];
                assert!(g.abs() < 1e-7, "{g}");
            }
            let gb: f64 = (0..6).map(|i| p[[i, k]] - f64::from(u8::from(y[i] == k))).sum();
            assert!(gb.abs() < 1e-7);
        }
    }

    #[test]
    fn naive_bayes_is_at_chance_on_uninformative_features() {
        let mut rng = crate::data::seeded(9);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let draw = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
            let x = Array2::from_shape_fn((n, 9), |_| normal.sample(rng));
            (x, y)
        };
        let (x, y) = draw(600, &mut rng);
        let (xt, yt) = draw(3000, &mut rng);
        let m = fit_meta_learner(MetaLearnerKind::GaussianNb, x.view(), &y, 3, 0).unwrap();
        let acc = accuracy(&m.predict(xt.view()), &yt);
        assert!((acc - 1.0 / 3.0).abs() < 0.1, "{acc}");
    }

    #[test]
    fn single_class_training_is_rejected() {
        let x = Array2::zeros((4, 3));
        assert!(fit_meta_learner(MetaLearnerKind::Knn, x.view(), &[1, 1, 1, 1], 3, 0).is_err());
    }

    #[test]
    fn svm_gamma_scale_matches_definition() {
        let x = array![[0.0, 1.0], [1.0, 0.0]];
        // mean 0.5, variance 0.25, two features
        assert!((gamma_scale(x.view()) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn svm_dual_satisfies_equality_and_box() {
        let x = array![[0.0, 0.0], [0.2, 0.1], [1.0, 1.0], [0.9, 1.1], [0.5, 0.45]];
        let y = [-1.0, -1.0, 1.0, 1.0, -1.0];
        let g = gamma_scale(x.view());
        let rows: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let k = Array2::from_shape_fn((5, 5), |(i, j)| (-g * sq_dist(&rows[i], &rows[j])).exp());
        let (a, _) = smo(&k, &y, 1.0);
        let eq: f64 = a.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(eq.abs() < 1e-9);
        assert!(a.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn models_round_trip_through_json() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let x = one_hot_features(&labels, 2);
        for kind in MetaLearnerKind::ALL {
            let m = fit_meta_learner(kind, x.view(), &labels, 3, 4).unwrap();
            let back: MetaModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
            assert_eq!(back.scores(x.view()), m.scores(x.view()), "{kind}");
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in MetaLearnerKind::ALL {
            assert_eq!(k.name().parse::<MetaLearnerKind>().unwrap(), k);
        }
    }
}
