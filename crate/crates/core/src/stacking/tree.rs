//! Greedy binary trees shared by the tree-based meta learners.

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: Vec<f64> },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, row: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, at: usize) -> usize {
            match &t.nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }
}

/// Split criterion expressed through additive per-sample statistics.
/// A split's gain is `score(left) + score(right) - score(parent)`.
pub trait Objective {
    type Acc: Clone;
    fn empty(&self) -> Self::Acc;
    fn add(&self, acc: &mut Self::Acc, i: usize);
    fn sub(&self, acc: &mut Self::Acc, i: usize);
    fn score(&self, acc: &Self::Acc) -> f64;
    fn admissible(&self, _left: &Self::Acc, _right: &Self::Acc) -> bool {
        true
    }
    fn leaf(&self, idx: &[usize]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    /// Features drawn per node; all when `None`.
    pub max_features: Option<usize>,
    pub min_gain: f64,
}

pub fn grow<O: Objective>(x: ArrayView2<f64>, idx: Vec<usize>, obj: &O, params: TreeParams, mut rng: Option<&mut ChaCha8Rng>) -> Tree {
    let mut tree = Tree { nodes: Vec::new() };
    let mut stack = vec![(idx, 0usize, usize::MAX, false)];
    // Nodes are pushed depth first; parents patch child slots once known.
    while let Some((samples, depth, parent, is_right)) = stack.pop() {
        let at = tree.nodes.len();
        if parent != usize::MAX {
            if let Node::Split { left, right, .. } = &mut tree.nodes[parent] {
                if is_right {
                    *right = at;
                } else {
                    *left = at;
                }
            }
        }
        let split = if samples.len() < 2 || params.max_depth.is_some_and(|d| depth >= d) {
            None
        } else {
            best_split(x, &samples, obj, params, rng.as_deref_mut())
        };
        match split {
            None => tree.nodes.push(Node::Leaf { value: obj.leaf(&samples) }),
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = samples.iter().partition(|&&i| x[[i, feature]] <= threshold);
                tree.nodes.push(Node::Split { feature, threshold, left: 0, right: 0 });
                stack.push((r, depth + 1, at, true));
                stack.push((l, depth + 1, at, false));
            }
        }
    }
    tree
}

fn best_split<O: Objective>(
    x: ArrayView2<f64>,
    samples: &[usize],
    obj: &O,
    params: TreeParams,
    rng: Option<&mut ChaCha8Rng>,
) -> Option<(usize, f64)> {
    let d = x.ncols();
    let features: Vec<usize> = match (params.max_features, rng) {
        (Some(m), Some(r)) if m < d => {
            let mut f = sample(r, d, m).into_vec();
            f.sort_unstable();
            f
        }
        _ => (0..d).collect(),
    };
    let mut total = obj.empty();
    for &i in samples {
        obj.add(&mut total, i);
    }
    let parent = obj.score(&total);
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = samples.to_vec();
    for f in features {
        order.sort_by(|&a, &b| x[[a, f]].total_cmp(&x[[b, f]]).then(a.cmp(&b)));
        let mut left = obj.empty();
        let mut right = total.clone();
        for w in 0..order.len() - 1 {
            let i = order[w];
            obj.add(&mut left, i);
            obj.sub(&mut right, i);
            let (a, b) = (x[[i, f]], x[[order[w + 1], f]]);
            if a == b || !obj.admissible(&left, &right) {
                continue;
            }
            let gain = obj.score(&left) + obj.score(&right) - parent;
            if gain > params.min_gain && best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                best = Some((gain, f, a + (b - a) / 2.0));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Weighted Gini impurity; leaves hold class distributions.
pub struct Gini<'a> {
    pub labels: &'a [usize],
    pub weights: &'a [f64],
    pub classes: usize,
}

impl Objective for Gini<'_> {
    type Acc = (Vec<f64>, f64);
    fn empty(&self) -> Self::Acc {
        (vec![0.0; self.classes], 0.0)
    }
    fn add(&self, acc: &mut Self::Acc, i: usize) {
        acc.0[self.labels[i]] += self.weights[i];
        acc.1 += self.weights[i];
    }
    fn sub(&self, acc: &mut Self::Acc, i: usize) {
        acc.0[self.labels[i]] -= self.weights[i];
        acc.1 -= self.weights[i];
    }
    fn score(&self, acc: &Self::Acc) -> f64 {
        if acc.1 <= 0.0 {
            return 0.0;
        }
        acc.0.iter().map(|w| w * w).sum::<f64>() / acc.1
    }
    fn leaf(&self, idx: &[usize]) -> Vec<f64> {
        let mut acc = self.empty();
        for &i in idx {
            self.add(&mut acc, i);
        }
        if acc.1 > 0.0 {
            acc.0.iter().map(|w| w / acc.1).collect()
        } else {
            vec![1.0 / self.classes as f64; self.classes]
        }
    }
}

/// Squared error on a scalar target. `leaf_fn` picks the leaf value.
pub struct SquaredError<'a, F: Fn(&[usize]) -> f64> {
    pub target: &'a [f64],
    pub leaf_fn: F,
}

impl<F: Fn(&[usize]) -> f64> Objective for SquaredError<'_, F> {
    type Acc = (f64, f64);
    fn empty(&self) -> Self::Acc {
        (0.0, 0.0)
    }
    fn add(&self, acc: &mut Self::Acc, i: usize) {
        acc.0 += self.target[i];
        acc.1 += 1.0;
    }
    fn sub(&self, acc: &mut Self::Acc, i: usize) {
        acc.0 -= self.target[i];
        acc.1 -= 1.0;
    }
    fn score(&self, acc: &Self::Acc) -> f64 {
        if acc.1 <= 0.0 {
            0.0
        } else {
            acc.0 * acc.0 / acc.1
        }
    }
    fn leaf(&self, idx: &[usize]) -> Vec<f64> {
        vec![(self.leaf_fn)(idx)]
    }
}

/// Second-order objective with L2 leaf penalty.
pub struct Newton<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub lambda: f64,
    pub min_child_weight: f64,
}

impl Objective for Newton<'_> {
    type Acc = (f64, f64);
    fn empty(&self) -> Self::Acc {
        (0.0, 0.0)
    }
    fn add(&self, acc: &mut Self::Acc, i: usize) {
        acc.0 += self.grad[i];
        acc.1 += self.hess[i];
    }
    fn sub(&self, acc: &mut Self::Acc, i: usize) {
        acc.0 -= self.grad[i];
        acc.1 -= self.hess[i];
    }
    fn score(&self, acc: &Self::Acc) -> f64 {
        0.5 * acc.0 * acc.0 / (acc.1 + self.lambda)
    }
    fn admissible(&self, left: &Self::Acc, right: &Self::Acc) -> bool {
        left.1 >= self.min_child_weight && right.1 >= self.min_child_weight
    }
    fn leaf(&self, idx: &[usize]) -> Vec<f64> {
        let (g, h) = idx.iter().fold((0.0, 0.0), |(g, h), &i| (g + self.grad[i], h + self.hess[i]));
        vec![-g / (h + self.lambda)]
    }
}

/// Leaf values of `tree` for each row of `x`.
pub fn predict_rows(tree: &Tree, x: ArrayView2<f64>) -> Array2<f64> {
    let width = tree
        .nodes
        .iter()
        .find_map(|n| match n {
            Node::Leaf { value } => Some(value.len()),
            Node::Split { .. } => None,
        })
        .unwrap_or(0);
    let mut out = Array2::zeros((x.nrows(), width));
    for (r, row) in x.rows().into_iter().enumerate() {
        let v = tree.leaf_value(&row.to_vec()).to_vec();
        for (c, val) in v.into_iter().enumerate() {
            out[[r, c]] = val;
        }
    }
    out
}
