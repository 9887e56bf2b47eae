//! Training losses expressed as graph compositions so they differentiate
//! through the same tape as the model.

use crate::graph::{Graph, Var};

/// Probability clipping used by the log-based losses.
pub const PROB_EPS: f64 = 1e-7;

/// Soft dice coefficient `(2 sum(p t) + s) / (sum p + sum t + s)` over all elements.
pub fn dice_coef(g: &mut Graph, pred: Var, truth: Var, smooth: f64) -> Var {
    let inter = g.mul(pred, truth);
    let inter = g.sum(inter);
    let num = g.scale(inter, 2.0);
    let num = g.add_scalar(num, smooth);
    let sp = g.sum(pred);
    let st = g.sum(truth);
    let den = g.add(sp, st);
    let den = g.add_scalar(den, smooth);
    g.div(num, den)
}

/// Negated dice coefficient; a perfect prediction scores -1.
pub fn dice_loss(g: &mut Graph, pred: Var, truth: Var, smooth: f64) -> Var {
    let d = dice_coef(g, pred, truth, smooth);
    g.scale(d, -1.0)
}

/// Soft IOU `(sum(p t) + s) / (sum p + sum t - sum(p t) + s)`.
pub fn soft_iou(g: &mut Graph, pred: Var, truth: Var, smooth: f64) -> Var {
    let inter = g.mul(pred, truth);
    let inter = g.sum(inter);
    let num = g.add_scalar(inter, smooth);
    let sp = g.sum(pred);
    let st = g.sum(truth);
    let union = g.add(sp, st);
    let union = g.sub(union, inter);
    let den = g.add_scalar(union, smooth);
    g.div(num, den)
}

/// Mean binary cross-entropy with probabilities clipped to `[eps, 1-eps]`.
pub fn binary_cross_entropy(g: &mut Graph, pred: Var, truth: Var) -> Var {
    let p = g.clamp(pred, PROB_EPS, 1.0 - PROB_EPS);
    let lp = g.ln(p);
    let pos = g.mul(truth, lp);
    let one_minus_p = g.scale(p, -1.0);
    let one_minus_p = g.add_scalar(one_minus_p, 1.0);
    let lq = g.ln(one_minus_p);
    let one_minus_t = g.scale(truth, -1.0);
    let one_minus_t = g.add_scalar(one_minus_t, 1.0);
    let neg = g.mul(one_minus_t, lq);
    let both = g.add(pos, neg);
    let m = g.mean(both);
    g.scale(m, -1.0)
}

/// Mean over rows of `-sum_c t_c ln p_c` for `[N,C]` probabilities.
pub fn categorical_cross_entropy(g: &mut Graph, probs: Var, targets: Var) -> Var {
    let p = g.clamp(probs, PROB_EPS, 1.0);
    let lp = g.ln(p);
    let prod = g.mul(targets, lp);
    let rows = g.sum_rows(prod);
    let m = g.mean(rows);
    g.scale(m, -1.0)
}

/// Mean over rows of `sum_c t_c ln(t_c / p_c)`, both sides clipped to `[eps, 1]`.
pub fn kl_divergence(g: &mut Graph, probs: Var, targets: Var) -> Var {
    let p = g.clamp(probs, PROB_EPS, 1.0);
    let t = g.clamp(targets, PROB_EPS, 1.0);
    let lt = g.ln(t);
    let lp = g.ln(p);
    let diff = g.sub(lt, lp);
    let prod = g.mul(t, diff);
    let rows = g.sum_rows(prod);
    g.mean(rows)
}
