//! Tape-based reverse-mode differentiation over `f64` tensors.
//!
//! A [`Graph`] records every operation in creation order; [`Graph::backward`]
//! walks the tape in reverse. Tensors use NCHW layout for images and `[N, F]`
//! for feature rows.

use ndarray::{ArrayD, Axis, IxDyn};

use crate::conv::{self, ConvGeom};
use crate::params::{ParamId, ParamKind, ParamStore};

/// Node handle inside a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Conv { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    MaxPool2 { x: Var, argmax: Vec<usize> },
    AvgPool { x: Var, k: usize },
    Upsample2(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    GateChannels { x: Var, gate: Var },
    ScaleChannels { x: Var, scale: Var },
    BroadcastSpatial(Var),
    Concat(Vec<Var>),
    Relu(Var),
    Sigmoid(Var),
    Ln(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    Scale(Var, f64),
    AddScalar(Var),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: ArrayD<f64>, inv_std: Vec<f64>, batch_stats: bool },
    GlobalAvgPool(Var),
    Linear { x: Var, w: Var, b: Var },
    Softmax(Var),
}

struct Node {
    value: ArrayD<f64>,
    op: Op,
    needs_grad: bool,
}

/// Pending write to a buffer tensor, produced by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BufferUpdate {
    pub id: ParamId,
    pub value: ArrayD<f64>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    buffer_updates: Vec<BufferUpdate>,
}

/// Gradients produced by one backward pass.
pub struct Gradients {
    params: Vec<(ParamId, ArrayD<f64>)>,
    nodes: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    /// Gradient per trainable parameter, sorted by id, duplicates summed.
    pub fn params(&self) -> &[(ParamId, ArrayD<f64>)] {
        &self.params
    }

    pub fn param(&self, id: ParamId) -> Option<&ArrayD<f64>> {
        self.params.iter().find(|(p, _)| *p == id).map(|(_, g)| g)
    }

    /// Gradient with respect to an arbitrary node, when one reached it.
    pub fn wrt(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }
}

fn shape4(a: &ArrayD<f64>) -> (usize, usize, usize, usize) {
    let s = a.shape();
    assert_eq!(s.len(), 4, "expected NCHW tensor, got shape {s:?}");
    (s[0], s[1], s[2], s[3])
}

fn std_vec(a: &ArrayD<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

fn from_vec(shape: &[usize], data: Vec<f64>) -> ArrayD<f64> {
    ArrayD::from_shape_vec(IxDyn(shape), data).expect("shape matches data")
}

fn accumulate(grads: &mut [Option<ArrayD<f64>>], v: Var, g: ArrayD<f64>) {
    match &mut grads[v.0] {
        Some(acc) => *acc += &g,
        slot @ None => *slot = Some(g),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: ArrayD<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &ArrayD<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.len(), 1, "scalar() on tensor of shape {:?}", val.shape());
        val.iter().next().copied().unwrap_or(f64::NAN)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn take_buffer_updates(&mut self) -> Vec<BufferUpdate> {
        std::mem::take(&mut self.buffer_updates)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Input that records its gradient (useful for checks on activations).
    pub fn variable(&mut self, value: ArrayD<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let needs = store.kind(id) == ParamKind::Trainable;
        self.push(store.get(id).clone(), Op::Param(id), needs)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeom) -> Var {
        let out = conv::forward(self.value(x), self.value(w), b.map(|b| self.value(b)), geom);
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        self.push(out, Op::Conv { x, w, b, geom }, needs)
    }

    /// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn max_pool2(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (n, c, h, w) = shape4(xv);
        let (oh, ow) = (h / 2, w / 2);
        let xs = xv.as_standard_layout();
        let xs = xs.as_slice().expect("standard layout");
        let mut out = vec![0.0; n * c * oh * ow];
        let mut argmax = vec![0usize; out.len()];
        for plane in 0..n * c {
            let base = plane * h * w;
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best_i = base + 2 * y * w + 2 * xx;
                    let mut best = xs[best_i];
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + (2 * y + dy) * w + 2 * xx + dx;
                        if xs[i] > best {
                            best = xs[i];
                            best_i = i;
                        }
                    }
                    let o = plane * oh * ow + y * ow + xx;
                    out[o] = best;
                    argmax[o] = best_i;
                }
            }
        }
        let needs = self.needs(x);
        self.push(from_vec(&[n, c, oh, ow], out), Op::MaxPool2 { x, argmax }, needs)
    }

    /// Non-overlapping k x k average pooling.
    pub fn avg_pool(&mut self, x: Var, k: usize) -> Var {
        let xv = self.value(x).as_standard_layout().into_owned();
        let (n, c, h, w) = shape4(&xv);
        let (oh, ow) = (h / k, w / k);
        let xs = xv.as_slice().expect("standard layout");
        let inv = 1.0 / (k * k) as f64;
        let mut out = vec![0.0; n * c * oh * ow];
        for plane in 0..n * c {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = 0.0;
                    for dy in 0..k {
                        for dx in 0..k {
                            acc += xs[plane * h * w + (y * k + dy) * w + xx * k + dx];
                        }
                    }
                    out[plane * oh * ow + y * ow + xx] = acc * inv;
                }
            }
        }
        let needs = self.needs(x);
        self.push(from_vec(&[n, c, oh, ow], out), Op::AvgPool { x, k }, needs)
    }

    /// Nearest-neighbour 2x upsampling.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let xv = self.value(x).as_standard_layout().into_owned();
        let (n, c, h, w) = shape4(&xv);
        let xs = xv.as_slice().expect("standard layout");
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![0.0; n * c * oh * ow];
        for plane in 0..n * c {
            for y in 0..oh {
                for xx in 0..ow {
                    out[plane * oh * ow + y * ow + xx] = xs[plane * h * w + (y / 2) * w + xx / 2];
                }
            }
        }
        let needs = self.needs(x);
        self.push(from_vec(&[n, c, oh, ow], out), Op::Upsample2(x), needs)
    }

    fn binary_check(&self, a: Var, b: Var, name: &str) {
        assert_eq!(
            self.value(a).shape(),
            self.value(b).shape(),
            "{name}: shape mismatch"
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_check(a, b, "add");
        let out = self.value(a) + self.value(b);
        let needs = self.needs(a) || self.needs(b);
        self.push(out, Op::Add(a, b), needs)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_check(a, b, "sub");
        let out = self.value(a) - self.value(b);
        let needs = self.needs(a) || self.needs(b);
        self.push(out, Op::Sub(a, b), needs)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_check(a, b, "mul");
        let out = self.value(a) * self.value(b);
        let needs = self.needs(a) || self.needs(b);
        self.push(out, Op::Mul(a, b), needs)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary_check(a, b, "div");
        let out = self.value(a) / self.value(b);
        let needs = self.needs(a) || self.needs(b);
        self.push(out, Op::Div(a, b), needs)
    }

    /// `x[N,C,H,W] * gate[N,1,H,W]`, broadcasting the gate over channels.
    pub fn gate_channels(&mut self, x: Var, gate: Var) -> Var {
        let (n, c, h, w) = shape4(self.value(x));
        let gs = self.value(gate).shape().to_vec();
        assert_eq!(gs, vec![n, 1, h, w], "gate_channels: gate shape {gs:?}");
        let xs = std_vec(self.value(x));
        let g = std_vec(self.value(gate));
        let plane = h * w;
        let mut out = xs;
        for ni in 0..n {
            for ci in 0..c {
                let row = &mut out[(ni * c + ci) * plane..][..plane];
                for (v, gv) in row.iter_mut().zip(&g[ni * plane..][..plane]) {
                    *v *= gv;
                }
            }
        }
        let needs = self.needs(x) || self.needs(gate);
        self.push(from_vec(&[n, c, h, w], out), Op::GateChannels { x, gate }, needs)
    }

    /// `x[N,C,H,W] * scale[N,C]`, one factor per channel map.
    pub fn scale_channels(&mut self, x: Var, scale: Var) -> Var {
        let (n, c, h, w) = shape4(self.value(x));
        assert_eq!(self.value(scale).shape(), &[n, c], "scale_channels: scale shape");
        let s = std_vec(self.value(scale));
        let mut out = std_vec(self.value(x));
        let plane = h * w;
        for (i, chunk) in out.chunks_mut(plane).enumerate() {
            for v in chunk {
                *v *= s[i];
            }
        }
        let needs = self.needs(x) || self.needs(scale);
        self.push(from_vec(&[n, c, h, w], out), Op::ScaleChannels { x, scale }, needs)
    }

    /// `[N,C] -> [N,C,H,W]` by repetition.
    pub fn broadcast_spatial(&mut self, x: Var, h: usize, w: usize) -> Var {
        let s = self.value(x).shape().to_vec();
        assert_eq!(s.len(), 2, "broadcast_spatial expects [N,C]");
        let xs = std_vec(self.value(x));
        let mut out = Vec::with_capacity(xs.len() * h * w);
        for v in xs {
            out.extend(std::iter::repeat_n(v, h * w));
        }
        let needs = self.needs(x);
        self.push(from_vec(&[s[0], s[1], h, w], out), Op::BroadcastSpatial(x), needs)
    }

    /// Channel-wise concatenation of NCHW tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let (n, _, h, w) = shape4(self.value(parts[0]));
        let mut channels = 0;
        for &p in parts {
            let (pn, pc, ph, pw) = shape4(self.value(p));
            assert_eq!((pn, ph, pw), (n, h, w), "concat: spatial mismatch");
            channels += pc;
        }
        let plane = h * w;
        let mut out = vec![0.0; n * channels * plane];
        let mut offset = 0;
        for &p in parts {
            let pv = self.value(p).as_standard_layout();
            let ps = pv.as_slice().expect("standard layout");
            let pc = pv.shape()[1];
            for ni in 0..n {
                let src = &ps[ni * pc * plane..][..pc * plane];
                out[(ni * channels + offset) * plane..][..pc * plane].copy_from_slice(src);
            }
            offset += pc;
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(from_vec(&[n, channels, h, w], out), Op::Concat(parts.to_vec()), needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| v.max(0.0));
        let needs = self.needs(x);
        self.push(out, Op::Relu(x), needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| 1.0 / (1.0 + (-v).exp()));
        let needs = self.needs(x);
        self.push(out, Op::Sigmoid(x), needs)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(f64::ln);
        let needs = self.needs(x);
        self.push(out, Op::Ln(x), needs)
    }

    /// Clamp with zero gradient outside `[lo, hi]`.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(x).mapv(|v| v.clamp(lo, hi));
        let needs = self.needs(x);
        self.push(out, Op::Clamp { x, lo, hi }, needs)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x) * c;
        let needs = self.needs(x);
        self.push(out, Op::Scale(x, c), needs)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x) + c;
        let needs = self.needs(x);
        self.push(out, Op::AddScalar(x), needs)
    }

    /// Sum of all elements as a 0-d tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let needs = self.needs(x);
        self.push(ArrayD::from_elem(IxDyn(&[]), s), Op::Sum(x), needs)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.sum() / v.len().max(1) as f64;
        let needs = self.needs(x);
        self.push(ArrayD::from_elem(IxDyn(&[]), s), Op::Mean(x), needs)
    }

    /// `[N,C] -> [N]` row sums.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let out = self.value(x).sum_axis(Axis(1));
        let needs = self.needs(x);
        self.push(out, Op::SumRows(x), needs)
    }

    /// Batch normalisation over (N, H, W) per channel.
    ///
    /// With `running = Some((mean, var, momentum))` and `train = true`, batch
    /// statistics normalise the input and a buffer update is queued. With
    /// `train = false` the stored running statistics are used.
    pub fn batch_norm(
        &mut self,
        store: &ParamStore,
        x: Var,
        gamma: Var,
        beta: Var,
        running: (ParamId, ParamId),
        train: bool,
        momentum: f64,
        eps: f64,
    ) -> Var {
        let (n, c, h, w) = shape4(self.value(x));
        let plane = h * w;
        let xs = std_vec(self.value(x));
        let (mean, var) = if train {
            let m = (n * plane) as f64;
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ni in 0..n {
                for (ci, mv) in mean.iter_mut().enumerate() {
                    *mv += xs[(ni * c + ci) * plane..][..plane].iter().sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|v| *v /= m);
            for ni in 0..n {
                for ci in 0..c {
                    let mu = mean[ci];
                    var[ci] += xs[(ni * c + ci) * plane..][..plane].iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= m);
            let old_mean = store.get(running.0);
            let old_var = store.get(running.1);
            let new_mean: Vec<f64> =
                old_mean.iter().zip(&mean).map(|(o, b)| (1.0 - momentum) * o + momentum * b).collect();
            let new_var: Vec<f64> =
                old_var.iter().zip(&var).map(|(o, b)| (1.0 - momentum) * o + momentum * b).collect();
            self.buffer_updates.push(BufferUpdate { id: running.0, value: from_vec(&[c], new_mean) });
            self.buffer_updates.push(BufferUpdate { id: running.1, value: from_vec(&[c], new_var) });
            (mean, var)
        } else {
            (std_vec(store.get(running.0)), std_vec(store.get(running.1)))
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let gm = std_vec(self.value(gamma));
        let bt = std_vec(self.value(beta));
        let mut xhat = vec![0.0; xs.len()];
        let mut out = vec![0.0; xs.len()];
        for ni in 0..n {
            for ci in 0..c {
                let off = (ni * c + ci) * plane;
                for i in off..off + plane {
                    let xh = (xs[i] - mean[ci]) * inv_std[ci];
                    xhat[i] = xh;
                    out[i] = gm[ci] * xh + bt[ci];
                }
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(
            from_vec(&[n, c, h, w], out),
            Op::BatchNorm { x, gamma, beta, xhat: from_vec(&[n, c, h, w], xhat), inv_std, batch_stats: train },
            needs,
        )
    }

    /// `[N,C,H,W] -> [N,C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let (n, c, h, w) = shape4(self.value(x));
        let xs = std_vec(self.value(x));
        let plane = (h * w) as f64;
        let out: Vec<f64> = xs.chunks(h * w).map(|p| p.iter().sum::<f64>() / plane).collect();
        let needs = self.needs(x);
        self.push(from_vec(&[n, c], out), Op::GlobalAvgPool(x), needs)
    }

    /// `x[N,F] . w[F,O] + b[O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xv = self.value(x).clone().into_dimensionality::<ndarray::Ix2>().expect("linear input [N,F]");
        let wv = self.value(w).clone().into_dimensionality::<ndarray::Ix2>().expect("linear weight [F,O]");
        let bv = self.value(b).clone().into_dimensionality::<ndarray::Ix1>().expect("linear bias [O]");
        let out = xv.dot(&wv) + &bv;
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(out.into_dyn(), Op::Linear { x, w, b }, needs)
    }

    /// Row-wise softmax of `[N,C]` logits.
    pub fn softmax(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone().into_dimensionality::<ndarray::Ix2>().expect("softmax input [N,C]");
        for mut row in out.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let needs = self.needs(x);
        self.push(out.into_dyn(), Op::Softmax(x), needs)
    }

    /// Reverse pass from a single-element `loss` node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "backward from non-scalar node");
        let mut grads: Vec<Option<ArrayD<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(ArrayD::from_elem(self.value(loss).raw_dim(), 1.0));
        let mut params: Vec<(ParamId, ArrayD<f64>)> = Vec::new();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(gy) = grads[i].clone() else { continue };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => params.push((*id, gy)),
                Op::Conv { x, w, b, geom } => {
                    let cg = conv::backward(
                        self.value(*x),
                        self.value(*w),
                        &gy,
                        *geom,
                        (self.needs(*x), self.needs(*w), b.is_some_and(|b| self.needs(b))),
                    );
                    if let Some(dx) = cg.dx {
                        accumulate(&mut grads, *x, dx);
                    }
                    if let Some(dw) = cg.dw {
                        accumulate(&mut grads, *w, dw);
                    }
                    if let (Some(b), Some(db)) = (b, cg.db) {
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::MaxPool2 { x, argmax } => {
                    let mut dx = vec![0.0; self.value(*x).len()];
                    for (g, &src) in gy.iter().zip(argmax) {
                        dx[src] += g;
                    }
                    accumulate(&mut grads, *x, from_vec(self.value(*x).shape(), dx));
                }
                Op::AvgPool { x, k } => {
                    let (n, c, h, w) = shape4(self.value(*x));
                    let (oh, ow) = (h / k, w / k);
                    let g = std_vec(&gy);
                    let inv = 1.0 / (k * k) as f64;
                    let mut dx = vec![0.0; n * c * h * w];
                    for plane in 0..n * c {
                        for y in 0..oh {
                            for xx in 0..ow {
                                let gv = g[plane * oh * ow + y * ow + xx] * inv;
                                for dy in 0..*k {
                                    for ddx in 0..*k {
                                        dx[plane * h * w + (y * k + dy) * w + xx * k + ddx] += gv;
                                    }
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *x, from_vec(&[n, c, h, w], dx));
                }
                Op::Upsample2(x) => {
                    let (n, c, h, w) = shape4(self.value(*x));
                    let g = std_vec(&gy);
                    let (oh, ow) = (2 * h, 2 * w);
                    let mut dx = vec![0.0; n * c * h * w];
                    for plane in 0..n * c {
                        for y in 0..oh {
                            for xx in 0..ow {
                                dx[plane * h * w + (y / 2) * w + xx / 2] += g[plane * oh * ow + y * ow + xx];
                            }
                        }
                    }
                    accumulate(&mut grads, *x, from_vec(&[n, c, h, w], dx));
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, gy.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, gy);
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, gy.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, -gy);
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, &gy * self.value(*b));
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, &gy * self.value(*a));
                    }
                }
                Op::Div(a, b) => {
                    let bv = self.value(*b);
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, &gy / bv);
                    }
                    if self.needs(*b) {
                        let da = self.value(*a);
                        accumulate(&mut grads, *b, -(&gy * da) / (bv * bv));
                    }
                }
                Op::GateChannels { x, gate } => {
                    let (n, c, h, w) = shape4(self.value(*x));
                    let plane = h * w;
                    let g = std_vec(&gy);
                    let gv = std_vec(self.value(*gate));
                    if self.needs(*x) {
                        let mut dx = g.clone();
                        for ni in 0..n {
                            for ci in 0..c {
                                let row = &mut dx[(ni * c + ci) * plane..][..plane];
                                for (d, s) in row.iter_mut().zip(&gv[ni * plane..][..plane]) {
                                    *d *= s;
                                }
                            }
                        }
                        accumulate(&mut grads, *x, from_vec(&[n, c, h, w], dx));
                    }
                    if self.needs(*gate) {
                        let xv = std_vec(self.value(*x));
                        let mut dg = vec![0.0; n * plane];
                        for ni in 0..n {
                            for ci in 0..c {
                                let off = (ni * c + ci) * plane;
                                for p in 0..plane {
                                    dg[ni * plane + p] += g[off + p] * xv[off + p];
                                }
                            }
                        }
                        accumulate(&mut grads, *gate, from_vec(&[n, 1, h, w], dg));
                    }
                }
                Op::ScaleChannels { x, scale } => {
                    let (n, c, h, w) = shape4(self.value(*x));
                    let plane = h * w;
                    let g = std_vec(&gy);
                    if self.needs(*x) {
                        let s = std_vec(self.value(*scale));
                        let mut dx = g.clone();
                        for (i, chunk) in dx.chunks_mut(plane).enumerate() {
                            chunk.iter_mut().for_each(|v| *v *= s[i]);
                        }
                        accumulate(&mut grads, *x, from_vec(&[n, c, h, w], dx));
                    }
                    if self.needs(*scale) {
                        let xv = std_vec(self.value(*x));
                        let ds: Vec<f64> = g
                            .chunks(plane)
                            .zip(xv.chunks(plane))
                            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p * q).sum())
                            .collect();
                        accumulate(&mut grads, *scale, from_vec(&[n, c], ds));
                    }
                }
                Op::BroadcastSpatial(x) => {
                    let s = self.value(*x).shape().to_vec();
                    let plane = gy.len() / (s[0] * s[1]);
                    let g = std_vec(&gy);
                    let dx: Vec<f64> = g.chunks(plane).map(|c| c.iter().sum()).collect();
                    accumulate(&mut grads, *x, from_vec(&s, dx));
                }
                Op::Concat(parts) => {
                    let (n, channels, h, w) = shape4(&gy);
                    let plane = h * w;
                    let g = std_vec(&gy);
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.value(p).shape()[1];
                        if self.needs(p) {
                            let mut dp = vec![0.0; n * pc * plane];
                            for ni in 0..n {
                                dp[ni * pc * plane..][..pc * plane]
                                    .copy_from_slice(&g[(ni * channels + offset) * plane..][..pc * plane]);
                            }
                            accumulate(&mut grads, p, from_vec(&[n, pc, h, w], dp));
                        }
                        offset += pc;
                    }
                }
                Op::Relu(x) => {
                    let mut dx = gy;
                    ndarray::Zip::from(&mut dx).and(self.value(*x)).for_each(|d, &v| {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    accumulate(&mut grads, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    let dx = &gy * &y.mapv(|s| s * (1.0 - s));
                    accumulate(&mut grads, *x, dx);
                }
                Op::Ln(x) => {
                    let dx = &gy / self.value(*x);
                    accumulate(&mut grads, *x, dx);
                }
                Op::Clamp { x, lo, hi } => {
                    let mut dx = gy;
                    ndarray::Zip::from(&mut dx).and(self.value(*x)).for_each(|d, &v| {
                        if v < *lo || v > *hi {
                            *d = 0.0;
                        }
                    });
                    accumulate(&mut grads, *x, dx);
                }
                Op::Scale(x, c) => accumulate(&mut grads, *x, gy * *c),
                Op::AddScalar(x) => accumulate(&mut grads, *x, gy),
                Op::Sum(x) => {
                    let g = gy.iter().next().copied().unwrap_or(0.0);
                    accumulate(&mut grads, *x, ArrayD::from_elem(self.value(*x).raw_dim(), g));
                }
                Op::Mean(x) => {
                    let xv = self.value(*x);
                    let g = gy.iter().next().copied().unwrap_or(0.0) / xv.len().max(1) as f64;
                    accumulate(&mut grads, *x, ArrayD::from_elem(xv.raw_dim(), g));
                }
                Op::SumRows(x) => {
                    let s = self.value(*x).shape().to_vec();
                    let g = std_vec(&gy);
                    let mut dx = Vec::with_capacity(s[0] * s[1]);
                    for gv in g {
                        dx.extend(std::iter::repeat_n(gv, s[1]));
                    }
                    accumulate(&mut grads, *x, from_vec(&s, dx));
                }
                Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats } => {
                    let (n, c, h, w) = shape4(&gy);
                    let plane = h * w;
                    let g = std_vec(&gy);
                    let xh = std_vec(xhat);
                    let gm = std_vec(self.value(*gamma));
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    for ni in 0..n {
                        for ci in 0..c {
                            let off = (ni * c + ci) * plane;
                            for i in off..off + plane {
                                dgamma[ci] += g[i] * xh[i];
                                dbeta[ci] += g[i];
                            }
                        }
                    }
                    if self.needs(*x) {
                        let mut dx = vec![0.0; g.len()];
                        let m = (n * plane) as f64;
                        for ci in 0..c {
                            let k = gm[ci] * inv_std[ci];
                            for ni in 0..n {
                                let off = (ni * c + ci) * plane;
                                for i in off..off + plane {
                                    dx[i] = if *batch_stats {
                                        k * (g[i] - dbeta[ci] / m - xh[i] * dgamma[ci] / m)
                                    } else {
                                        k * g[i]
                                    };
                                }
                            }
                        }
                        accumulate(&mut grads, *x, from_vec(&[n, c, h, w], dx));
                    }
                    if self.needs(*gamma) {
                        accumulate(&mut grads, *gamma, from_vec(&[c], dgamma));
                    }
                    if self.needs(*beta) {
                        accumulate(&mut grads, *beta, from_vec(&[c], dbeta));
                    }
                }
                Op::GlobalAvgPool(x) => {
                    let (n, c, h, w) = shape4(self.value(*x));
                    let plane = h * w;
                    let g = std_vec(&gy);
                    let mut dx = Vec::with_capacity(n * c * plane);
                    for gv in g {
                        dx.extend(std::iter::repeat_n(gv / plane as f64, plane));
                    }
                    accumulate(&mut grads, *x, from_vec(&[n, c, h, w], dx));
                }
                Op::Linear { x, w, b } => {
                    let g2 = gy.clone().into_dimensionality::<ndarray::Ix2>().expect("linear grad");
                    if self.needs(*x) {
                        let wv = self.value(*w).view().into_dimensionality::<ndarray::Ix2>().expect("weight");
                        accumulate(&mut grads, *x, g2.dot(&wv.t()).into_dyn());
                    }
                    if self.needs(*w) {
                        let xv = self.value(*x).view().into_dimensionality::<ndarray::Ix2>().expect("input");
                        accumulate(&mut grads, *w, xv.t().dot(&g2).into_dyn());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g2.sum_axis(Axis(0)).into_dyn());
                    }
                }
                Op::Softmax(x) => {
                    let y = node.value.view().into_dimensionality::<ndarray::Ix2>().expect("softmax out");
                    let g2 = gy.view().into_dimensionality::<ndarray::Ix2>().expect("softmax grad");
                    let mut dx = ndarray::Array2::<f64>::zeros(y.raw_dim());
                    for ((mut drow, yrow), grow) in dx.rows_mut().into_iter().zip(y.rows()).zip(g2.rows()) {
                        let dot: f64 = yrow.iter().zip(grow.iter()).map(|(a, b)| a * b).sum();
                        for ((d, yv), gv) in drow.iter_mut().zip(yrow.iter()).zip(grow.iter()) {
                            *d = yv * (gv - dot);
                        }
                    }
                    accumulate(&mut grads, *x, dx.into_dyn());
                }
            }
        }

        params.sort_by_key(|(id, _)| *id);
        let mut merged: Vec<(ParamId, ArrayD<f64>)> = Vec::with_capacity(params.len());
        for (id, g) in params {
            match merged.last_mut() {
                Some((last, acc)) if *last == id => *acc += &g,
                _ => merged.push((id, g)),
            }
        }
        Gradients { params: merged, nodes: grads }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    fn t(shape: &[usize], f: impl Fn(usize) -> f64) -> ArrayD<f64> {
        let n: usize = shape.iter().product();
        from_vec(shape, (0..n).map(f).collect())
    }

    /// Central-difference check of d(loss)/d(input) for a graph builder.
    fn check_input_grad(input: ArrayD<f64>, build: impl Fn(&mut Graph, Var) -> Var) {
        let mut g = Graph::new();
        let x = g.variable(input.clone());
        let loss = build(&mut g, x);
        let grads = g.backward(loss);
        let analytic = grads.wrt(x).cloned().unwrap_or_else(|| ArrayD::zeros(input.raw_dim()));
        let h = 1e-6;
        for i in 0..input.len() {
            let mut plus = input.clone();
            let mut minus = input.clone();
            plus.as_slice_mut().unwrap()[i] += h;
            minus.as_slice_mut().unwrap()[i] -= h;
            let eval = |v: ArrayD<f64>| {
                let mut g = Graph::new();
                let x = g.variable(v);
                let l = build(&mut g, x);
                g.scalar(l)
            };
            let numeric = (eval(plus) - eval(minus)) / (2.0 * h);
            let a = analytic.as_slice().unwrap()[i];
            assert!(
                (a - numeric).abs() <= 1e-6 * (1.0 + numeric.abs()),
                "element {i}: analytic {a} numeric {numeric}"
            );
        }
    }

    #[test]
    fn elementwise_chain_gradients() {
        let x = t(&[2, 3], |i| 0.3 + 0.1 * i as f64);
        check_input_grad(x, |g, x| {
            let s = g.sigmoid(x);
            let l = g.ln(s);
            let m = g.mul(l, x);
            let d = g.div(m, s);
            let c = g.clamp(d, -10.0, 10.0);
            g.sum(c)
        });
    }

    #[test]
    fn softmax_and_linear_gradients() {
        let x = t(&[2, 3], |i| (i as f64 * 0.7).sin());
        check_input_grad(x, |g, x| {
            let w = g.constant(t(&[3, 4], |i| (i as f64 * 0.3).cos()));
            let b = g.constant(arr1(&[0.1, -0.2, 0.3, 0.0]).into_dyn());
            let y = g.linear(x, w, b);
            let p = g.softmax(y);
            let l = g.ln(p);
            let r = g.sum_rows(l);
            g.mean(r)
        });
    }

    #[test]
    fn spatial_op_gradients() {
        let x = t(&[2, 2, 4, 4], |i| ((i * 7919) % 97) as f64 / 97.0 - 0.4);
        check_input_grad(x, |g, x| {
            let w = g.constant(t(&[3, 2, 3, 3], |i| ((i * 31) % 17) as f64 / 17.0 - 0.5));
            let b = g.constant(arr1(&[0.05, -0.1, 0.2]).into_dyn());
            let c = g.conv2d(x, w, Some(b), ConvGeom::same(3, 1));
            let r = g.relu(c);
            let p = g.max_pool2(r);
            let u = g.upsample2(p);
            let gp = g.global_avg_pool(u);
            let sc = g.sigmoid(gp);
            let s = g.scale_channels(u, sc);
            let cat = g.concat(&[s, c]);
            let a = g.avg_pool(cat, 2);
            let sq = g.mul(a, a);
            g.sum(sq)
        });
    }

    #[test]
    fn gating_and_broadcast_gradients() {
        let x = t(&[2, 3, 2, 2], |i| (i as f64 * 0.37).sin());
        check_input_grad(x, |g, x| {
            let gate_src = g.global_avg_pool(x);
            let bs = g.broadcast_spatial(gate_src, 2, 2);
            let prod = g.mul(bs, x);
            let ones = g.constant(ArrayD::from_elem(IxDyn(&[3, 1]), 1.0));
            let zero = g.constant(ArrayD::from_elem(IxDyn(&[1]), 0.0));
            let flat = g.global_avg_pool(prod);
            let col = g.linear(flat, ones, zero);
            let gate = g.constant(t(&[2, 1, 2, 2], |i| 0.2 * i as f64));
            let gx = g.gate_channels(x, gate);
            let s1 = g.sum(gx);
            let s2 = g.sum(col);
            let both = g.add(s1, s2);
            g.scale(both, 0.5)
        });
    }

    #[test]
    fn batch_norm_train_gradient() {
        let mut store = ParamStore::new();
        let gamma = store.add("g", arr1(&[1.3, 0.7]).into_dyn(), ParamKind::Trainable);
        let beta = store.add("b", arr1(&[0.1, -0.2]).into_dyn(), ParamKind::Trainable);
        let rm = store.buffer("m", ArrayD::zeros(IxDyn(&[2])));
        let rv = store.buffer("v", ArrayD::ones(IxDyn(&[2])));
        let x = t(&[3, 2, 2, 2], |i| ((i * 13) % 11) as f64 / 5.0);
        check_input_grad(x, |g, x| {
            let gm = g.param(&store, gamma);
            let bt = g.param(&store, beta);
            let y = g.batch_norm(&store, x, gm, bt, (rm, rv), true, 0.1, 1e-3);
            let w = g.constant(t(&[3, 2, 2, 2], |i| (i as f64).cos()));
            let p = g.mul(y, w);
            g.sum(p)
        });
    }

    #[test]
    fn batch_norm_queues_running_stats() {
        let mut store = ParamStore::new();
        let gamma = store.add("g", arr1(&[1.0]).into_dyn(), ParamKind::Trainable);
        let beta = store.add("b", arr1(&[0.0]).into_dyn(), ParamKind::Trainable);
        let rm = store.buffer("m", ArrayD::zeros(IxDyn(&[1])));
        let rv = store.buffer("v", ArrayD::ones(IxDyn(&[1])));
        let mut g = Graph::new();
        let x = g.constant(t(&[2, 1, 1, 2], |i| i as f64));
        let gm = g.param(&store, gamma);
        let bt = g.param(&store, beta);
        g.batch_norm(&store, x, gm, bt, (rm, rv), true, 0.5, 1e-3);
        let ups = g.take_buffer_updates();
        assert_eq!(ups.len(), 2);
        assert!((ups[0].value[0] - 0.75).abs() < 1e-12);
        assert!((ups[1].value[0] - (0.5 + 0.5 * 1.25)).abs() < 1e-12);
    }

    #[test]
    fn param_gradients_merge_duplicates() {
        let mut store = ParamStore::new();
        let p = store.add("p", arr1(&[2.0]).into_dyn(), ParamKind::Trainable);
        let mut g = Graph::new();
        let a = g.param(&store, p);
        let b = g.param(&store, p);
        let prod = g.mul(a, b);
        let loss = g.sum(prod);
        let grads = g.backward(loss);
        assert_eq!(grads.params().len(), 1);
        assert!((grads.param(p).unwrap()[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_params_get_no_gradient() {
        let mut store = ParamStore::new();
        let p = store.add("p", arr1(&[2.0]).into_dyn(), ParamKind::Frozen);
        let mut g = Graph::new();
        let a = g.param(&store, p);
        let loss = g.sum(a);
        assert!(g.backward(loss).params().is_empty());
    }
}
