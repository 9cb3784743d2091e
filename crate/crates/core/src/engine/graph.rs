//! The tape: ops, eager forward values, and the backward sweep.

use std::sync::Arc;

use ndarray::{s, Array2, Axis};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    Constant,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    /// `[m x n] + [1 x n]`, the row broadcast used for biases.
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Ln(NodeId),
    PowScalar(NodeId, f64),
    Transpose(NodeId),
    /// Row-wise softmax; `mask[j] == false` removes column `j` entirely
    /// (zero weight, zero gradient).
    RowSoftmax(NodeId),
    /// Row-wise layer norm with learned `[1 x n]` scale and shift. The
    /// normalized activations and inverse stddevs are cached at forward time.
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Array2<f64>,
        inv_std: Vec<f64>,
    },
    ConcatCols(NodeId, NodeId),
    SliceCols {
        x: NodeId,
        from: usize,
        to: usize,
    },
    GatherRows {
        x: NodeId,
        rows: Arc<Vec<usize>>,
    },
    SumAll(NodeId),
    MeanAll(NodeId),
    Clamp(NodeId, f64, f64),
    Min(NodeId, NodeId),
    Max(NodeId, NodeId),
    Detach(#[allow(dead_code)] NodeId),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Eager computation tape.
pub struct Graph {
    nodes: Vec<Node>,
}

/// Result of a backward sweep. Gradients are retained for leaf nodes only;
/// intermediate slots are drained while propagating.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Array2<f64>> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Array2<f64>> {
        self.grads[id.0].take()
    }
}

const LAYER_NORM_EPS: f64 = 1e-5;

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    /// Forward value of a `[1 x 1]` node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.value(id).dim(), (1, 1));
        self.value(id)[(0, 0)]
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Differentiable input (parameters, or inputs under a gradient check).
    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Non-differentiable input (features, targets, masks, encodings).
    pub fn constant(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Constant, false)
    }

    pub fn constant_scalar(&mut self, v: f64) -> NodeId {
        self.constant(Array2::from_elem((1, 1), v))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).dot(self.value(b));
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a, b), g)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) + self.value(b);
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), g)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) - self.value(b);
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub(a, b), g)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) * self.value(b);
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a, b), g)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) / self.value(b);
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::Div(a, b), g)
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        debug_assert_eq!(self.value(row).nrows(), 1);
        let v = self.value(a) + self.value(row);
        let g = self.ng(a) || self.ng(row);
        self.push(v, Op::AddRow(a, row), g)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).mapv(|x| x * c);
        let g = self.ng(a);
        self.push(v, Op::Scale(a, c), g)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).mapv(|x| x + c);
        let g = self.ng(a);
        self.push(v, Op::AddScalar(a), g)
    }

    /// `1 - x`, elementwise.
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let n = self.scale(a, -1.0);
        self.add_scalar(n, 1.0)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        // f64::max would swallow NaN; non-finite activations must stay
        // visible so training can abort with a diagnostic.
        let v = self
            .value(a)
            .mapv(|x| if x.is_nan() { x } else { x.max(0.0) });
        let g = self.ng(a);
        self.push(v, Op::Relu(a), g)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        let g = self.ng(a);
        self.push(v, Op::Sigmoid(a), g)
    }

    /// Elementwise natural log; inputs must be positive.
    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::ln);
        let g = self.ng(a);
        self.push(v, Op::Ln(a), g)
    }

    /// Elementwise `x^p` for non-negative bases.
    pub fn pow_scalar(&mut self, a: NodeId, p: f64) -> NodeId {
        let v = self.value(a).mapv(|x| x.powf(p));
        let g = self.ng(a);
        self.push(v, Op::PowScalar(a, p), g)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).t().to_owned();
        let g = self.ng(a);
        self.push(v, Op::Transpose(a), g)
    }

    /// Row-wise softmax. With a mask, excluded columns get exactly zero
    /// weight; a row with every column masked comes back all-zero.
    pub fn row_softmax(&mut self, x: NodeId, mask: Option<Arc<Vec<bool>>>) -> NodeId {
        let input = self.value(x);
        if let Some(m) = &mask {
            debug_assert_eq!(m.len(), input.ncols());
        }
        let mut v = Array2::zeros(input.dim());
        for (i, row) in input.rows().into_iter().enumerate() {
            let mut max = f64::NEG_INFINITY;
            for (j, &val) in row.iter().enumerate() {
                if mask.as_ref().is_none_or(|m| m[j]) && val > max {
                    max = val;
                }
            }
            if max == f64::NEG_INFINITY {
                continue; // fully masked row
            }
            let mut denom = 0.0;
            for (j, &val) in row.iter().enumerate() {
                if mask.as_ref().is_none_or(|m| m[j]) {
                    let e = (val - max).exp();
                    v[(i, j)] = e;
                    denom += e;
                }
            }
            for j in 0..input.ncols() {
                v[(i, j)] /= denom;
            }
        }
        let g = self.ng(x);
        self.push(v, Op::RowSoftmax(x), g)
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let input = self.value(x);
        let n = input.ncols() as f64;
        let mut xhat = Array2::zeros(input.dim());
        let mut inv_std = Vec::with_capacity(input.nrows());
        for (i, row) in input.rows().into_iter().enumerate() {
            let mean = row.sum() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            for (j, &v) in row.iter().enumerate() {
                xhat[(i, j)] = (v - mean) * is;
            }
        }
        let v = &xhat * self.value(gamma) + self.value(beta);
        let g = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(
            v,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            g,
        )
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        debug_assert_eq!(va.nrows(), vb.nrows());
        let mut v = Array2::zeros((va.nrows(), va.ncols() + vb.ncols()));
        v.slice_mut(s![.., ..va.ncols()]).assign(va);
        v.slice_mut(s![.., va.ncols()..]).assign(vb);
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::ConcatCols(a, b), g)
    }

    pub fn slice_cols(&mut self, x: NodeId, from: usize, to: usize) -> NodeId {
        let v = self.value(x).slice(s![.., from..to]).to_owned();
        let g = self.ng(x);
        self.push(v, Op::SliceCols { x, from, to }, g)
    }

    pub fn gather_rows(&mut self, x: NodeId, rows: Arc<Vec<usize>>) -> NodeId {
        let input = self.value(x);
        let mut v = Array2::zeros((rows.len(), input.ncols()));
        for (out_i, &src) in rows.iter().enumerate() {
            v.row_mut(out_i).assign(&input.row(src));
        }
        let g = self.ng(x);
        self.push(v, Op::GatherRows { x, rows }, g)
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        let g = self.ng(a);
        self.push(v, Op::SumAll(a), g)
    }

    /// Mean over all elements; the input must be non-empty.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let len = self.value(a).len();
        assert!(len > 0, "mean_all over an empty tensor");
        let v = Array2::from_elem((1, 1), self.value(a).sum() / len as f64);
        let g = self.ng(a);
        self.push(v, Op::MeanAll(a), g)
    }

    /// Clamp to `[lo, hi]`; gradient passes only strictly inside the band.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        let g = self.ng(a);
        self.push(v, Op::Clamp(a, lo, hi), g)
    }

    pub fn min(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.zip_mut_with(self.value(b), |x, &y| *x = x.min(y));
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::Min(a, b), g)
    }

    pub fn max(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.zip_mut_with(self.value(b), |x, &y| *x = x.max(y));
        let g = self.ng(a) || self.ng(b);
        self.push(v, Op::Max(a, b), g)
    }

    /// Forward identity that blocks gradient flow.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).clone();
        self.push(v, Op::Detach(a), false)
    }

    /// Backpropagates from a `[1 x 1]` node, returning a gradient per node.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(
            self.value(loss).dim(),
            (1, 1),
            "backward requires a scalar loss node"
        );
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        if !self.ng(loss) {
            return Gradients { grads };
        }
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.push_back(idx, &g, &mut grads);
            // Re-store for leaves so callers can read them out.
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Gradients { grads }
    }

    fn accumulate(grads: &mut [Option<Array2<f64>>], id: NodeId, delta: Array2<f64>) {
        match &mut grads[id.0] {
            Some(existing) => *existing += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    fn push_back(&self, idx: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let acc = |grads: &mut [Option<Array2<f64>>], id: NodeId, delta: Array2<f64>| {
            if self.ng(id) {
                Self::accumulate(grads, id, delta);
            }
        };
        match &self.nodes[idx].op {
            Op::Leaf | Op::Constant | Op::Detach(_) => {}
            Op::MatMul(a, b) => {
                acc(grads, *a, g.dot(&self.value(*b).t()));
                acc(grads, *b, self.value(*a).t().dot(g));
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.mapv(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(grads, *a, g * self.value(*b));
                acc(grads, *b, g * self.value(*a));
            }
            Op::Div(a, b) => {
                let vb = self.value(*b);
                acc(grads, *a, g / vb);
                let va = self.value(*a);
                acc(grads, *b, -(g * va) / (vb * vb));
            }
            Op::AddRow(a, row) => {
                acc(grads, *a, g.clone());
                acc(
                    grads,
                    *row,
                    g.sum_axis(Axis(0)).insert_axis(Axis(0)).to_owned(),
                );
            }
            Op::Scale(a, c) => acc(grads, *a, g.mapv(|x| x * c)),
            Op::AddScalar(a) => acc(grads, *a, g.clone()),
            Op::Relu(a) => {
                let mut d = g.clone();
                d.zip_mut_with(self.value(*a), |dg, &x| {
                    if x <= 0.0 {
                        *dg = 0.0;
                    }
                });
                acc(grads, *a, d);
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[idx].value;
                acc(grads, *a, g * y * &y.mapv(|v| 1.0 - v));
            }
            Op::Ln(a) => acc(grads, *a, g / self.value(*a)),
            Op::PowScalar(a, p) => {
                if *p == 0.0 {
                    return;
                }
                let base = self.value(*a);
                let d = g * &base.mapv(|x| p * x.powf(p - 1.0));
                acc(grads, *a, d);
            }
            Op::Transpose(a) => acc(grads, *a, g.t().to_owned()),
            Op::RowSoftmax(x) => {
                let y = &self.nodes[idx].value;
                let mut d = Array2::zeros(y.dim());
                for i in 0..y.nrows() {
                    let dot: f64 = (0..y.ncols()).map(|j| g[(i, j)] * y[(i, j)]).sum();
                    for j in 0..y.ncols() {
                        d[(i, j)] = y[(i, j)] * (g[(i, j)] - dot);
                    }
                }
                acc(grads, *x, d);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let n = xhat.ncols() as f64;
                acc(
                    grads,
                    *beta,
                    g.sum_axis(Axis(0)).insert_axis(Axis(0)).to_owned(),
                );
                acc(
                    grads,
                    *gamma,
                    (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)).to_owned(),
                );
                if self.ng(*x) {
                    let gh = g * self.value(*gamma); // row broadcast
                    let mut d = Array2::zeros(xhat.dim());
                    for i in 0..xhat.nrows() {
                        let mean_gh: f64 = (0..xhat.ncols()).map(|j| gh[(i, j)]).sum::<f64>() / n;
                        let mean_gh_xhat: f64 =
                            (0..xhat.ncols()).map(|j| gh[(i, j)] * xhat[(i, j)]).sum::<f64>() / n;
                        for j in 0..xhat.ncols() {
                            d[(i, j)] = inv_std[i]
                                * (gh[(i, j)] - mean_gh - xhat[(i, j)] * mean_gh_xhat);
                        }
                    }
                    Self::accumulate(grads, *x, d);
                }
            }
            Op::ConcatCols(a, b) => {
                let na = self.value(*a).ncols();
                acc(grads, *a, g.slice(s![.., ..na]).to_owned());
                acc(grads, *b, g.slice(s![.., na..]).to_owned());
            }
            Op::SliceCols { x, from, to } => {
                let mut d = Array2::zeros(self.value(*x).dim());
                d.slice_mut(s![.., *from..*to]).assign(g);
                acc(grads, *x, d);
            }
            Op::GatherRows { x, rows } => {
                let mut d = Array2::zeros(self.value(*x).dim());
                for (out_i, &src) in rows.iter().enumerate() {
                    let mut dst = d.row_mut(src);
                    dst += &g.row(out_i);
                }
                acc(grads, *x, d);
            }
            Op::SumAll(a) => {
                let d = Array2::from_elem(self.value(*a).dim(), g[(0, 0)]);
                acc(grads, *a, d);
            }
            Op::MeanAll(a) => {
                let len = self.value(*a).len() as f64;
                let d = Array2::from_elem(self.value(*a).dim(), g[(0, 0)] / len);
                acc(grads, *a, d);
            }
            Op::Clamp(a, lo, hi) => {
                let mut d = g.clone();
                d.zip_mut_with(self.value(*a), |dg, &x| {
                    if x <= *lo || x >= *hi {
                        *dg = 0.0;
                    }
                });
                acc(grads, *a, d);
            }
            Op::Min(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let mut da = g.clone();
                let mut db = g.clone();
                for ((x, y), (dx, dy)) in va
                    .iter()
                    .zip(vb.iter())
                    .zip(da.iter_mut().zip(db.iter_mut()))
                {
                    if x <= y {
                        *dy = 0.0;
                    } else {
                        *dx = 0.0;
                    }
                }
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::Max(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let mut da = g.clone();
                let mut db = g.clone();
                for ((x, y), (dx, dy)) in va
                    .iter()
                    .zip(vb.iter())
                    .zip(da.iter_mut().zip(db.iter_mut()))
                {
                    if x >= y {
                        *dy = 0.0;
                    } else {
                        *dx = 0.0;
                    }
                }
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
        }
    }
}
