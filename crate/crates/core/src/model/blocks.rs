//! Parameterized building blocks: linear layers, layer norms, multi-head
//! attention and pre-norm residual encoder layers, all expressed as graph
//! constructions over a bound parameter set.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::engine::{Graph, NodeId, ParamId, ParamStore};

/// Parameter nodes for one forward pass: `bound[param.index()]` is the graph
/// node holding that parameter's current value.
pub type Bound = Vec<NodeId>;

fn xavier(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha20Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias_init: f64,
    ) -> Self {
        let w = store.add(format!("{name}.w"), xavier(rng, in_dim, out_dim));
        let b = store.add(
            format!("{name}.b"),
            Array2::from_elem((1, out_dim), bias_init),
        );
        Self { w, b }
    }

    pub fn apply(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> NodeId {
        let h = g.matmul(x, bound[self.w.index()]);
        g.add_row(h, bound[self.b.index()])
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn init(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Array2::ones((1, dim)));
        let beta = store.add(format!("{name}.beta"), Array2::zeros((1, dim)));
        Self { gamma, beta }
    }

    pub fn apply(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> NodeId {
        g.layer_norm(x, bound[self.gamma.index()], bound[self.beta.index()])
    }
}

/// Multi-head scaled dot-product attention with separate Q/K/V/output
/// projections. A key mask (one flag per key row) removes padded segments
/// from every softmax.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub n_heads: usize,
    pub d_model: usize,
}

impl MultiHeadAttention {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha20Rng,
        name: &str,
        d_model: usize,
        n_heads: usize,
    ) -> Self {
        Self {
            wq: Linear::init(store, rng, &format!("{name}.q"), d_model, d_model, 0.0),
            wk: Linear::init(store, rng, &format!("{name}.k"), d_model, d_model, 0.0),
            wv: Linear::init(store, rng, &format!("{name}.v"), d_model, d_model, 0.0),
            wo: Linear::init(store, rng, &format!("{name}.o"), d_model, d_model, 0.0),
            n_heads,
            d_model,
        }
    }

    pub fn apply(
        &self,
        g: &mut Graph,
        bound: &Bound,
        queries: NodeId,
        keys_values: NodeId,
        key_mask: Option<&Arc<Vec<bool>>>,
    ) -> NodeId {
        let q = self.wq.apply(g, bound, queries);
        let k = self.wk.apply(g, bound, keys_values);
        let v = self.wv.apply(g, bound, keys_values);

        let d_head = self.d_model / self.n_heads;
        let scale = 1.0 / (d_head as f64).sqrt();
        let mut heads = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let (from, to) = (h * d_head, (h + 1) * d_head);
            let qh = g.slice_cols(q, from, to);
            let kh = g.slice_cols(k, from, to);
            let vh = g.slice_cols(v, from, to);
            let kht = g.transpose(kh);
            let scores = g.matmul(qh, kht);
            let scores = g.scale(scores, scale);
            let attn = g.row_softmax(scores, key_mask.cloned());
            heads.push(g.matmul(attn, vh));
        }
        let merged = heads
            .into_iter()
            .reduce(|acc, h| g.concat_cols(acc, h))
            .expect("at least one head");
        self.wo.apply(g, bound, merged)
    }
}

/// One pre-norm residual encoder layer: attention sublayer plus a
/// feed-forward sublayer of width `4 * d_model`.
///
/// Self-attention layers normalize the single input stream once;
/// cross-attention layers keep a separate norm for the key/value stream.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub norm_q: LayerNorm,
    pub norm_kv: Option<LayerNorm>,
    pub attn: MultiHeadAttention,
    pub norm_ffn: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
}

impl EncoderLayer {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha20Rng,
        name: &str,
        d_model: usize,
        n_heads: usize,
        cross: bool,
    ) -> Self {
        Self {
            norm_q: LayerNorm::init(store, &format!("{name}.norm_q"), d_model),
            norm_kv: cross.then(|| LayerNorm::init(store, &format!("{name}.norm_kv"), d_model)),
            attn: MultiHeadAttention::init(store, rng, &format!("{name}.attn"), d_model, n_heads),
            norm_ffn: LayerNorm::init(store, &format!("{name}.norm_ffn"), d_model),
            ffn_in: Linear::init(
                store,
                rng,
                &format!("{name}.ffn_in"),
                d_model,
                4 * d_model,
                0.0,
            ),
            ffn_out: Linear::init(
                store,
                rng,
                &format!("{name}.ffn_out"),
                4 * d_model,
                d_model,
                0.0,
            ),
        }
    }

    /// `kv = None` means self-attention over `x`.
    pub fn apply(
        &self,
        g: &mut Graph,
        bound: &Bound,
        x: NodeId,
        kv: Option<NodeId>,
        key_mask: Option<&Arc<Vec<bool>>>,
        dropout: &mut dyn FnMut(&mut Graph, NodeId) -> NodeId,
    ) -> NodeId {
        let qn = self.norm_q.apply(g, bound, x);
        let kvn = match (kv, &self.norm_kv) {
            (Some(kv), Some(norm)) => norm.apply(g, bound, kv),
            (None, _) => qn,
            (Some(_), None) => unreachable!("cross layer built without a kv norm"),
        };
        let attended = self.attn.apply(g, bound, qn, kvn, key_mask);
        let attended = dropout(g, attended);
        let x = g.add(x, attended);

        let h = self.norm_ffn.apply(g, bound, x);
        let h = self.ffn_in.apply(g, bound, h);
        let h = g.relu(h);
        let h = self.ffn_out.apply(g, bound, h);
        let h = dropout(g, h);
        g.add(x, h)
    }
}

/// Three-layer MLP head (two hidden ReLU layers, then a linear output).
#[derive(Debug, Clone)]
pub struct MlpHead {
    pub l1: Linear,
    pub l2: Linear,
    pub l3: Linear,
}

impl MlpHead {
    pub fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha20Rng,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        final_bias: f64,
    ) -> Self {
        Self {
            l1: Linear::init(store, rng, &format!("{name}.l1"), in_dim, hidden, 0.0),
            l2: Linear::init(store, rng, &format!("{name}.l2"), hidden, hidden, 0.0),
            l3: Linear::init(store, rng, &format!("{name}.l3"), hidden, out_dim, final_bias),
        }
    }

    /// Pre-activation output of the final layer.
    pub fn apply(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> NodeId {
        let h = self.l1.apply(g, bound, x);
        let h = g.relu(h);
        let h = self.l2.apply(g, bound, h);
        let h = g.relu(h);
        self.l3.apply(g, bound, h)
    }
}

/// Fixed sinusoidal positional encodings, `[t, 2i] = sin`, `[t, 2i+1] = cos`.
pub fn sinusoidal_encoding(t_count: usize, d_model: usize) -> Array2<f64> {
    let mut pe = Array2::zeros((t_count, d_model));
    for t in 0..t_count {
        for i in 0..d_model / 2 {
            let rate = 1.0 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            pe[(t, 2 * i)] = (t as f64 * rate).sin();
            pe[(t, 2 * i + 1)] = (t as f64 * rate).cos();
        }
        if d_model % 2 == 1 {
            let i = d_model / 2;
            let rate = 1.0 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            pe[(t, d_model - 1)] = (t as f64 * rate).sin();
        }
    }
    pe
}
