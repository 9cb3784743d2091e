//! Model assembly: projections, encoder stacks, fusion and heads, plus the
//! batched inference entry point.

use std::sync::Arc;

use ndarray::{s, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::blocks::{sinusoidal_encoding, Bound, EncoderLayer, Linear, LayerNorm, MlpHead};
use super::{ModalitySet, ModelConfig, ModelError, ModelOutput};
use crate::engine::{Graph, NodeId, ParamId, ParamStore};
use crate::temporal::VideoSample;

/// Initial bias of the regression head's output layer (seconds). Starting
/// from clearly positive offsets keeps the final rectifier out of its dead
/// zone and puts the initial interval width near typical clip scale, which
/// the slow end of the cosine schedule could not reach from zero.
const REGRESSION_BIAS_INIT: f64 = 20.0;

/// Which classification head to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Visual,
    Audio,
    Fused,
}

/// Whether a forward pass applies dropout.
pub enum ForwardMode<'r> {
    Inference,
    Train { rng: &'r mut ChaCha20Rng },
}

/// Two-layer perceptron mapping an input modality to the model width.
#[derive(Debug, Clone)]
struct Projection {
    l1: Linear,
    l2: Linear,
}

impl Projection {
    fn init(
        store: &mut ParamStore,
        rng: &mut ChaCha20Rng,
        name: &str,
        in_dim: usize,
        d_model: usize,
    ) -> Self {
        Self {
            l1: Linear::init(store, rng, &format!("{name}.l1"), in_dim, d_model, 0.0),
            l2: Linear::init(store, rng, &format!("{name}.l2"), d_model, d_model, 0.0),
        }
    }

    fn apply(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> NodeId {
        let h = self.l1.apply(g, bound, x);
        let h = g.relu(h);
        self.l2.apply(g, bound, h)
    }
}

/// Fused representation plus the post-fusion branch streams, as plain
/// matrices.
pub type EncodedMatrices = (Array2<f64>, Option<Array2<f64>>, Option<Array2<f64>>);

/// Per-modality projected matrices; disabled modalities come back `None`.
pub type ProjectedMatrices = (Option<Array2<f64>>, Option<Array2<f64>>, Option<Array2<f64>>);

/// Post-encoder stream nodes.
struct EncodedStreams {
    fused: NodeId,
    visual: Option<NodeId>,
    audio: Option<NodeId>,
}

/// Output nodes of one forward pass, all `[T x 1]` (padded length when a
/// mask is in play).
pub struct GraphOutputs {
    pub prob_visual: Option<NodeId>,
    pub prob_audio: Option<NodeId>,
    pub prob_fused: NodeId,
    pub pred_start: NodeId,
    pub pred_end: NodeId,
}

/// Per-segment feature matrices for one video (already aligned).
pub struct FeatureInput<'a> {
    pub visual: &'a Array2<f64>,
    pub audio: &'a Array2<f64>,
    pub caption: &'a Array2<f64>,
    pub caption_empty: &'a [bool],
}

impl<'a> FeatureInput<'a> {
    pub fn from_sample(sample: &'a VideoSample) -> Self {
        Self {
            visual: &sample.visual_features,
            audio: &sample.audio_features,
            caption: &sample.caption_features,
            caption_empty: &sample.caption_empty,
        }
    }
}

/// The localizer network. Owns its parameters; graphs are built per call.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    proj_visual: Option<Projection>,
    proj_audio: Option<Projection>,
    proj_caption: Option<Projection>,
    empty_caption: Option<ParamId>,
    self_visual: Vec<EncoderLayer>,
    self_audio: Vec<EncoderLayer>,
    self_caption: Vec<EncoderLayer>,
    caption_to_visual: Vec<EncoderLayer>,
    caption_to_audio: Vec<EncoderLayer>,
    fusion: Vec<(EncoderLayer, EncoderLayer)>,
    fusion_norm: Option<LayerNorm>,
    down_projection: Option<Linear>,
    head_visual: Option<MlpHead>,
    head_audio: Option<MlpHead>,
    head_fused: MlpHead,
    head_regression: MlpHead,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.d_model;
        let heads = config.n_heads;
        let (dv, da, dc) = config.input_dims;
        let m = config.modalities;

        let self_stack = |store: &mut ParamStore, rng: &mut ChaCha20Rng, name: &str| {
            (0..config.n_self_layers)
                .map(|i| EncoderLayer::init(store, rng, &format!("{name}.{i}"), d, heads, false))
                .collect::<Vec<_>>()
        };

        let proj_visual =
            m.visual.then(|| Projection::init(&mut store, &mut rng, "proj_visual", dv, d));
        let proj_audio =
            m.audio.then(|| Projection::init(&mut store, &mut rng, "proj_audio", da, d));
        let proj_caption =
            m.caption.then(|| Projection::init(&mut store, &mut rng, "proj_caption", dc, d));
        let empty_caption = m.caption.then(|| {
            let limit = (1.0 / dc as f64).sqrt();
            let row = Array2::from_shape_fn((1, dc), |_| rng.random_range(-limit..limit));
            store.add("empty_caption", row)
        });

        let self_visual = if m.visual {
            self_stack(&mut store, &mut rng, "self_visual")
        } else {
            Vec::new()
        };
        let self_audio = if m.audio {
            self_stack(&mut store, &mut rng, "self_audio")
        } else {
            Vec::new()
        };
        let self_caption = if m.caption {
            self_stack(&mut store, &mut rng, "self_caption")
        } else {
            Vec::new()
        };

        let cross_stack = |store: &mut ParamStore, rng: &mut ChaCha20Rng, name: &str| {
            (0..config.n_caption_layers)
                .map(|i| EncoderLayer::init(store, rng, &format!("{name}.{i}"), d, heads, true))
                .collect::<Vec<_>>()
        };
        let caption_to_visual = if m.caption && m.visual {
            cross_stack(&mut store, &mut rng, "caption_to_visual")
        } else {
            Vec::new()
        };
        let caption_to_audio = if m.caption && m.audio {
            cross_stack(&mut store, &mut rng, "caption_to_audio")
        } else {
            Vec::new()
        };

        let both_primary = m.visual && m.audio;
        let fusion = if both_primary {
            (0..config.n_fusion_layers)
                .map(|i| {
                    (
                        EncoderLayer::init(
                            &mut store,
                            &mut rng,
                            &format!("fusion_visual_from_audio.{i}"),
                            d,
                            heads,
                            true,
                        ),
                        EncoderLayer::init(
                            &mut store,
                            &mut rng,
                            &format!("fusion_audio_from_visual.{i}"),
                            d,
                            heads,
                            true,
                        ),
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        let fusion_norm =
            both_primary.then(|| LayerNorm::init(&mut store, "fusion_norm", 2 * d));
        let down_projection = both_primary
            .then(|| Linear::init(&mut store, &mut rng, "down_projection", 2 * d, d, 0.0));

        let hidden = config.head_hidden_width();
        let head_visual = both_primary
            .then(|| MlpHead::init(&mut store, &mut rng, "head_visual", d, hidden, 1, 0.0));
        let head_audio = both_primary
            .then(|| MlpHead::init(&mut store, &mut rng, "head_audio", d, hidden, 1, 0.0));
        let head_fused = MlpHead::init(&mut store, &mut rng, "head_fused", d, hidden, 1, 0.0);
        let head_regression = MlpHead::init(
            &mut store,
            &mut rng,
            "head_regression",
            d,
            hidden,
            2,
            REGRESSION_BIAS_INIT,
        );

        Ok(Self {
            config,
            params: store,
            proj_visual,
            proj_audio,
            proj_caption,
            empty_caption,
            self_visual,
            self_audio,
            self_caption,
            caption_to_visual,
            caption_to_audio,
            fusion,
            fusion_norm,
            down_projection,
            head_visual,
            head_audio,
            head_fused,
            head_regression,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn modalities(&self) -> ModalitySet {
        self.config.modalities
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.total_elements()
    }

    /// Inserts every parameter into the graph, as leaves when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        self.params
            .iter()
            .map(|(_, _, v)| {
                if trainable {
                    g.leaf(v.clone())
                } else {
                    g.constant(v.clone())
                }
            })
            .collect()
    }

    fn check_features(&self, features: &FeatureInput<'_>) -> Result<usize, ModelError> {
        let t = features.visual.nrows();
        if features.audio.nrows() != t || features.caption.nrows() != t {
            return Err(ModelError::ShapeMismatch {
                what: "feature row counts".into(),
                expected: format!("{t} rows in every modality"),
                got: format!(
                    "visual {}, audio {}, caption {}",
                    features.visual.nrows(),
                    features.audio.nrows(),
                    features.caption.nrows()
                ),
            });
        }
        let (dv, da, dc) = self.config.input_dims;
        let m = self.config.modalities;
        for (enabled, name, got, want) in [
            (m.visual, "visual", features.visual.ncols(), dv),
            (m.audio, "audio", features.audio.ncols(), da),
            (m.caption, "caption", features.caption.ncols(), dc),
        ] {
            if enabled && got != want {
                return Err(ModelError::ShapeMismatch {
                    what: format!("{name} feature width"),
                    expected: want.to_string(),
                    got: got.to_string(),
                });
            }
        }
        if features.caption_empty.len() != t {
            return Err(ModelError::ShapeMismatch {
                what: "caption_empty flags".into(),
                expected: t.to_string(),
                got: features.caption_empty.len().to_string(),
            });
        }
        Ok(t)
    }

    /// Builds the full forward pass on `g`. `key_mask` marks real (true) vs
    /// padded (false) segments; `None` means nothing is padded.
    pub fn forward_graph(
        &self,
        g: &mut Graph,
        bound: &Bound,
        features: &FeatureInput<'_>,
        key_mask: Option<Arc<Vec<bool>>>,
        mode: &mut ForwardMode<'_>,
    ) -> Result<GraphOutputs, ModelError> {
        let t = self.check_features(features)?;
        if let Some(mask) = &key_mask {
            if mask.len() != t {
                return Err(ModelError::MaskMismatch {
                    mask_len: mask.len(),
                    padded_len: t,
                });
            }
        }
        let m = self.config.modalities;
        let d = self.config.d_model;
        let dropout_p = self.config.dropout;

        let dropout = |g: &mut Graph, x: NodeId, mode: &mut ForwardMode<'_>| -> NodeId {
            match mode {
                ForwardMode::Inference => x,
                ForwardMode::Train { rng } => {
                    if dropout_p == 0.0 {
                        return x;
                    }
                    let keep = 1.0 - dropout_p;
                    let dim = g.value(x).dim();
                    let mask = Array2::from_shape_fn(dim, |_| {
                        if rng.random_range(0.0..1.0) < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    let mask = g.constant(mask);
                    g.mul(x, mask)
                }
            }
        };

        // Projections to the shared width, then positional encodings.
        let pos = self
            .config
            .positional_encoding
            .then(|| g.constant(sinusoidal_encoding(t, d)));
        let project = |g: &mut Graph,
                           proj: &Projection,
                           input: NodeId|
         -> NodeId {
            let h = proj.apply(g, bound, input);
            match pos {
                Some(p) => g.add(h, p),
                None => h,
            }
        };

        let visual = if m.visual {
            let input = g.constant(features.visual.clone());
            Some(project(g, self.proj_visual.as_ref().unwrap(), input))
        } else {
            None
        };
        let audio = if m.audio {
            let input = g.constant(features.audio.clone());
            Some(project(g, self.proj_audio.as_ref().unwrap(), input))
        } else {
            None
        };
        let caption = if m.caption {
            let raw = self.substitute_empty_caption(g, bound, features);
            Some(project(g, self.proj_caption.as_ref().unwrap(), raw))
        } else {
            None
        };

        let streams = self.encode_streams(
            g,
            bound,
            visual,
            audio,
            caption,
            key_mask.as_ref(),
            &mut |g, x| dropout(g, x, mode),
        );
        let (fused, visual, audio) = (streams.fused, streams.visual, streams.audio);

        let prob_visual = match (&self.head_visual, visual) {
            (Some(head), Some(v)) => {
                let logits = head.apply(g, bound, v);
                Some(g.sigmoid(logits))
            }
            _ => None,
        };
        let prob_audio = match (&self.head_audio, audio) {
            (Some(head), Some(a)) => {
                let logits = head.apply(g, bound, a);
                Some(g.sigmoid(logits))
            }
            _ => None,
        };
        let fused_logits = self.head_fused.apply(g, bound, fused);
        let prob_fused = g.sigmoid(fused_logits);
        let raw_offsets = self.head_regression.apply(g, bound, fused);
        let offsets = g.relu(raw_offsets);
        let pred_start = g.slice_cols(offsets, 0, 1);
        let pred_end = g.slice_cols(offsets, 1, 2);

        Ok(GraphOutputs {
            prob_visual,
            prob_audio,
            prob_fused,
            pred_start,
            pred_end,
        })
    }

    /// Stages 1-4 of the encoder over already-projected streams: per-stream
    /// self-attention, caption cross-attention into the primary streams,
    /// symmetric audio-visual fusion, then concat + down-projection (or a
    /// pass-through in reduced-modality configurations).
    #[allow(clippy::too_many_arguments)]
    fn encode_streams(
        &self,
        g: &mut Graph,
        bound: &Bound,
        mut visual: Option<NodeId>,
        mut audio: Option<NodeId>,
        mut caption: Option<NodeId>,
        mask_ref: Option<&Arc<Vec<bool>>>,
        dropout: &mut dyn FnMut(&mut Graph, NodeId) -> NodeId,
    ) -> EncodedStreams {
        // Stage 1: per-modality temporal self-attention.
        for layer in &self.self_visual {
            let v = visual.unwrap();
            visual = Some(layer.apply(g, bound, v, None, mask_ref, dropout));
        }
        for layer in &self.self_audio {
            let a = audio.unwrap();
            audio = Some(layer.apply(g, bound, a, None, mask_ref, dropout));
        }
        for layer in &self.self_caption {
            let c = caption.unwrap();
            caption = Some(layer.apply(g, bound, c, None, mask_ref, dropout));
        }

        // Stage 2: caption enhancement of the primary streams (captions act
        // as keys/values; the enhanced stream keeps its residual identity).
        if let Some(c) = caption {
            for layer in &self.caption_to_visual {
                let v = visual.unwrap();
                visual = Some(layer.apply(g, bound, v, Some(c), mask_ref, dropout));
            }
            for layer in &self.caption_to_audio {
                let a = audio.unwrap();
                audio = Some(layer.apply(g, bound, a, Some(c), mask_ref, dropout));
            }
        }

        // Stage 3: symmetric audio-visual cross-attention; both directions
        // read the pre-layer streams.
        for (v_from_a, a_from_v) in &self.fusion {
            let (v, a) = (visual.unwrap(), audio.unwrap());
            let v_new = v_from_a.apply(g, bound, v, Some(a), mask_ref, dropout);
            let a_new = a_from_v.apply(g, bound, a, Some(v), mask_ref, dropout);
            visual = Some(v_new);
            audio = Some(a_new);
        }

        // Stage 4: concatenate and map back down (or pass the single stream
        // straight through in reduced-modality configurations).
        let fused = match (visual, audio, caption) {
            (Some(v), Some(a), _) => {
                let cat = g.concat_cols(v, a);
                let normed = self.fusion_norm.as_ref().unwrap().apply(g, bound, cat);
                self.down_projection.as_ref().unwrap().apply(g, bound, normed)
            }
            (Some(v), None, _) => v,
            (None, Some(a), _) => a,
            (None, None, Some(c)) => c,
            (None, None, None) => unreachable!("validated non-empty modality set"),
        };
        EncodedStreams {
            fused,
            visual,
            audio,
        }
    }

    /// Runs the encoder over already-projected `[T x d]` streams without
    /// dropout, returning the fused representation plus the post-fusion
    /// branch streams consumed by the uni-modal heads. Enabled modalities
    /// must be supplied; `padding_mask` marks real segments when the input
    /// is padded.
    pub fn encode(
        &self,
        visual: Option<&Array2<f64>>,
        audio: Option<&Array2<f64>>,
        caption: Option<&Array2<f64>>,
        padding_mask: Option<&[bool]>,
    ) -> Result<EncodedMatrices, ModelError> {
        let m = self.config.modalities;
        let d = self.config.d_model;
        let mut t_seen: Option<usize> = None;
        for (enabled, name, stream) in [
            (m.visual, "visual", &visual),
            (m.audio, "audio", &audio),
            (m.caption, "caption", &caption),
        ] {
            match (enabled, stream) {
                (true, Some(s)) => {
                    if s.ncols() != d {
                        return Err(ModelError::ShapeMismatch {
                            what: format!("projected {name} stream width"),
                            expected: d.to_string(),
                            got: s.ncols().to_string(),
                        });
                    }
                    if let Some(t) = t_seen {
                        if s.nrows() != t {
                            return Err(ModelError::ShapeMismatch {
                                what: format!("{name} stream rows"),
                                expected: t.to_string(),
                                got: s.nrows().to_string(),
                            });
                        }
                    }
                    t_seen = Some(s.nrows());
                }
                (true, None) => {
                    return Err(ModelError::ShapeMismatch {
                        what: format!("{name} stream"),
                        expected: "present (modality enabled)".into(),
                        got: "missing".into(),
                    })
                }
                (false, _) => {}
            }
        }
        let t = t_seen.expect("validated non-empty modality set");
        let mask = match padding_mask {
            Some(flags) if flags.len() != t => {
                return Err(ModelError::MaskMismatch {
                    mask_len: flags.len(),
                    padded_len: t,
                })
            }
            Some(flags) => Some(Arc::new(flags.to_vec())),
            None => None,
        };

        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let as_node = |g: &mut Graph, s: Option<&Array2<f64>>, enabled: bool| {
            enabled.then(|| g.constant(s.unwrap().clone()))
        };
        let v = as_node(&mut g, visual, m.visual);
        let a = as_node(&mut g, audio, m.audio);
        let c = as_node(&mut g, caption, m.caption);
        let streams =
            self.encode_streams(&mut g, &bound, v, a, c, mask.as_ref(), &mut |_g, x| x);
        Ok((
            g.value(streams.fused).clone(),
            streams.visual.map(|id| g.value(id).clone()),
            streams.audio.map(|id| g.value(id).clone()),
        ))
    }

    fn substitute_empty_caption(
        &self,
        g: &mut Graph,
        bound: &Bound,
        features: &FeatureInput<'_>,
    ) -> NodeId {
        let raw = g.constant(features.caption.clone());
        if !features.caption_empty.iter().any(|&e| e) {
            return raw;
        }
        let t = features.caption.nrows();
        let dc = features.caption.ncols();
        let mut keep = Array2::ones((t, dc));
        let mut empty_col = Array2::zeros((t, 1));
        for (i, &is_empty) in features.caption_empty.iter().enumerate() {
            if is_empty {
                keep.row_mut(i).fill(0.0);
                empty_col[(i, 0)] = 1.0;
            }
        }
        let keep = g.constant(keep);
        let empty_col = g.constant(empty_col);
        let kept = g.mul(raw, keep);
        let empty_rows = g.matmul(empty_col, bound[self.empty_caption.unwrap().index()]);
        g.add(kept, empty_rows)
    }

    /// Batched inference: pads every sample to the longest, runs the masked
    /// forward pass without dropout, and strips the padding again.
    pub fn forward(&self, samples: &[&VideoSample]) -> Result<Vec<ModelOutput>, ModelError> {
        let max_t = samples.iter().map(|s| s.num_segments()).max().unwrap_or(0);
        let mut outputs = Vec::with_capacity(samples.len());
        for sample in samples {
            let t = sample.num_segments();
            if t == 0 {
                outputs.push(ModelOutput {
                    prob_visual: self.config.modalities.has_uni_branches().then(Vec::new),
                    prob_audio: self.config.modalities.has_uni_branches().then(Vec::new),
                    prob_fused: Vec::new(),
                    start_offset_pred: Vec::new(),
                    end_offset_pred: Vec::new(),
                });
                continue;
            }
            let pad_to = max_t.max(t);
            let pad = |m: &Array2<f64>| -> Array2<f64> {
                if m.nrows() == pad_to {
                    return m.clone();
                }
                let mut out = Array2::zeros((pad_to, m.ncols()));
                out.slice_mut(s![..m.nrows(), ..]).assign(m);
                out
            };
            let visual = pad(&sample.visual_features);
            let audio = pad(&sample.audio_features);
            let caption = pad(&sample.caption_features);
            let mut caption_empty = sample.caption_empty.clone();
            caption_empty.resize(pad_to, false);
            let mut mask = vec![true; t];
            mask.resize(pad_to, false);

            let mut g = Graph::new();
            let bound = self.bind(&mut g, false);
            let outs = self.forward_graph(
                &mut g,
                &bound,
                &FeatureInput {
                    visual: &visual,
                    audio: &audio,
                    caption: &caption,
                    caption_empty: &caption_empty,
                },
                Some(Arc::new(mask)),
                &mut ForwardMode::Inference,
            )?;
            outputs.push(extract_output(&g, &outs, t));
        }
        Ok(outputs)
    }

    /// Convenience single-video inference without padding.
    pub fn forward_single(&self, sample: &VideoSample) -> Result<ModelOutput, ModelError> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let t = sample.num_segments();
        if t == 0 {
            return Ok(ModelOutput {
                prob_visual: self.config.modalities.has_uni_branches().then(Vec::new),
                prob_audio: self.config.modalities.has_uni_branches().then(Vec::new),
                prob_fused: Vec::new(),
                start_offset_pred: Vec::new(),
                end_offset_pred: Vec::new(),
            });
        }
        let outs = self.forward_graph(
            &mut g,
            &bound,
            &FeatureInput::from_sample(sample),
            None,
            &mut ForwardMode::Inference,
        )?;
        Ok(extract_output(&g, &outs, t))
    }

    /// Maps raw per-modality features to three `[T x d]` matrices (enabled
    /// modalities only; disabled slots return `None`).
    pub fn project_inputs(
        &self,
        visual: &Array2<f64>,
        audio: &Array2<f64>,
        caption: &Array2<f64>,
    ) -> Result<ProjectedMatrices, ModelError> {
        let empty = vec![false; visual.nrows()];
        self.check_features(&FeatureInput {
            visual,
            audio,
            caption,
            caption_empty: &empty,
        })?;
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let mut run = |proj: &Option<Projection>, input: &Array2<f64>| {
            proj.as_ref().map(|p| {
                let x = g.constant(input.clone());
                let out = p.apply(&mut g, &bound, x);
                g.value(out).clone()
            })
        };
        let v = run(&self.proj_visual, visual);
        let a = run(&self.proj_audio, audio);
        let c = run(&self.proj_caption, caption);
        Ok((v, a, c))
    }

    /// Applies one classification head to `[T x d]` features, returning
    /// per-segment probabilities.
    pub fn classify_branch(
        &self,
        features: &Array2<f64>,
        branch: Branch,
    ) -> Result<Vec<f64>, ModelError> {
        if features.ncols() != self.config.d_model {
            return Err(ModelError::ShapeMismatch {
                what: "classify_branch input width".into(),
                expected: self.config.d_model.to_string(),
                got: features.ncols().to_string(),
            });
        }
        let head = match branch {
            Branch::Visual => self.head_visual.as_ref().ok_or(ModelError::InvalidConfig {
                reason: "visual branch head absent in this modality configuration".into(),
            })?,
            Branch::Audio => self.head_audio.as_ref().ok_or(ModelError::InvalidConfig {
                reason: "audio branch head absent in this modality configuration".into(),
            })?,
            Branch::Fused => &self.head_fused,
        };
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let x = g.constant(features.clone());
        let logits = head.apply(&mut g, &bound, x);
        let probs = g.sigmoid(logits);
        Ok(g.value(probs).column(0).to_vec())
    }

    /// Applies the regression head to fused `[T x d]` features, returning
    /// non-negative (start, end) offsets in seconds.
    pub fn regress_offsets(
        &self,
        fused: &Array2<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        if fused.ncols() != self.config.d_model {
            return Err(ModelError::ShapeMismatch {
                what: "regress_offsets input width".into(),
                expected: self.config.d_model.to_string(),
                got: fused.ncols().to_string(),
            });
        }
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let x = g.constant(fused.clone());
        let raw = self.head_regression.apply(&mut g, &bound, x);
        let rect = g.relu(raw);
        let v = g.value(rect);
        Ok((v.column(0).to_vec(), v.column(1).to_vec()))
    }
}

fn extract_output(g: &Graph, outs: &GraphOutputs, t_real: usize) -> ModelOutput {
    let col = |id: NodeId| -> Vec<f64> { g.value(id).column(0).iter().take(t_real).copied().collect() };
    ModelOutput {
        prob_visual: outs.prob_visual.map(col),
        prob_audio: outs.prob_audio.map(col),
        prob_fused: col(outs.prob_fused),
        start_offset_pred: col(outs.pred_start),
        end_offset_pred: col(outs.pred_end),
    }
}
