//! Model hyperparameters and the per-segment output bundle.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ModelError;

/// Which input modalities the model consumes.
///
/// Serialized as a compact string such as `"A&V&C"`, matching the ablation
/// axis notation used in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModalitySet {
    pub visual: bool,
    pub audio: bool,
    pub caption: bool,
}

impl ModalitySet {
    pub const ALL: ModalitySet = ModalitySet {
        visual: true,
        audio: true,
        caption: true,
    };

    pub fn count(&self) -> usize {
        usize::from(self.visual) + usize::from(self.audio) + usize::from(self.caption)
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Both primary (audio + visual) streams present, so the uni-modal
    /// branch heads and the alignment losses apply.
    pub fn has_uni_branches(&self) -> bool {
        self.visual && self.audio
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.audio {
            parts.push("A");
        }
        if self.visual {
            parts.push("V");
        }
        if self.caption {
            parts.push("C");
        }
        write!(f, "{}", parts.join("&"))
    }
}

impl FromStr for ModalitySet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = ModalitySet {
            visual: false,
            audio: false,
            caption: false,
        };
        for token in s.split(['&', ',', '+']) {
            match token.trim() {
                "A" | "a" | "audio" => set.audio = true,
                "V" | "v" | "visual" => set.visual = true,
                "C" | "c" | "caption" => set.caption = true,
                "" => {}
                other => return Err(format!("unknown modality token {other:?}")),
            }
        }
        if set.is_empty() {
            return Err("modality set must not be empty".into());
        }
        Ok(set)
    }
}

impl Serialize for ModalitySet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ModalitySet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn default_d_model() -> usize {
    512
}
fn default_layers() -> usize {
    3
}
fn default_heads() -> usize {
    8
}
fn default_dropout() -> f64 {
    0.1
}
fn default_input_dims() -> (usize, usize, usize) {
    (512, 2048, 384)
}
fn default_true() -> bool {
    true
}
fn default_modalities() -> ModalitySet {
    ModalitySet::ALL
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_d_model")]
    pub d_model: usize,
    #[serde(default = "default_layers")]
    pub n_self_layers: usize,
    #[serde(default = "default_layers")]
    pub n_caption_layers: usize,
    #[serde(default = "default_layers")]
    pub n_fusion_layers: usize,
    #[serde(default = "default_heads")]
    pub n_heads: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// (visual, audio, caption) input feature widths.
    #[serde(default = "default_input_dims")]
    pub input_dims: (usize, usize, usize),
    /// Hidden width of the head MLPs; `None` uses `d_model`.
    #[serde(default)]
    pub head_hidden: Option<usize>,
    /// Fixed sinusoidal positional encodings added after projection.
    /// Disabled only for equivariance diagnostics.
    #[serde(default = "default_true")]
    pub positional_encoding: bool,
    #[serde(default = "default_modalities")]
    pub modalities: ModalitySet,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: default_d_model(),
            n_self_layers: default_layers(),
            n_caption_layers: default_layers(),
            n_fusion_layers: default_layers(),
            n_heads: default_heads(),
            dropout: default_dropout(),
            input_dims: default_input_dims(),
            head_hidden: None,
            positional_encoding: true,
            modalities: ModalitySet::ALL,
        }
    }
}

impl ModelConfig {
    pub fn head_hidden_width(&self) -> usize {
        self.head_hidden.unwrap_or(self.d_model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: String| Err(ModelError::InvalidConfig { reason });
        if self.d_model == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_self_layers == 0 || self.n_caption_layers == 0 || self.n_fusion_layers == 0 {
            return fail("all layer counts must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if self.modalities.is_empty() {
            return fail("modality set must not be empty".into());
        }
        let (dv, da, dc) = self.input_dims;
        if self.modalities.visual && dv == 0
            || self.modalities.audio && da == 0
            || self.modalities.caption && dc == 0
        {
            return fail(format!(
                "input dims {:?} must be positive for every enabled modality ({})",
                self.input_dims, self.modalities
            ));
        }
        Ok(())
    }
}

/// Per-segment model predictions for one video.
///
/// The branch probabilities exist only when both the audio and visual
/// streams are enabled; the fused probability and the boundary offsets are
/// always produced. Offsets are in seconds and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub prob_visual: Option<Vec<f64>>,
    pub prob_audio: Option<Vec<f64>>,
    pub prob_fused: Vec<f64>,
    pub start_offset_pred: Vec<f64>,
    pub end_offset_pred: Vec<f64>,
}

impl ModelOutput {
    pub fn num_segments(&self) -> usize {
        self.prob_fused.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modalities_parse_and_round_trip() {
        for s in ["A&V&C", "A&V", "A", "V", "C"] {
            let set: ModalitySet = s.parse().unwrap();
            assert_eq!(set.to_string(), s);
        }
        let set: ModalitySet = "V,C".parse().unwrap();
        assert!(set.visual && set.caption && !set.audio);
        assert!("X".parse::<ModalitySet>().is_err());
        assert!("".parse::<ModalitySet>().is_err());
    }

    #[test]
    fn config_validation_catches_bad_heads_and_dropout() {
        let cfg = ModelConfig {
            d_model: 100,
            n_heads: 8,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());

        let cfg = ModelConfig {
            dropout: 1.0,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_err());

        assert!(ModelConfig::default().validate().is_ok());
    }

    #[test]
    fn config_serde_defaults_apply() {
        let cfg: ModelConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ModelConfig::default());
        let cfg: ModelConfig = serde_json::from_str(r#"{"d_model": 64, "n_heads": 4}"#).unwrap();
        assert_eq!(cfg.d_model, 64);
        assert_eq!(cfg.n_self_layers, 3);
    }
}
