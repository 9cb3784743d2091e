//! Command implementations behind the `repurpose` binary: synthetic corpus
//! generation, training, evaluation, single-video prediction and ablation
//! sweeps. Every command writes its resolved config and a run record under
//! the output directory so runs are reproducible byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::{
    generate_synthetic, load_manifest_videos, read_features, write_corpus, CorpusPaths, DataError,
    LoadMode, Modality, SyntheticConfig, SynthReport,
};
use crate::eval::{
    decode, evaluate_model, merge_duplicate_candidates, soft_nms, top_k_for_duration, EvalError,
    EvalParams, EvalReport,
};
use crate::model::{load_checkpoint, save_checkpoint, ModelError};
use crate::temporal::VideoSample;
use crate::train::{train, TrainConfig, TrainError, TrainResult};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {reason}")]
    Usage { reason: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Stable exit-code contract: 0 success, 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => 2,
            CliError::Train(TrainError::NonFiniteLoss { .. }) => 4,
            CliError::Train(TrainError::InvalidConfig { .. })
            | CliError::Train(TrainError::InvalidSchedule { .. }) => 2,
            CliError::Data(DataError::InvalidConfig { .. }) => 2,
            _ => 3,
        }
    }

    fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

/// Provenance for one command invocation: the resolved config (round-trip
/// stable), a content hash over the inputs, and the artifact paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub command: String,
    pub config_snapshot: serde_json::Value,
    pub input_hash: String,
    pub artifacts: BTreeMap<String, String>,
}

impl RunRecord {
    fn new(
        command: &str,
        config_snapshot: serde_json::Value,
        input_hash: String,
    ) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        hasher.update(config_snapshot.to_string().as_bytes());
        hasher.update(input_hash.as_bytes());
        let run_id = hex::encode(&hasher.finalize()[..6]);
        Self {
            run_id,
            command: command.to_string(),
            config_snapshot,
            input_hash,
            artifacts: BTreeMap::new(),
        }
    }

    /// Records an artifact path relative to `base` (the run directory), so
    /// records hash identically across relocated runs.
    fn add_artifact(&mut self, name: &str, base: &Path, path: &Path) {
        let rel = path.strip_prefix(base).unwrap_or(path);
        self.artifacts
            .insert(name.to_string(), rel.to_string_lossy().into_owned());
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        write_bytes(path, &serde_json::to_vec_pretty(self).expect("record serializes"))
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    fs::write(path, bytes).map_err(CliError::io(path))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_files(paths: &[&Path]) -> Result<String, CliError> {
    let mut hasher = Sha256::new();
    for path in paths {
        hasher.update(path.to_string_lossy().as_bytes());
        let bytes = fs::read(path).map_err(CliError::io(*path))?;
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Applies one `--set key=value` override onto a JSON config tree. Keys are
/// dot-separated; the shorthand lambda names (with a Greek lambda or the
/// word) map onto the serialized `lambdaN` fields.
pub fn apply_override(config: &mut serde_json::Value, assignment: &str) -> Result<(), CliError> {
    let Some((raw_key, raw_value)) = assignment.split_once('=') else {
        return Err(CliError::Usage {
            reason: format!("--set expects key=value, got {assignment:?}"),
        });
    };
    let key = raw_key.trim().replace('\u{03bb}', "lambda");
    let value: serde_json::Value = match serde_json::from_str(raw_value) {
        Ok(v) => v,
        Err(_) => serde_json::Value::String(raw_value.to_string()),
    };

    let mut cursor = config;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = cursor.as_object_mut().ok_or_else(|| CliError::Usage {
            reason: format!("--set path {key:?} descends into a non-object"),
        })?;
        if i + 1 == parts.len() {
            map.insert((*part).to_string(), value);
            return Ok(());
        }
        cursor = map
            .entry((*part).to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!("split produced at least one part")
}

/// Loads a typed config: file if given, defaults otherwise, then `--set`
/// overrides and an optional seed override. Returns the parsed config plus
/// its canonical snapshot.
pub fn resolve_config<T: DeserializeOwned + Serialize + Default>(
    config_path: Option<&Path>,
    sets: &[String],
    seed_override: Option<u64>,
) -> Result<(T, serde_json::Value), CliError> {
    let mut value = match config_path {
        Some(path) => {
            let bytes = fs::read(path).map_err(CliError::io(path))?;
            serde_json::from_slice(&bytes).map_err(|e| CliError::Usage {
                reason: format!("config {} does not parse: {e}", path.display()),
            })?
        }
        None => serde_json::to_value(T::default()).expect("default config serializes"),
    };
    for assignment in sets {
        apply_override(&mut value, assignment)?;
    }
    if let Some(seed) = seed_override {
        apply_override(&mut value, &format!("seed={seed}"))?;
    }
    let parsed: T = serde_json::from_value(value).map_err(|e| CliError::Usage {
        reason: format!("config does not validate: {e}"),
    })?;
    let snapshot = serde_json::to_value(&parsed).expect("config re-serializes");
    Ok((parsed, snapshot))
}

pub struct SynthOutput {
    pub paths: CorpusPaths,
    pub report: SynthReport,
    pub record: RunRecord,
}

/// Generates a synthetic corpus and writes features, annotations and 8/1/1
/// manifests under `out_dir`.
pub fn cmd_synth(
    config: SyntheticConfig,
    snapshot: serde_json::Value,
    out_dir: &Path,
) -> Result<SynthOutput, CliError> {
    let (samples, report) = generate_synthetic(&config)?;
    let paths = write_corpus(&samples, out_dir, (8, 1, 1), config.seed)?;

    write_bytes(
        &out_dir.join("config.json"),
        &serde_json::to_vec_pretty(&snapshot).expect("snapshot serializes"),
    )?;
    write_bytes(
        &out_dir.join("stats.json"),
        &serde_json::to_vec_pretty(&report).expect("report serializes"),
    )?;

    let mut record = RunRecord::new("synth", snapshot, sha256_hex(&[]));
    record.add_artifact("train_manifest", out_dir, &paths.train_manifest);
    record.add_artifact("val_manifest", out_dir, &paths.val_manifest);
    record.add_artifact("test_manifest", out_dir, &paths.test_manifest);
    record.add_artifact("stats", out_dir, &out_dir.join("stats.json"));
    record.save(&out_dir.join("run_record.json"))?;
    Ok(SynthOutput {
        paths,
        report,
        record,
    })
}

pub struct TrainOutput {
    pub result: TrainResult,
    pub checkpoint_path: PathBuf,
    pub record: RunRecord,
}

/// Trains per the config against `<data>/train.json` and `<data>/val.json`,
/// writing the best checkpoint, JSONL logs and the final validation report.
pub fn cmd_train(
    config: TrainConfig,
    snapshot: serde_json::Value,
    data_dir: &Path,
    out_dir: &Path,
) -> Result<TrainOutput, CliError> {
    let train_manifest = data_dir.join("train.json");
    let val_manifest = data_dir.join("val.json");
    for path in [&train_manifest, &val_manifest] {
        if !path.exists() {
            return Err(CliError::Data(DataError::MissingPath { path: path.clone() }));
        }
    }
    let train_videos: Vec<VideoSample> =
        load_manifest_videos(&train_manifest, config.segment_length, LoadMode::Strict)?
            .into_iter()
            .map(|o| o.sample)
            .collect();
    let val_videos: Vec<VideoSample> =
        load_manifest_videos(&val_manifest, config.segment_length, LoadMode::Strict)?
            .into_iter()
            .map(|o| o.sample)
            .collect();

    let result = train(&config, &train_videos, &val_videos)?;

    fs::create_dir_all(out_dir.join("logs")).map_err(CliError::io(out_dir.join("logs")))?;
    let mut step_log = String::new();
    for s in &result.steps {
        step_log.push_str(&serde_json::to_string(s).expect("step serializes"));
        step_log.push('\n');
    }
    write_bytes(&out_dir.join("logs/train_log.jsonl"), step_log.as_bytes())?;
    let mut epoch_log = String::new();
    for e in &result.epochs {
        epoch_log.push_str(&serde_json::to_string(e).expect("epoch serializes"));
        epoch_log.push('\n');
    }
    write_bytes(&out_dir.join("logs/val_history.jsonl"), epoch_log.as_bytes())?;

    let checkpoint_path = out_dir.join("checkpoint.bin");
    save_checkpoint(&checkpoint_path, &result.best_model)?;

    let best_report = evaluate_model(&result.best_model, &val_videos, &config.eval)?;
    write_bytes(
        &out_dir.join("reports/val_report.json"),
        &serde_json::to_vec_pretty(&best_report).expect("report serializes"),
    )?;
    write_bytes(
        &out_dir.join("config.json"),
        &serde_json::to_vec_pretty(&snapshot).expect("snapshot serializes"),
    )?;

    let input_hash = hash_files(&[&train_manifest, &val_manifest])?;
    let mut record = RunRecord::new("train", snapshot, input_hash);
    record.add_artifact("checkpoint", out_dir, &checkpoint_path);
    record.add_artifact("train_log", out_dir, &out_dir.join("logs/train_log.jsonl"));
    record.add_artifact("val_history", out_dir, &out_dir.join("logs/val_history.jsonl"));
    record.add_artifact("val_report", out_dir, &out_dir.join("reports/val_report.json"));
    record.save(&out_dir.join("run_record.json"))?;

    Ok(TrainOutput {
        result,
        checkpoint_path,
        record,
    })
}

pub struct EvalOutput {
    pub report: EvalReport,
    pub report_path: PathBuf,
    pub record: RunRecord,
}

/// Evaluates a checkpoint against a manifest, writing the report as JSON
/// and as an aligned text table.
pub fn cmd_eval(
    checkpoint_path: &Path,
    manifest_path: &Path,
    out_dir: &Path,
) -> Result<EvalOutput, CliError> {
    let model = load_checkpoint(checkpoint_path)?;
    let videos: Vec<VideoSample> = load_manifest_videos(manifest_path, 1.0, LoadMode::Strict)?
        .into_iter()
        .map(|o| o.sample)
        .collect();
    if let Some(first) = videos.first() {
        let dims = first.feature_dims();
        if dims != model.config().input_dims {
            return Err(CliError::Model(ModelError::ConfigMismatch {
                reason: format!(
                    "checkpoint expects input dims {:?} but the data provides {:?}",
                    model.config().input_dims,
                    dims
                ),
            }));
        }
    }
    let report = evaluate_model(&model, &videos, &EvalParams::default())?;

    let report_path = out_dir.join("eval_report.json");
    write_bytes(
        &report_path,
        &serde_json::to_vec_pretty(&report).expect("report serializes"),
    )?;
    write_bytes(
        &out_dir.join("eval_report.txt"),
        report.render_table().as_bytes(),
    )?;

    let input_hash = hash_files(&[checkpoint_path, manifest_path])?;
    let snapshot = serde_json::json!({
        "checkpoint": checkpoint_path.to_string_lossy(),
        "manifest": manifest_path.to_string_lossy(),
    });
    let mut record = RunRecord::new("eval", snapshot, input_hash);
    record.add_artifact("report_json", out_dir, &report_path);
    record.add_artifact("report_table", out_dir, &out_dir.join("eval_report.txt"));
    record.save(&out_dir.join("run_record.json"))?;

    Ok(EvalOutput {
        report,
        report_path,
        record,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionJson {
    pub start: f64,
    pub end: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionDump {
    pub video_id: String,
    pub predictions: Vec<PredictionJson>,
}

/// Runs the decode pipeline on one video's feature container and writes the
/// top-k clip list a downstream cutter would consume.
pub fn cmd_predict(
    checkpoint_path: &Path,
    features_dir: &Path,
    duration: Option<f64>,
    segment_length: f64,
    out_path: &Path,
) -> Result<PredictionDump, CliError> {
    let model = load_checkpoint(checkpoint_path)?;
    let visual = read_features(features_dir, Modality::Visual)?;
    let audio = read_features(features_dir, Modality::Audio)?;
    let caption = read_features(features_dir, Modality::Caption)?;
    let t = visual.nrows();
    let duration = duration.unwrap_or(t as f64 * segment_length);
    let expected_t = (duration / segment_length).floor() as usize;
    if expected_t != t {
        return Err(CliError::Data(DataError::ShapeMismatch {
            modality: "visual".into(),
            rows: t,
            expected: expected_t,
        }));
    }
    let dims = (visual.ncols(), audio.ncols(), caption.ncols());
    if dims != model.config().input_dims {
        return Err(CliError::Model(ModelError::ConfigMismatch {
            reason: format!(
                "checkpoint expects input dims {:?} but the features provide {:?}",
                model.config().input_dims,
                dims
            ),
        }));
    }

    let video_id = features_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "video".to_string());
    let caption_empty =
        crate::data::read_caption_empty(features_dir)?.unwrap_or_else(|| vec![false; t]);
    let sample = VideoSample::new(
        video_id.clone(),
        duration,
        segment_length,
        visual,
        audio,
        caption,
        caption_empty,
        vec![],
        vec![],
    )
    .map_err(DataError::from)?;

    let params = EvalParams::default();
    let output = model.forward_single(&sample)?;
    let candidates = decode(&output, segment_length, duration, params.conf_threshold);
    let candidates = merge_duplicate_candidates(candidates);
    let mut kept = soft_nms(candidates, params.nms_sigma, params.score_floor);
    kept.truncate(top_k_for_duration(duration));

    let dump = PredictionDump {
        video_id,
        predictions: kept
            .iter()
            .map(|p| PredictionJson {
                start: p.interval.start(),
                end: p.interval.end(),
                score: p.score,
            })
            .collect(),
    };
    write_bytes(
        out_path,
        &serde_json::to_vec_pretty(&dump).expect("dump serializes"),
    )?;

    let input_hash = hash_files(&[checkpoint_path])?;
    let snapshot = serde_json::json!({
        "checkpoint": checkpoint_path.to_string_lossy(),
        "features": features_dir.to_string_lossy(),
        "duration": duration,
        "segment_length": segment_length,
    });
    let mut record = RunRecord::new("predict", snapshot, input_hash);
    record.add_artifact(
        "predictions",
        out_path.parent().unwrap_or_else(|| Path::new(".")),
        out_path,
    );
    let record_path = out_path.with_extension("run_record.json");
    record.save(&record_path)?;
    Ok(dump)
}

/// Ablation sweep axes: modality subsets, loss-term switches, layer splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    Modality,
    LossTerms,
    LayerSplit,
}

impl std::str::FromStr for AblationAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "modality" => Ok(Self::Modality),
            "loss_terms" => Ok(Self::LossTerms),
            "layer_split" => Ok(Self::LayerSplit),
            other => Err(format!(
                "unknown axis {other:?} (expected modality, loss_terms or layer_split)"
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub ap_per_threshold: Vec<f64>,
    pub avg: f64,
}

#[derive(Debug, Serialize)]
pub struct AblationSummary {
    pub axis: String,
    pub rows: Vec<AblationRow>,
}

impl AblationSummary {
    pub fn render_table(&self, thresholds: &[f64]) -> String {
        let mut out = format!("{:<16}", "variant");
        for t in thresholds {
            out.push_str(&format!("{t:>8.1}"));
        }
        out.push_str(&format!("{:>8}\n", "Avg."));
        for row in &self.rows {
            out.push_str(&format!("{:<16}", row.variant));
            for ap in &row.ap_per_threshold {
                out.push_str(&format!("{:>8.2}", ap * 100.0));
            }
            out.push_str(&format!("{:>8.2}\n", row.avg * 100.0));
        }
        out
    }
}

/// Enumerates the axis variants over a shared base config.
pub fn ablation_variants(
    base: &TrainConfig,
    axis: AblationAxis,
) -> Vec<(String, TrainConfig)> {
    match axis {
        AblationAxis::Modality => ["A", "V", "C", "A&V", "A&V&C"]
            .iter()
            .map(|m| {
                let mut cfg = base.clone();
                cfg.ablation.modalities = m.parse().expect("static modality strings parse");
                (m.to_string(), cfg)
            })
            .collect(),
        AblationAxis::LossTerms => [
            ("UF:off AL:off", false, false),
            ("UF:on  AL:off", true, false),
            ("UF:off AL:on", false, true),
            ("UF:on  AL:on", true, true),
        ]
        .iter()
        .map(|(name, uf, al)| {
            let mut cfg = base.clone();
            cfg.ablation.uni_focal_on = *uf;
            cfg.ablation.alignment_on = *al;
            (name.to_string(), cfg)
        })
        .collect(),
        AblationAxis::LayerSplit => [(1, 4, 4), (3, 3, 3), (5, 2, 2), (7, 1, 1)]
            .iter()
            .map(|&(ns, nc, nf)| {
                let mut cfg = base.clone();
                cfg.model.n_self_layers = ns;
                cfg.model.n_caption_layers = nc;
                cfg.model.n_fusion_layers = nf;
                (format!("{ns}/{nc}/{nf}"), cfg)
            })
            .collect(),
    }
}

/// Runs the sweep sequentially with a shared seed and writes a merged table.
pub fn cmd_ablate(
    base_config: TrainConfig,
    snapshot: serde_json::Value,
    data_dir: &Path,
    axis: AblationAxis,
    out_dir: &Path,
) -> Result<AblationSummary, CliError> {
    let variants = ablation_variants(&base_config, axis);
    let mut rows = Vec::with_capacity(variants.len());
    for (name, cfg) in variants {
        let variant_dir = out_dir.join(format!(
            "variant_{}",
            name.replace(['&', '/', ' ', ':'], "_")
        ));
        let output = cmd_train(cfg.clone(), snapshot.clone(), data_dir, &variant_dir)?;
        let best_epoch = output
            .result
            .epochs
            .iter()
            .find(|e| e.epoch == output.result.best_epoch)
            .expect("best epoch recorded");
        rows.push(AblationRow {
            variant: name,
            ap_per_threshold: best_epoch.val_ap_per_threshold.clone(),
            avg: output.result.best_val_avg,
        });
    }
    let summary = AblationSummary {
        axis: format!("{axis:?}"),
        rows,
    };
    write_bytes(
        &out_dir.join("ablation.json"),
        &serde_json::to_vec_pretty(&summary).expect("summary serializes"),
    )?;
    write_bytes(
        &out_dir.join("ablation.txt"),
        summary
            .render_table(&base_config.eval.tiou_thresholds)
            .as_bytes(),
    )?;
    let mut record = RunRecord::new("ablate", snapshot, sha256_hex(&[]));
    record.add_artifact("summary", out_dir, &out_dir.join("ablation.json"));
    record.add_artifact("table", out_dir, &out_dir.join("ablation.txt"));
    record.save(&out_dir.join("run_record.json"))?;
    Ok(summary)
}
