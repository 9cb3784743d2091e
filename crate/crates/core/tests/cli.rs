//! End-to-end tests of the `repurpose` binary: every subcommand, the exit
//! code contract, and run reproducibility.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn repurpose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repurpose"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_synth_config(path: &Path, num_videos: usize, seed: u64) {
    let config = serde_json::json!({
        "num_videos": num_videos,
        "duration_range": [50.0, 80.0],
        "clip_density": 3.0,
        "clip_duration_mean": 22.0,
        "clip_duration_std": 3.0,
        "signal_strength": 2.0,
        "feature_dims": [6, 8, 4],
        "seed": seed
    });
    std::fs::write(path, serde_json::to_vec_pretty(&config).unwrap()).unwrap();
}

fn write_train_config(path: &Path, epochs: usize) {
    let config = serde_json::json!({
        "learning_rate": 1e-3,
        "epochs": epochs,
        "warmup_epochs": 0,
        "batch_size": 4,
        "seed": 5,
        "model": {
            "d_model": 16,
            "n_self_layers": 1,
            "n_caption_layers": 1,
            "n_fusion_layers": 1,
            "n_heads": 4,
            "dropout": 0.1,
            "input_dims": [6, 8, 4]
        }
    });
    std::fs::write(path, serde_json::to_vec_pretty(&config).unwrap()).unwrap();
}

/// Recursive file hash map for determinism comparisons.
fn hash_tree(root: &Path) -> BTreeMap<String, String> {
    use sha2::{Digest, Sha256};
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                let bytes = std::fs::read(&path).unwrap();
                out.insert(rel, hex::encode(Sha256::digest(&bytes)));
            }
        }
    }
    out
}

#[test]
fn synth_is_hash_deterministic_across_runs() {
    let dir = tempdir().unwrap();
    let config = dir.path().join("synth.json");
    write_synth_config(&config, 6, 77);

    for out in ["a", "b"] {
        let output = repurpose(&[
            "synth",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().join(out).to_str().unwrap(),
        ]);
        assert!(output.status.success(), "{output:?}");
        let stdout = String::from_utf8_lossy(&output.stdout);
        assert!(stdout.contains("videos"), "stats not printed: {stdout}");
    }
    assert_eq!(
        hash_tree(&dir.path().join("a")),
        hash_tree(&dir.path().join("b")),
        "same seed must give bit-identical corpora"
    );
}

#[test]
fn synth_default_density_lands_near_three_per_ten_minutes() {
    let dir = tempdir().unwrap();
    // default duration/density, tiny features so the corpus stays small
    let output = repurpose(&[
        "synth",
        "--set",
        "feature_dims=[2,2,2]",
        "--set",
        "num_videos=300",
        "--seed",
        "5",
        "--out",
        dir.path().join("c").to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let stats: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("c/stats.json")).unwrap()).unwrap();
    let density = stats["mean_clips_per_10min"].as_f64().unwrap();
    assert!(
        (density - 3.0).abs() / 3.0 < 0.10,
        "mean clip density {density} strays more than 10% from 3.0 per 10 minutes"
    );
}

#[test]
fn synth_rejects_zero_videos_with_usage_exit() {
    let dir = tempdir().unwrap();
    let output = repurpose(&[
        "synth",
        "--set",
        "num_videos=0",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2), "{output:?}");
}

#[test]
fn train_eval_predict_pipeline_runs_end_to_end() {
    let dir = tempdir().unwrap();
    let synth_cfg = dir.path().join("synth.json");
    write_synth_config(&synth_cfg, 8, 42);
    let corpus = dir.path().join("corpus");
    assert!(repurpose(&[
        "synth",
        "--config",
        synth_cfg.to_str().unwrap(),
        "--out",
        corpus.to_str().unwrap(),
    ])
    .status
    .success());

    let train_cfg = dir.path().join("train.json");
    write_train_config(&train_cfg, 2);
    let run = dir.path().join("run");
    let output = repurpose(&[
        "train",
        "--config",
        train_cfg.to_str().unwrap(),
        "--data",
        corpus.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    for artifact in [
        "checkpoint.bin",
        "config.json",
        "run_record.json",
        "logs/train_log.jsonl",
        "logs/val_history.jsonl",
        "reports/val_report.json",
    ] {
        assert!(run.join(artifact).exists(), "missing {artifact}");
    }

    // eval: the report must re-parse and agree with itself
    let eval_out = dir.path().join("eval");
    let output = repurpose(&[
        "eval",
        "--checkpoint",
        run.join("checkpoint.bin").to_str().unwrap(),
        "--manifest",
        corpus.join("val.json").to_str().unwrap(),
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("average mAP"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(eval_out.join("eval_report.json")).unwrap())
            .unwrap();
    let aps: Vec<f64> = report["ap_per_threshold"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["ap"].as_f64().unwrap())
        .collect();
    assert_eq!(aps.len(), 5);
    let avg = report["average"].as_f64().unwrap();
    assert!((avg - aps.iter().sum::<f64>() / 5.0).abs() < 1e-12);

    // eval determinism: a second run writes identical bytes
    let eval_out2 = dir.path().join("eval2");
    assert!(repurpose(&[
        "eval",
        "--checkpoint",
        run.join("checkpoint.bin").to_str().unwrap(),
        "--manifest",
        corpus.join("val.json").to_str().unwrap(),
        "--out",
        eval_out2.to_str().unwrap(),
    ])
    .status
    .success());
    assert_eq!(
        std::fs::read(eval_out.join("eval_report.json")).unwrap(),
        std::fs::read(eval_out2.join("eval_report.json")).unwrap()
    );

    // predict on one training video's features
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(corpus.join("train.json")).unwrap()).unwrap();
    let feature_rel = manifest["entries"][0]["feature_path"].as_str().unwrap();
    let duration = manifest["entries"][0]["duration"].as_f64().unwrap();
    let pred_path = dir.path().join("preds.json");
    let output = repurpose(&[
        "predict",
        "--checkpoint",
        run.join("checkpoint.bin").to_str().unwrap(),
        "--features",
        corpus.join(feature_rel).to_str().unwrap(),
        "--duration",
        &duration.to_string(),
        "--out",
        pred_path.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let dump: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&pred_path).unwrap()).unwrap();
    let preds = dump["predictions"].as_array().unwrap();
    let k = ((3.0 * duration / 600.0 + 0.5).floor() as usize).max(1);
    assert!(preds.len() <= k, "{} predictions exceed top-k {k}", preds.len());

    // predict determinism
    let pred_path2 = dir.path().join("preds2.json");
    assert!(repurpose(&[
        "predict",
        "--checkpoint",
        run.join("checkpoint.bin").to_str().unwrap(),
        "--features",
        corpus.join(feature_rel).to_str().unwrap(),
        "--duration",
        &duration.to_string(),
        "--out",
        pred_path2.to_str().unwrap(),
    ])
    .status
    .success());
    assert_eq!(
        std::fs::read(&pred_path).unwrap(),
        std::fs::read(&pred_path2).unwrap()
    );
}

#[test]
fn train_with_modality_override_builds_a_visual_only_checkpoint() {
    let dir = tempdir().unwrap();
    let synth_cfg = dir.path().join("synth.json");
    write_synth_config(&synth_cfg, 6, 43);
    let corpus = dir.path().join("corpus");
    assert!(repurpose(&[
        "synth",
        "--config",
        synth_cfg.to_str().unwrap(),
        "--out",
        corpus.to_str().unwrap(),
    ])
    .status
    .success());

    let train_cfg = dir.path().join("train.json");
    write_train_config(&train_cfg, 1);
    let run = dir.path().join("run");
    let output = repurpose(&[
        "train",
        "--config",
        train_cfg.to_str().unwrap(),
        "--set",
        "ablation.modalities=V",
        "--data",
        corpus.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");

    let model = repurpose_core::model::load_checkpoint(&run.join("checkpoint.bin")).unwrap();
    assert_eq!(model.config().modalities.to_string(), "V");
}

#[test]
fn missing_manifest_names_the_path_and_exits_three() {
    let dir = tempdir().unwrap();
    let train_cfg = dir.path().join("train.json");
    write_train_config(&train_cfg, 1);
    let missing = dir.path().join("nowhere");
    let output = repurpose(&[
        "train",
        "--config",
        train_cfg.to_str().unwrap(),
        "--data",
        missing.to_str().unwrap(),
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3), "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("nowhere") && stderr.contains("train.json"),
        "diagnostic must name the missing path: {stderr}"
    );
}

#[test]
fn eval_reports_dimension_mismatch() {
    let dir = tempdir().unwrap();
    // corpus A trains the checkpoint; corpus B has different feature dims
    let cfg_a = dir.path().join("synth_a.json");
    write_synth_config(&cfg_a, 6, 44);
    let corpus_a = dir.path().join("corpus_a");
    assert!(repurpose(&["synth", "--config", cfg_a.to_str().unwrap(), "--out", corpus_a.to_str().unwrap()]).status.success());

    let cfg_b = serde_json::json!({
        "num_videos": 4,
        "duration_range": [50.0, 70.0],
        "feature_dims": [5, 8, 4],
        "clip_duration_mean": 22.0,
        "clip_duration_std": 3.0,
        "seed": 45
    });
    let cfg_b_path = dir.path().join("synth_b.json");
    std::fs::write(&cfg_b_path, serde_json::to_vec(&cfg_b).unwrap()).unwrap();
    let corpus_b = dir.path().join("corpus_b");
    assert!(repurpose(&["synth", "--config", cfg_b_path.to_str().unwrap(), "--out", corpus_b.to_str().unwrap()]).status.success());

    let train_cfg = dir.path().join("train.json");
    write_train_config(&train_cfg, 1);
    let run = dir.path().join("run");
    assert!(repurpose(&[
        "train",
        "--config",
        train_cfg.to_str().unwrap(),
        "--data",
        corpus_a.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ])
    .status
    .success());

    let output = repurpose(&[
        "eval",
        "--checkpoint",
        run.join("checkpoint.bin").to_str().unwrap(),
        "--manifest",
        corpus_b.join("val.json").to_str().unwrap(),
        "--out",
        dir.path().join("eval").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(3), "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("(6, 8, 4)") && stderr.contains("(5, 8, 4)"),
        "mismatch must name both dimension triples: {stderr}"
    );
}

#[test]
fn predict_with_no_candidates_writes_an_empty_list() {
    use ndarray::Array2;
    use repurpose_core::model::{save_checkpoint, ModalitySet, Model, ModelConfig};

    let dir = tempdir().unwrap();
    // a model whose fused head is pinned far negative emits no candidates
    let cfg = ModelConfig {
        d_model: 16,
        n_self_layers: 1,
        n_caption_layers: 1,
        n_fusion_layers: 1,
        n_heads: 4,
        dropout: 0.0,
        input_dims: (6, 8, 4),
        head_hidden: None,
        positional_encoding: true,
        modalities: ModalitySet::ALL,
    };
    let mut model = Model::new(cfg, 1).unwrap();
    let bias = model.params().find("head_fused.l3.b").unwrap();
    model
        .params_mut()
        .set(bias, Array2::from_elem((1, 1), -50.0));
    let w = model.params().find("head_fused.l3.w").unwrap();
    let dim = model.params().value(w).dim();
    model.params_mut().set(w, Array2::zeros(dim));
    let ckpt = dir.path().join("silent.ckpt");
    save_checkpoint(&ckpt, &model).unwrap();

    // features for one 60s video
    let features = dir.path().join("features/videoX");
    for (modality, cols) in [
        (repurpose_core::data::Modality::Visual, 6),
        (repurpose_core::data::Modality::Audio, 8),
        (repurpose_core::data::Modality::Caption, 4),
    ] {
        repurpose_core::data::write_features(&features, modality, &Array2::zeros((60, cols)))
            .unwrap();
    }

    let out = dir.path().join("preds.json");
    let output = repurpose(&[
        "predict",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--features",
        features.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "empty predictions are not an error: {output:?}");
    let dump: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(dump["predictions"].as_array().unwrap().len(), 0);
    assert_eq!(dump["video_id"], "videoX");
}

#[test]
fn ablate_enumerates_loss_term_variants_and_rejects_unknown_axis() {
    let dir = tempdir().unwrap();
    let synth_cfg = dir.path().join("synth.json");
    write_synth_config(&synth_cfg, 6, 46);
    let corpus = dir.path().join("corpus");
    assert!(repurpose(&["synth", "--config", synth_cfg.to_str().unwrap(), "--out", corpus.to_str().unwrap()]).status.success());

    let train_cfg = dir.path().join("train.json");
    write_train_config(&train_cfg, 1);
    let out = dir.path().join("ablate");
    let output = repurpose(&[
        "ablate",
        "--config",
        train_cfg.to_str().unwrap(),
        "--data",
        corpus.to_str().unwrap(),
        "--axis",
        "loss_terms",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(summary["rows"].as_array().unwrap().len(), 4);
    assert!(out.join("ablation.txt").exists());

    let output = repurpose(&[
        "ablate",
        "--config",
        train_cfg.to_str().unwrap(),
        "--data",
        corpus.to_str().unwrap(),
        "--axis",
        "bogus",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2), "{output:?}");
}
