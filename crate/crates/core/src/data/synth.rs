//! Synthetic corpus generator: unit-Gaussian background features with a
//! shared latent direction planted inside ground-truth clips across all
//! three modalities, plus boundary ramps so clip edges are learnable.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::load::AnnotationFile;
use super::manifest::{split_manifest, ManifestEntry};
use super::{container, DataError, Modality};
use crate::temporal::{clips_to_labels, segment_center, Interval, VideoSample};

/// Planted clip lengths are clamped to this range (seconds), matching the
/// observed spread of curated clip durations.
pub const CLIP_LEN_MIN: f64 = 20.0;
pub const CLIP_LEN_MAX: f64 = 150.0;

/// Minimum spacing between planted clips, in segments.
const CLIP_GAP_SEGMENTS: f64 = 2.0;

fn default_num_videos() -> usize {
    50
}
fn default_duration_range() -> (f64, f64) {
    (420.0, 600.0)
}
fn default_density() -> f64 {
    3.0
}
fn default_clip_mean() -> f64 {
    60.0
}
fn default_clip_std() -> f64 {
    15.0
}
fn default_signal() -> f64 {
    2.0
}
fn default_dims() -> (usize, usize, usize) {
    (512, 2048, 384)
}
fn default_seed() -> u64 {
    7
}
fn default_segment_length() -> f64 {
    1.0
}
fn default_ramp() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    #[serde(default = "default_num_videos")]
    pub num_videos: usize,
    #[serde(default = "default_duration_range")]
    pub duration_range: (f64, f64),
    /// Expected clips per 600 seconds of video.
    #[serde(default = "default_density")]
    pub clip_density: f64,
    #[serde(default = "default_clip_mean")]
    pub clip_duration_mean: f64,
    #[serde(default = "default_clip_std")]
    pub clip_duration_std: f64,
    /// Scale of the planted latent direction relative to unit noise.
    #[serde(default = "default_signal")]
    pub signal_strength: f64,
    #[serde(default = "default_dims")]
    pub feature_dims: (usize, usize, usize),
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_segment_length")]
    pub segment_length: f64,
    /// Width (in segments) of the half-strength ramp outside each boundary.
    #[serde(default = "default_ramp")]
    pub ramp_segments: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_videos: default_num_videos(),
            duration_range: default_duration_range(),
            clip_density: default_density(),
            clip_duration_mean: default_clip_mean(),
            clip_duration_std: default_clip_std(),
            signal_strength: default_signal(),
            feature_dims: default_dims(),
            seed: default_seed(),
            segment_length: default_segment_length(),
            ramp_segments: default_ramp(),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |reason: String| Err(DataError::InvalidConfig { reason });
        if self.num_videos == 0 {
            return fail("num_videos must be positive".into());
        }
        let (lo, hi) = self.duration_range;
        if !lo.is_finite() || !hi.is_finite() || lo <= 0.0 || hi < lo {
            return fail(format!("duration_range ({lo}, {hi}) must be positive and ordered"));
        }
        if !self.clip_density.is_finite() || self.clip_density <= 0.0 {
            return fail(format!("clip_density {} must be positive", self.clip_density));
        }
        if !(self.clip_duration_mean.is_finite() && self.clip_duration_mean > 0.0)
            || self.clip_duration_std < 0.0
        {
            return fail("clip duration statistics must be positive".into());
        }
        if self.signal_strength.is_nan() || self.signal_strength < 0.0 {
            return fail(format!("signal_strength {} must be >= 0", self.signal_strength));
        }
        let (dv, da, dc) = self.feature_dims;
        if dv == 0 || da == 0 || dc == 0 {
            return fail(format!("feature dims {:?} must be positive", self.feature_dims));
        }
        if !self.segment_length.is_finite() || self.segment_length <= 0.0 {
            return fail(format!("segment_length {} must be positive", self.segment_length));
        }
        Ok(())
    }
}

/// Corpus statistics plus the latent directions the generator planted
/// (kept out of the serialized stats; tests and probes read them directly).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthReport {
    pub num_videos: usize,
    pub total_clips: usize,
    pub mean_duration: f64,
    pub mean_clips_per_10min: f64,
    pub packing_fallbacks: usize,
    #[serde(skip)]
    pub signal_directions: Vec<Vec<f64>>,
}

fn mix_seed(seed: u64, tag: u64, idx: u64) -> u64 {
    // splitmix64 over the combined words
    let mut z = seed
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(idx.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn unit_direction(rng: &mut ChaCha20Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    for x in &mut v {
        *x /= norm;
    }
    v
}

/// Signal multiplier at segment center `tau` for one clip: full strength
/// inside, a ramp decaying from half strength over `ramp` segments outside.
fn signal_factor(tau: f64, clip: &Interval, ramp: usize, segment_length: f64) -> f64 {
    if clip.contains(tau) {
        return 1.0;
    }
    let dist = if tau < clip.start() {
        clip.start() - tau
    } else {
        tau - clip.end()
    };
    let width = (ramp as f64 + 1.0) * segment_length;
    0.5 * (1.0 - dist / width).max(0.0)
}

fn place_clips(
    rng: &mut ChaCha20Rng,
    duration: f64,
    segment_length: f64,
    target_count: usize,
    len_mean: f64,
    len_std: f64,
) -> (Vec<Interval>, usize) {
    let gap = CLIP_GAP_SEGMENTS * segment_length;
    let len_dist = Normal::new(len_mean, len_std.max(1e-9)).expect("valid normal");
    let mut placed: Vec<Interval> = Vec::new();
    let mut fallbacks = 0usize;

    for _ in 0..target_count {
        let mut len = len_dist.sample(rng).clamp(CLIP_LEN_MIN, CLIP_LEN_MAX);
        len = len.min(0.8 * duration).max(segment_length * 2.0);
        if len >= duration {
            fallbacks += 1;
            continue;
        }
        let mut ok = false;
        for _ in 0..100 {
            let start = rng.random_range(0.0..(duration - len));
            let candidate = Interval::new(start, start + len).expect("positive length");
            let disjoint = placed.iter().all(|p| {
                candidate.end() + gap <= p.start() || p.end() + gap <= candidate.start()
            });
            if disjoint {
                placed.push(candidate);
                ok = true;
                break;
            }
        }
        if !ok {
            fallbacks += 1;
        }
    }
    placed.sort_by(|a, b| a.start().total_cmp(&b.start()));
    (placed, fallbacks)
}

/// Generates a deterministic corpus: same config (including seed), same
/// videos, bit for bit.
pub fn generate_synthetic(
    config: &SyntheticConfig,
) -> Result<(Vec<VideoSample>, SynthReport), DataError> {
    config.validate()?;
    let (dv, da, dc) = config.feature_dims;

    let mut dir_rng = ChaCha20Rng::seed_from_u64(mix_seed(config.seed, 0xD157, 0));
    let directions = vec![
        unit_direction(&mut dir_rng, dv),
        unit_direction(&mut dir_rng, da),
        unit_direction(&mut dir_rng, dc),
    ];

    let mut samples = Vec::with_capacity(config.num_videos);
    let mut total_clips = 0usize;
    let mut total_duration = 0.0;
    let mut fallbacks = 0usize;

    for i in 0..config.num_videos {
        let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(config.seed, 0x71DE0, i as u64));
        let (lo, hi) = config.duration_range;
        let duration = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let t_count = (duration / config.segment_length).floor() as usize;

        let poisson_mean = (config.clip_density * duration / 600.0).max(1e-9);
        let target_count = (Poisson::new(poisson_mean)
            .expect("positive mean")
            .sample(&mut rng) as usize)
            .max(1);
        let (clips, video_fallbacks) = place_clips(
            &mut rng,
            duration,
            config.segment_length,
            target_count,
            config.clip_duration_mean,
            config.clip_duration_std,
        );
        fallbacks += video_fallbacks;
        total_clips += clips.len();
        total_duration += duration;

        // per-segment signal envelope shared by all modalities
        let factors: Vec<f64> = (0..t_count)
            .map(|t| {
                let tau = segment_center(t, config.segment_length);
                clips
                    .iter()
                    .map(|c| signal_factor(tau, c, config.ramp_segments, config.segment_length))
                    .fold(0.0, f64::max)
            })
            .collect();

        let mut features = Vec::with_capacity(3);
        for (dim, direction) in [(dv, 0), (da, 1), (dc, 2)] {
            let mut m = Array2::zeros((t_count, dim));
            for t in 0..t_count {
                let boost = config.signal_strength * factors[t];
                for j in 0..dim {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    m[(t, j)] = noise + boost * directions[direction][j];
                }
            }
            features.push(m);
        }
        let caption = features.pop().unwrap();
        let audio = features.pop().unwrap();
        let visual = features.pop().unwrap();

        let caption_spans: Vec<(Interval, String)> = clips
            .iter()
            .enumerate()
            .map(|(n, c)| (*c, format!("speech for clip {n}")))
            .collect();

        samples.push(VideoSample::new(
            format!("synth_{i:05}"),
            duration,
            config.segment_length,
            visual,
            audio,
            caption,
            vec![false; t_count],
            clips,
            caption_spans,
        )?);
    }

    let report = SynthReport {
        num_videos: samples.len(),
        total_clips,
        mean_duration: total_duration / samples.len() as f64,
        mean_clips_per_10min: total_clips as f64 * 600.0 / total_duration,
        packing_fallbacks: fallbacks,
        signal_directions: directions,
    };
    Ok((samples, report))
}

/// Closed-form ridge-regression probe on the visual features alone:
/// fraction of segments whose thresholded linear prediction matches the
/// class label. High accuracy certifies the planted task is solvable.
pub fn linear_probe_accuracy(samples: &[VideoSample]) -> f64 {
    let d = match samples.first() {
        Some(s) => s.visual_features.ncols(),
        None => return 0.0,
    };
    let cols = d + 1; // bias column
    let mut xtx = vec![0.0f64; cols * cols];
    let mut xty = vec![0.0f64; cols];
    let mut rows = Vec::new();

    for sample in samples {
        let labels = clips_to_labels(&sample.clips, sample.duration, sample.segment_length)
            .expect("generated clips are valid");
        for t in 0..sample.num_segments() {
            let mut x = Vec::with_capacity(cols);
            x.extend(sample.visual_features.row(t).iter().copied());
            x.push(1.0);
            let y = f64::from(labels.class_label()[t]);
            for i in 0..cols {
                xty[i] += x[i] * y;
                for j in i..cols {
                    xtx[i * cols + j] += x[i] * x[j];
                }
            }
            rows.push((x, y));
        }
    }
    for i in 0..cols {
        for j in 0..i {
            xtx[i * cols + j] = xtx[j * cols + i];
        }
        xtx[i * cols + i] += 1e-6; // ridge
    }

    // Gaussian elimination with partial pivoting.
    let mut a = xtx;
    let mut b = xty;
    for col in 0..cols {
        let mut pivot = col;
        for r in col + 1..cols {
            if a[r * cols + col].abs() > a[pivot * cols + col].abs() {
                pivot = r;
            }
        }
        if pivot != col {
            for j in 0..cols {
                a.swap(col * cols + j, pivot * cols + j);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * cols + col];
        if diag.abs() < 1e-12 {
            continue;
        }
        for r in col + 1..cols {
            let f = a[r * cols + col] / diag;
            if f == 0.0 {
                continue;
            }
            for j in col..cols {
                a[r * cols + j] -= f * a[col * cols + j];
            }
            b[r] -= f * b[col];
        }
    }
    let mut beta = vec![0.0f64; cols];
    for col in (0..cols).rev() {
        let mut acc = b[col];
        for j in col + 1..cols {
            acc -= a[col * cols + j] * beta[j];
        }
        let diag = a[col * cols + col];
        beta[col] = if diag.abs() < 1e-12 { 0.0 } else { acc / diag };
    }

    let mut correct = 0usize;
    for (x, y) in &rows {
        let pred: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
        if (pred > 0.5) == (*y > 0.5) {
            correct += 1;
        }
    }
    correct as f64 / rows.len() as f64
}

/// Manifest paths produced by [`write_corpus`].
#[derive(Debug, Clone, Serialize)]
pub struct CorpusPaths {
    pub train_manifest: PathBuf,
    pub val_manifest: PathBuf,
    pub test_manifest: PathBuf,
}

/// Writes feature containers, annotation files and 8/1/1 split manifests
/// under `out_dir`.
pub fn write_corpus(
    samples: &[VideoSample],
    out_dir: &Path,
    ratios: (u32, u32, u32),
    seed: u64,
) -> Result<CorpusPaths, DataError> {
    let mut entries = Vec::with_capacity(samples.len());
    for sample in samples {
        let feature_rel = format!("features/{}", sample.video_id);
        let ann_rel = format!("annotations/{}.json", sample.video_id);
        let feature_dir = out_dir.join(&feature_rel);
        container::write_features(&feature_dir, Modality::Visual, &sample.visual_features)?;
        container::write_features(&feature_dir, Modality::Audio, &sample.audio_features)?;
        container::write_features(&feature_dir, Modality::Caption, &sample.caption_features)?;
        if sample.caption_empty.iter().any(|&e| e) {
            container::write_caption_empty(&feature_dir, &sample.caption_empty)?;
        }
        AnnotationFile::from_sample(sample).save(&out_dir.join(&ann_rel))?;
        entries.push(ManifestEntry {
            video_id: sample.video_id.clone(),
            duration: sample.duration,
            feature_path: feature_rel,
            annotation_path: ann_rel,
        });
    }
    let (train, val, test) = split_manifest(entries, ratios, seed)?;
    let paths = CorpusPaths {
        train_manifest: out_dir.join("train.json"),
        val_manifest: out_dir.join("val.json"),
        test_manifest: out_dir.join("test.json"),
    };
    train.save(&paths.train_manifest)?;
    val.save(&paths.val_manifest)?;
    test.save(&paths.test_manifest)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> SyntheticConfig {
        SyntheticConfig {
            num_videos: 6,
            duration_range: (60.0, 120.0),
            clip_density: 3.0,
            clip_duration_mean: 25.0,
            clip_duration_std: 5.0,
            signal_strength: 2.0,
            feature_dims: (8, 12, 6),
            seed: 5,
            segment_length: 1.0,
            ramp_segments: 3,
        }
    }

    #[test]
    fn generation_is_bit_identical_for_equal_seeds() {
        let cfg = tiny_config();
        let (a, _) = generate_synthetic(&cfg).unwrap();
        let (b, _) = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.video_id, y.video_id);
            assert_eq!(x.duration.to_bits(), y.duration.to_bits());
            assert_eq!(x.visual_features, y.visual_features);
            assert_eq!(x.audio_features, y.audio_features);
            assert_eq!(x.caption_features, y.caption_features);
            assert_eq!(x.clips.len(), y.clips.len());
        }
        let mut cfg2 = cfg;
        cfg2.seed = 6;
        let (c, _) = generate_synthetic(&cfg2).unwrap();
        assert_ne!(a[0].visual_features, c[0].visual_features);
    }

    #[test]
    fn every_video_has_at_least_one_clip_within_bounds() {
        let (samples, _) = generate_synthetic(&tiny_config()).unwrap();
        for s in &samples {
            assert!(!s.clips.is_empty(), "{} has no clips", s.video_id);
            for c in &s.clips {
                assert!(c.start() >= 0.0 && c.end() <= s.duration + 1e-9);
                assert!(c.length() >= 2.0 * s.segment_length);
            }
        }
    }

    #[test]
    fn clip_count_tracks_the_poisson_mean() {
        let cfg = SyntheticConfig {
            num_videos: 1000,
            duration_range: (600.0, 600.0),
            clip_duration_mean: 40.0,
            clip_duration_std: 10.0,
            feature_dims: (2, 2, 2),
            seed: 11,
            ..tiny_config()
        };
        let (samples, report) = generate_synthetic(&cfg).unwrap();
        let mean_clips: f64 =
            samples.iter().map(|s| s.clips.len() as f64).sum::<f64>() / samples.len() as f64;
        assert!(
            (mean_clips - 3.0).abs() / 3.0 < 0.05,
            "empirical mean {mean_clips} strays over 5% from the Poisson mean 3.0"
        );
        assert!((report.mean_clips_per_10min - 3.0).abs() / 3.0 < 0.05);
    }

    #[test]
    fn positive_rate_matches_clip_coverage() {
        let (samples, _) = generate_synthetic(&tiny_config()).unwrap();
        for s in &samples {
            let labels = clips_to_labels(&s.clips, s.duration, s.segment_length).unwrap();
            let covered: f64 =
                s.clips.iter().map(Interval::length).sum::<f64>() / s.segment_length;
            let slack = 2.0 * s.clips.len() as f64;
            assert!(
                (labels.num_positive() as f64 - covered).abs() <= slack,
                "{}: {} positives vs {covered:.1} covered segments",
                s.video_id,
                labels.num_positive()
            );
        }
    }

    #[test]
    fn zero_signal_is_statistically_indistinguishable() {
        let mut cfg = tiny_config();
        cfg.num_videos = 12;
        cfg.signal_strength = 0.0;
        let (samples, report) = generate_synthetic(&cfg).unwrap();
        let z = in_out_projection_z(&samples, &report.signal_directions[0]);
        assert!(
            z.abs() < 2.576,
            "zero-signal corpus rejected the null at alpha=0.01 (z={z:.3})"
        );

        // positive control: the planted corpus must reject decisively
        cfg.signal_strength = 2.0;
        let (samples, report) = generate_synthetic(&cfg).unwrap();
        let z = in_out_projection_z(&samples, &report.signal_directions[0]);
        assert!(z.abs() > 10.0, "planted signal not detected (z={z:.3})");
    }

    /// Two-sample z statistic for the mean projection onto the latent
    /// direction, in-clip vs out-of-clip segments.
    fn in_out_projection_z(samples: &[VideoSample], direction: &[f64]) -> f64 {
        let (mut xs_in, mut xs_out) = (Vec::new(), Vec::new());
        for s in samples {
            let labels = clips_to_labels(&s.clips, s.duration, s.segment_length).unwrap();
            for t in 0..s.num_segments() {
                let proj: f64 = s
                    .visual_features
                    .row(t)
                    .iter()
                    .zip(direction)
                    .map(|(a, b)| a * b)
                    .sum();
                if labels.class_label()[t] {
                    xs_in.push(proj);
                } else {
                    xs_out.push(proj);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let var = |v: &[f64], m: f64| {
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
        };
        let (mi, mo) = (mean(&xs_in), mean(&xs_out));
        let (vi, vo) = (var(&xs_in, mi), var(&xs_out, mo));
        (mi - mo) / (vi / xs_in.len() as f64 + vo / xs_out.len() as f64).sqrt()
    }

    #[test]
    fn planted_signal_is_linearly_separable() {
        // A 2-sigma per-segment shift caps per-segment Bayes accuracy near
        // 84% on balanced classes, so the 90% probe bound is only meaningful
        // on a corpus where positives are the clear minority.
        let cfg = SyntheticConfig {
            num_videos: 20,
            duration_range: (240.0, 320.0),
            clip_density: 2.0,
            clip_duration_mean: 24.0,
            clip_duration_std: 3.0,
            feature_dims: (16, 8, 8),
            seed: 13,
            ..tiny_config()
        };
        let (samples, _) = generate_synthetic(&cfg).unwrap();
        let acc = linear_probe_accuracy(&samples);
        assert!(
            acc >= 0.9,
            "linear probe reaches only {acc:.3} accuracy; the task may not be learnable"
        );
    }

    #[test]
    fn infeasible_packing_falls_back_to_fewer_clips() {
        let cfg = SyntheticConfig {
            num_videos: 4,
            duration_range: (45.0, 50.0),
            clip_density: 60.0, // ~5 clips demanded in <1 minute
            clip_duration_mean: 30.0,
            clip_duration_std: 5.0,
            feature_dims: (2, 2, 2),
            seed: 3,
            ..tiny_config()
        };
        let (samples, report) = generate_synthetic(&cfg).unwrap();
        assert!(report.packing_fallbacks > 0, "expected recorded fallbacks");
        for s in &samples {
            for pair in s.clips.windows(2) {
                assert!(pair[0].end() <= pair[1].start(), "clips overlap");
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = tiny_config();
        cfg.num_videos = 0;
        assert!(matches!(
            generate_synthetic(&cfg).unwrap_err(),
            DataError::InvalidConfig { .. }
        ));

        let mut cfg = tiny_config();
        cfg.duration_range = (100.0, 50.0);
        assert!(generate_synthetic(&cfg).is_err());

        let mut cfg = tiny_config();
        cfg.feature_dims = (0, 4, 4);
        assert!(generate_synthetic(&cfg).is_err());
    }

    #[test]
    fn corpus_write_produces_loadable_split_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config();
        cfg.num_videos = 5;
        let (samples, _) = generate_synthetic(&cfg).unwrap();
        let paths = write_corpus(&samples, dir.path(), (8, 1, 1), cfg.seed).unwrap();
        let train = super::super::DatasetManifest::load(&paths.train_manifest).unwrap();
        let val = super::super::DatasetManifest::load(&paths.val_manifest).unwrap();
        let test = super::super::DatasetManifest::load(&paths.test_manifest).unwrap();
        assert_eq!(
            train.entries.len() + val.entries.len() + test.entries.len(),
            5
        );
    }
}
