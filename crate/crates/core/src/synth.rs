//! Synthetic corpus with known ground truth.
//!
//! Each snippet's feature is drawn around a class mean (inside an action) or
//! a background mean (outside). Snippets last one second, so snippet indices
//! and seconds coincide. Point labels come from regular sampling and the
//! ground-truth oracle.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    write_features, write_label_set, DatasetManifest, FeatureSequence, GtSegment, PointLabelSet, Split, VideoRecord,
};
use crate::sampler::{annotate_oracle, sample_regular, sample_random};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub videos: usize,
    pub length: usize,
    pub dims: usize,
    pub classes: usize,
    /// Norm of every class and background mean.
    pub separation: f64,
    /// Per-coordinate standard deviation around the mean.
    pub noise: f64,
    pub max_segments: usize,
    pub min_segment: usize,
    pub max_segment: usize,
    /// Seconds between sampled label frames.
    pub label_interval: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            videos: 20,
            length: 100,
            dims: 8,
            classes: 3,
            separation: 2.0,
            noise: 0.75,
            max_segments: 3,
            min_segment: 8,
            max_segment: 20,
            label_interval: 5.0,
            seed: 0,
        }
    }
}

/// How label frames are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSampling {
    Regular,
    /// Same budget as regular sampling, uniformly random positions.
    Random,
}

pub const SNIPPET_LEN: usize = 16;
pub const FRAME_RATE: f64 = 16.0;

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub manifest: DatasetManifest,
    pub features: Vec<FeatureSequence>,
    pub labels: Vec<PointLabelSet>,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.videos == 0 || self.classes == 0 {
            return Err(Error::invalid("synth", "need at least one video and one class"));
        }
        if self.dims < 2 || !self.dims.is_multiple_of(2) {
            return Err(Error::invalid("dims", format!("{} must be even and >= 2", self.dims)));
        }
        if self.min_segment == 0 || self.min_segment > self.max_segment || self.max_segment > self.length {
            return Err(Error::invalid("segment lengths", "need 1 <= min <= max <= length"));
        }
        if self.max_segments == 0 {
            return Err(Error::invalid("max_segments", "must be at least 1"));
        }
        if !(self.noise >= 0.0 && self.separation >= 0.0 && self.label_interval > 0.0) {
            return Err(Error::invalid("synth", "noise, separation and label_interval must be non-negative"));
        }
        Ok(())
    }
}

fn random_direction(rng: &mut ChaCha8Rng, dims: usize, norm: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dims).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x * norm / n).collect();
        }
    }
}

/// Non-overlapping segments separated by at least two background snippets.
fn place_segments(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Vec<(usize, usize, usize)> {
    let wanted = rng.random_range(1..=cfg.max_segments);
    let mut segs: Vec<(usize, usize, usize)> = Vec::new();
    for _ in 0..wanted * 20 {
        if segs.len() == wanted {
            break;
        }
        let len = rng.random_range(cfg.min_segment..=cfg.max_segment);
        let start = rng.random_range(0..=cfg.length - len);
        let end = start + len;
        if segs.iter().all(|&(s, e, _)| end + 2 <= s || e + 2 <= start) {
            segs.push((start, end, rng.random_range(0..cfg.classes)));
        }
    }
    segs.sort();
    segs
}

/// Class means are shared by every split generated from the same
/// `means_seed`, so training and validation sets come from one distribution.
pub fn generate(cfg: &SynthConfig, means_seed: u64, split: Split, sampling: LabelSampling) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut mrng = ChaCha8Rng::seed_from_u64(means_seed);
    let class_means: Vec<Vec<f64>> = (0..cfg.classes).map(|_| random_direction(&mut mrng, cfg.dims, cfg.separation)).collect();
    let background = random_direction(&mut mrng, cfg.dims, cfg.separation);
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::invalid("noise", e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let prefix = match split {
        Split::Training => "train",
        Split::Validation => "val",
    };
    let mut records = Vec::with_capacity(cfg.videos);
    let mut features = Vec::with_capacity(cfg.videos);
    let mut labels = Vec::with_capacity(cfg.videos);
    for v in 0..cfg.videos {
        let id = format!("{prefix}_{v:03}");
        let segs = place_segments(&mut rng, cfg);
        let mut class_of = vec![None; cfg.length];
        for &(s, e, c) in &segs {
            class_of[s..e].iter_mut().for_each(|x| *x = Some(c));
        }
        let mut data = Vec::with_capacity(cfg.length * cfg.dims);
        for slot in &class_of {
            let mean = slot.map_or(&background, |c| &class_means[c]);
            data.extend(mean.iter().map(|m| (m + noise.sample(&mut rng)) as f32));
        }
        let seq = FeatureSequence::new(id.clone(), cfg.dims, data)?.with_timing(SNIPPET_LEN, FRAME_RATE);
        let duration = seq.duration();
        let gt: Vec<GtSegment> = segs
            .iter()
            .map(|&(s, e, c)| GtSegment { start: s as f64, end: e as f64, class_index: c })
            .collect();
        let regular = sample_regular(duration, cfg.label_interval)?;
        let stamps = match sampling {
            LabelSampling::Regular => regular,
            LabelSampling::Random => sample_random(duration, regular.len(), rng.random()),
        };
        labels.push(annotate_oracle(&id, &stamps, &gt));
        records.push(VideoRecord {
            id: id.clone(),
            duration,
            frame_rate: FRAME_RATE,
            snippet_len: SNIPPET_LEN,
            feature_path: PathBuf::from(format!("features/{id}.bin")),
            ground_truth: Some(gt),
        });
        features.push(seq);
    }
    let manifest = DatasetManifest {
        class_names: (0..cfg.classes).map(|c| format!("action_{c}")).collect(),
        videos: records,
        map_thresholds: (1..=7).map(|i| i as f64 / 10.0).collect(),
        split,
        base_dir: None,
    };
    manifest.validate()?;
    Ok(SynthDataset { manifest, features, labels })
}

impl SynthDataset {
    /// Writes `manifest.json`, `features/*.bin` and `labels/*.json` under
    /// `dir`, returning the manifest path.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        for sub in ["features", "labels"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        for seq in &self.features {
            write_features(dir.join("features").join(format!("{}.bin", seq.video_id)), seq)?;
        }
        for set in &self.labels {
            write_label_set(dir.join("labels").join(format!("{}.json", set.video_id)), set)?;
        }
        let path = dir.join("manifest.json");
        std::fs::write(&path, self.manifest.to_json()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
