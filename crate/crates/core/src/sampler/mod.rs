//! Action-agnostic frame sampling and a ground-truth oracle annotator.
//!
//! Samplers only see durations (and, for clustering, features); they never
//! look at labels. [`annotate_oracle`] stands in for the human annotator in
//! synthetic experiments.

mod kmeans;
mod pca;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, KMeans};
pub use pca::{pca_reduce, Pca};

use crate::corpus::{FeatureSequence, GtSegment, PointLabel, PointLabelSet};
use crate::{Error, Result};

pub const DEFAULT_PCA_DIMS: usize = 64;

/// Frame midpoints `(k + 0.5) * interval` for every whole interval that fits.
pub fn sample_regular(duration: f64, interval: f64) -> Result<Vec<f64>> {
    if !(duration > 0.0) {
        return Err(Error::invalid("duration", "must be positive"));
    }
    if !(interval > 0.0) {
        return Err(Error::invalid("interval", "must be positive"));
    }
    Ok((0..regular_count(duration, interval))
        .map(|k| (k as f64 + 0.5) * interval)
        .collect())
}

fn regular_count(duration: f64, interval: f64) -> usize {
    // tolerate 0.3 / 0.1 = 2.9999999999999996
    (duration / interval + 1e-9).floor() as usize
}

/// `count` uniform draws on `[0, duration)`, sorted.
pub fn sample_random(duration: f64, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<f64> = (0..count).map(|_| rng.random::<f64>() * duration).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Clustering-based sampling: PCA-reduce the snippet features, run k-means
/// with `k = max(1, round(duration / interval))`, and return the center time
/// of the member snippet nearest each cluster center.
pub fn sample_clustering(
    seq: &FeatureSequence,
    interval: f64,
    pca_dims: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(interval > 0.0) {
        return Err(Error::invalid("interval", "must be positive"));
    }
    let n = seq.length;
    if n == 1 {
        return Ok(vec![seq.center_time(0)]);
    }
    let k = ((seq.duration() / interval).round() as usize).clamp(1, n);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|t| seq.row(t).iter().map(|&v| v as f64).collect())
        .collect();
    let dims = pca_dims.clamp(1, n.min(seq.dims));
    let reduced = pca_reduce(&rows, dims)?;
    let km = kmeans(&reduced.projected, k, seed)?;

    let mut picks: Vec<Option<(usize, f64)>> = vec![None; k];
    for (i, (p, &a)) in reduced.projected.iter().zip(&km.assignments).enumerate() {
        let d: f64 = p.iter().zip(&km.centers[a]).map(|(x, c)| (x - c) * (x - c)).sum();
        if picks[a].is_none_or(|(_, best)| d < best) {
            picks[a] = Some((i, d));
        }
    }
    let mut out: Vec<f64> = picks
        .into_iter()
        .flatten()
        .map(|(i, _)| seq.center_time(i).min(seq.duration()))
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

/// Labels each timestamp with every ground-truth class whose segment
/// contains it (`start <= t < end`); background otherwise.
pub fn annotate_oracle(video_id: &str, timestamps: &[f64], ground_truth: &[GtSegment]) -> PointLabelSet {
    let labels = timestamps
        .iter()
        .map(|&t| {
            PointLabel::new(
                t,
                ground_truth
                    .iter()
                    .filter(|g| g.start <= t && t < g.end)
                    .map(|g| g.class_index),
            )
        })
        .collect();
    PointLabelSet::new(video_id, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum SamplingMethod {
    Regular {
        interval: f64,
    },
    /// Random frames with the same budget as regular sampling at `interval`.
    Random {
        interval: f64,
        seed: u64,
    },
    Clustering {
        interval: f64,
        #[serde(default = "default_pca_dims")]
        pca_dims: usize,
        seed: u64,
    },
}

fn default_pca_dims() -> usize {
    DEFAULT_PCA_DIMS
}

impl SamplingMethod {
    pub fn interval(&self) -> f64 {
        match *self {
            SamplingMethod::Regular { interval }
            | SamplingMethod::Random { interval, .. }
            | SamplingMethod::Clustering { interval, .. } => interval,
        }
    }
}

/// Frames chosen for one video, handed to the annotators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub video_id: String,
    pub timestamps: Vec<f64>,
    pub params: SamplingMethod,
}

impl SamplingPlan {
    /// Builds the plan for one video. Seeded methods mix the video id into
    /// the seed so every video gets its own stream.
    pub fn build(
        video_id: &str,
        duration: f64,
        features: Option<&FeatureSequence>,
        method: SamplingMethod,
    ) -> Result<Self> {
        let timestamps = match method {
            SamplingMethod::Regular { interval } => sample_regular(duration, interval)?,
            SamplingMethod::Random { interval, seed } => {
                if !(interval > 0.0) {
                    return Err(Error::invalid("interval", "must be positive"));
                }
                let mut ts = sample_random(duration, regular_count(duration, interval), mix_seed(seed, video_id));
                ts.dedup();
                ts
            }
            SamplingMethod::Clustering { interval, pca_dims, seed } => {
                let seq = features.ok_or_else(|| {
                    Error::invalid("features", format!("clustering needs features for {video_id:?}"))
                })?;
                sample_clustering(seq, interval, pca_dims, mix_seed(seed, video_id))?
                    .into_iter()
                    .map(|t| t.min(duration))
                    .collect()
            }
        };
        Ok(Self {
            video_id: video_id.to_string(),
            timestamps,
            params: method,
        })
    }

    pub fn contains(&self, t: f64) -> bool {
        self.timestamps.iter().any(|&s| (s - t).abs() <= 1e-6)
    }
}

/// FNV-1a over the id, folded into the seed.
pub fn mix_seed(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}
