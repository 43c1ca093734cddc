use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FeatureSequence, SnippetLabels};
use crate::{Error, Result};

/// Endpoint-aligned linear interpolation to `target_len` rows.
///
/// Output row `j` sits at source position `j * (T - 1) / (target_len - 1)`.
/// The frame rate is rescaled so the sequence keeps its duration.
pub fn rescale_features(seq: &FeatureSequence, target_len: usize) -> Result<FeatureSequence> {
    if target_len < 2 {
        return Err(Error::invalid("target_len", format!("{target_len} < 2")));
    }
    let positions = interpolation_positions(seq.length, target_len);
    let mut data = Vec::with_capacity(target_len * seq.dims);
    for &pos in &positions {
        interpolate_row(seq, pos, &mut data);
    }
    Ok(FeatureSequence {
        video_id: seq.video_id.clone(),
        dims: seq.dims,
        length: target_len,
        data,
        snippet_len: seq.snippet_len,
        frame_rate: seq.frame_rate * target_len as f64 / seq.length as f64,
    })
}

fn interpolation_positions(len: usize, target_len: usize) -> Vec<f64> {
    let span = (len - 1) as f64;
    let denom = (target_len - 1) as f64;
    (0..target_len).map(|j| (j as f64 * span) / denom).collect()
}

fn interpolate_row(seq: &FeatureSequence, pos: f64, out: &mut Vec<f32>) {
    let lo = (pos.floor() as usize).min(seq.length - 1);
    let frac = pos - lo as f64;
    let a = seq.row(lo);
    if frac == 0.0 || lo + 1 >= seq.length {
        out.extend_from_slice(a);
        return;
    }
    let b = seq.row(lo + 1);
    out.extend(
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x as f64 + (y as f64 - x as f64) * frac) as f32),
    );
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    /// One uniformly random index per stratum.
    Stochastic,
    /// The (floored) midpoint of each stratum.
    Deterministic,
}

/// A fixed-length training view of one video.
#[derive(Debug, Clone)]
pub struct Resampled {
    pub features: FeatureSequence,
    pub labels: SnippetLabels,
    /// Source position (possibly fractional) of every retained row.
    pub source_positions: Vec<f64>,
}

/// Brings a sequence to exactly `target_len` snippets.
///
/// Longer sequences are split into `target_len` equal strata with one index
/// kept per stratum; shorter ones are linearly upsampled. Each label moves to
/// the retained row whose source position is nearest (earlier row on ties).
pub fn sample_to_train_length(
    seq: &FeatureSequence,
    labels: &SnippetLabels,
    target_len: usize,
    mode: SamplingMode,
    seed: u64,
) -> Result<Resampled> {
    if target_len == 0 {
        return Err(Error::invalid("target_len", "must be >= 1"));
    }
    labels.check_range(seq.length)?;
    let t = seq.length;
    let (features, source_positions) = if t >= target_len {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let indices: Vec<usize> = (0..target_len)
            .map(|j| {
                let lo = j * t / target_len;
                let hi = (j + 1) * t / target_len;
                match mode {
                    SamplingMode::Deterministic => ((2 * j + 1) * t / (2 * target_len)).clamp(lo, hi - 1),
                    SamplingMode::Stochastic => rng.random_range(lo..hi),
                }
            })
            .collect();
        let mut data = Vec::with_capacity(target_len * seq.dims);
        for &i in &indices {
            data.extend_from_slice(seq.row(i));
        }
        let features = FeatureSequence {
            video_id: seq.video_id.clone(),
            dims: seq.dims,
            length: target_len,
            data,
            snippet_len: seq.snippet_len,
            frame_rate: seq.frame_rate * target_len as f64 / t as f64,
        };
        (features, indices.into_iter().map(|i| i as f64).collect::<Vec<_>>())
    } else {
        let features = if target_len == 1 {
            seq.clone()
        } else {
            rescale_features(seq, target_len)?
        };
        let positions = if target_len == 1 {
            vec![0.0]
        } else {
            interpolation_positions(t, target_len)
        };
        (features, positions)
    };

    let mut mapped = SnippetLabels::new();
    for (src, classes) in labels.iter() {
        mapped.insert(nearest_position(&source_positions, src as f64), classes.iter().copied());
    }
    Ok(Resampled {
        features,
        labels: mapped,
        source_positions,
    })
}

fn nearest_position(positions: &[f64], target: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (j, &p) in positions.iter().enumerate() {
        let d = (p - target).abs();
        if d < best_dist {
            best = j;
            best_dist = d;
        }
    }
    best
}
