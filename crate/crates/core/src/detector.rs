//! Turns per-snippet scores into scored action instances.
//!
//! Per class: upsample to frame rate, collect runs above each threshold,
//! score every run by outer-inner contrast, then decay duplicates with
//! Gaussian soft-NMS.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::VideoRecord;
use crate::model::ScoringOutputs;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionInstance {
    pub video_id: String,
    /// Seconds.
    pub start: f64,
    pub end: f64,
    #[serde(rename = "class")]
    pub class_index: usize,
    #[serde(rename = "score")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub thresholds: Vec<f64>,
    pub oic_inflation: f64,
    pub nms_sigma: f64,
    pub nms_min_score: f64,
    /// Score at frame resolution; otherwise one step per snippet.
    pub upsample: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            thresholds: (0..17).map(|i| (10 + 5 * i) as f64 / 100.0).collect(),
            oic_inflation: 0.25,
            nms_sigma: 0.3,
            nms_min_score: 1e-4,
            upsample: true,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::invalid("thresholds", format!("{t} not in (0, 1)")));
        }
        if !(self.oic_inflation >= 0.0) {
            return Err(Error::invalid("oic_inflation", "must be non-negative"));
        }
        if !(self.nms_sigma > 0.0) {
            return Err(Error::invalid("nms_sigma", "must be positive"));
        }
        if !(self.nms_min_score >= 0.0) {
            return Err(Error::invalid("nms_min_score", "must be non-negative"));
        }
        Ok(())
    }
}

/// Linear interpolation of snippet scores at frame times. Frame `f` sits at
/// `f / fps`, snippet `t` is centred at `(t + 0.5) · snippet_len / fps`; the
/// frame rate cancels, so only the snippet length matters.
pub fn upsample_scores(row: &[f64], snippet_len: usize) -> Vec<f64> {
    let t_len = row.len();
    let frames = t_len * snippet_len;
    if t_len == 0 {
        return Vec::new();
    }
    (0..frames)
        .map(|f| {
            let x = f as f64 / snippet_len as f64 - 0.5;
            if x <= 0.0 {
                row[0]
            } else if x >= (t_len - 1) as f64 {
                row[t_len - 1]
            } else {
                let i = x.floor() as usize;
                let w = x - i as f64;
                row[i] * (1.0 - w) + row[i + 1] * w
            }
        })
        .collect()
}

/// Maximal runs `[start, end)` with score strictly above each threshold, in
/// threshold order. Duplicates across thresholds are kept.
pub fn candidate_runs(scores: &[f64], thresholds: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for &th in thresholds {
        let mut start = None;
        for (i, &s) in scores.iter().chain([f64::NEG_INFINITY].iter()).enumerate() {
            match (s > th, start) {
                (true, None) => start = Some(i),
                (false, Some(b)) => {
                    out.push((b, i));
                    start = None;
                }
                _ => {}
            }
        }
    }
    out
}

/// [`candidate_runs`] in seconds, for frames at `frame_rate`.
pub fn generate_candidates(scores: &[f64], thresholds: &[f64], frame_rate: f64) -> Vec<(f64, f64)> {
    candidate_runs(scores, thresholds)
        .into_iter()
        .map(|(s, e)| (s as f64 / frame_rate, e as f64 / frame_rate))
        .collect()
}

/// Inner mean minus the mean over flanks of `ceil(inflation · L)` frames on
/// each side, clipped to the sequence. An empty flank set has mean 0.
pub fn oic_score(scores: &[f64], start: usize, end: usize, inflation: f64) -> Result<f64> {
    if start >= end || end > scores.len() {
        return Err(Error::invalid("interval", format!("[{start}, {end}) in a sequence of {}", scores.len())));
    }
    let len = end - start;
    let flank = (inflation * len as f64).ceil() as usize;
    let inner = scores[start..end].iter().sum::<f64>() / len as f64;
    let left = &scores[start.saturating_sub(flank)..start];
    let right = &scores[end..(end + flank).min(scores.len())];
    let n_outer = left.len() + right.len();
    let outer = if n_outer == 0 {
        0.0
    } else {
        (left.iter().sum::<f64>() + right.iter().sum::<f64>()) / n_outer as f64
    };
    Ok(inner - outer)
}

fn interval_iou(a: &ActionInstance, b: &ActionInstance) -> f64 {
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = (a.end - a.start) + (b.end - b.start) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Gaussian soft-NMS over one (video, class) group. Returns survivors in
/// selection order, which is non-increasing in confidence.
pub fn soft_nms(instances: Vec<ActionInstance>, sigma: f64, min_score: f64) -> Vec<ActionInstance> {
    let mut pool: Vec<ActionInstance> = instances.into_iter().filter(|i| i.confidence >= min_score).collect();
    let mut kept = Vec::with_capacity(pool.len());
    while !pool.is_empty() {
        let mut best = 0;
        for (i, inst) in pool.iter().enumerate() {
            if inst.confidence > pool[best].confidence {
                best = i;
            }
        }
        let top = pool.remove(best);
        for inst in &mut pool {
            let iou = interval_iou(&top, inst);
            inst.confidence *= (-iou * iou / sigma).exp();
        }
        pool.retain(|i| i.confidence >= min_score);
        kept.push(top);
    }
    kept
}

/// Instances for one video from eval-mode model outputs, sorted by
/// confidence (stable, so class order breaks ties).
pub fn detect(outputs: &ScoringOutputs, record: &VideoRecord, cfg: &DetectorConfig) -> Result<Vec<ActionInstance>> {
    cfg.validate()?;
    let (steps_per_snippet, step_rate) = if cfg.upsample {
        (record.snippet_len, record.frame_rate)
    } else {
        (1, record.frame_rate / record.snippet_len as f64)
    };
    let mut all = Vec::new();
    for c in 0..outputs.classes {
        let scores = upsample_scores(outputs.p_row(c), steps_per_snippet);
        let mut group = Vec::new();
        for (s, e) in candidate_runs(&scores, &cfg.thresholds) {
            let start = s as f64 / step_rate;
            let end = (e as f64 / step_rate).min(record.duration);
            if start >= end {
                continue;
            }
            group.push(ActionInstance {
                video_id: record.id.clone(),
                start,
                end,
                class_index: c,
                confidence: oic_score(&scores, s, e, cfg.oic_inflation)?,
            });
        }
        all.extend(soft_nms(group, cfg.nms_sigma, cfg.nms_min_score));
    }
    all.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    Ok(all)
}

pub fn predictions_to_json(preds: &[ActionInstance]) -> String {
    serde_json::to_string_pretty(preds).expect("predictions serialize")
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[ActionInstance]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, predictions_to_json(preds)).map_err(|e| Error::io(path, e))
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<ActionInstance>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}
