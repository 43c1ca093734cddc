//! Mean average precision at temporal IoU thresholds.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::DatasetManifest;
use crate::detector::ActionInstance;
use crate::{Error, Result};

/// Threshold families.
pub fn thresholds_for(preset: &str) -> Result<Vec<f64>> {
    match preset.to_ascii_lowercase().as_str() {
        "thumos" | "thumos14" | "gtea" | "beoid" => Ok((1..=7).map(|i| i as f64 / 10.0).collect()),
        "activitynet" | "anet" | "fineaction" => Ok((0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()),
        other => Err(Error::UnknownKey(format!("threshold preset {other:?}"))),
    }
}

pub fn tiou(a: (f64, f64), b: (f64, f64)) -> Result<f64> {
    for (s, e) in [a, b] {
        if !(s < e) {
            return Err(Error::invalid("interval", format!("[{s}, {e}] is degenerate")));
        }
    }
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    Ok(inter / ((a.1 - a.0) + (b.1 - b.0) - inter))
}

/// A prediction or ground-truth interval tagged with its video.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Tagged {
    video: usize,
    start: f64,
    end: f64,
}

/// Greedy matching in the given order; returns the true-positive flags.
fn match_greedy(preds: &[Tagged], gts: &[Tagged], threshold: f64) -> Result<Vec<bool>> {
    let mut taken = vec![false; gts.len()];
    let mut tp = Vec::with_capacity(preds.len());
    for p in preds {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gts.iter().enumerate() {
            if taken[j] || g.video != p.video {
                continue;
            }
            let iou = tiou((p.start, p.end), (g.start, g.end))?;
            if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
        }
        tp.push(best.is_some());
    }
    Ok(tp)
}

/// Sum of precision at each true-positive rank, divided by the GT count.
pub fn ap_from_flags(tp: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &hit) in tp.iter().enumerate() {
        if hit {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    sum / num_gt as f64
}

/// AP for one video and class. `preds` must already be in confidence order;
/// ties keep input order.
pub fn average_precision(preds: &[(f64, f64)], gts: &[(f64, f64)], threshold: f64) -> Result<f64> {
    let tag = |&(start, end): &(f64, f64)| Tagged { video: 0, start, end };
    let p: Vec<Tagged> = preds.iter().map(tag).collect();
    let g: Vec<Tagged> = gts.iter().map(tag).collect();
    Ok(ap_from_flags(&match_greedy(&p, &g, threshold)?, gts.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub class_names: Vec<String>,
    /// `ap[class][threshold]`; `None` for classes without ground truth.
    pub ap: Vec<Option<Vec<f64>>>,
    pub map: Vec<f64>,
    pub average_map: f64,
    pub num_ground_truth: Vec<usize>,
    pub num_predictions: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned columns, one per threshold plus the average.
    pub fn to_table(&self) -> String {
        let mut header = vec![String::from("class")];
        header.extend(self.thresholds.iter().map(|t| format!("mAP@{t}")));
        header.push("Avg".into());
        let mut rows = Vec::new();
        for (name, ap) in self.class_names.iter().zip(&self.ap) {
            let mut row = vec![name.clone()];
            match ap {
                Some(ap) => {
                    row.extend(ap.iter().map(|v| format!("{:.2}", 100.0 * v)));
                    row.push(format!("{:.2}", 100.0 * ap.iter().sum::<f64>() / ap.len() as f64));
                }
                None => row.extend(std::iter::repeat_n("-".to_string(), self.thresholds.len() + 1)),
            }
            rows.push(row);
        }
        let mut total = vec![String::from("mAP")];
        total.extend(self.map.iter().map(|v| format!("{:.2}", 100.0 * v)));
        total.push(format!("{:.2}", 100.0 * self.average_map));
        rows.push(total);

        let widths: Vec<usize> = (0..header.len())
            .map(|i| std::iter::once(&header).chain(&rows).map(|r| r[i].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&rows) {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

/// Evaluates predictions against the ground truth of every manifest video
/// that carries it.
pub fn evaluate(preds: &[ActionInstance], manifest: &DatasetManifest, thresholds: &[f64]) -> Result<EvalReport> {
    if thresholds.is_empty() {
        return Err(Error::Empty("threshold set".into()));
    }
    let classes = manifest.num_classes();
    let video_index: HashMap<&str, usize> = manifest
        .videos
        .iter()
        .enumerate()
        .filter(|(_, v)| v.ground_truth.is_some())
        .map(|(i, v)| (v.id.as_str(), i))
        .collect();
    if video_index.is_empty() {
        return Err(Error::Empty("ground truth".into()));
    }

    let mut gts: Vec<Vec<Tagged>> = vec![Vec::new(); classes];
    for (i, v) in manifest.videos.iter().enumerate() {
        for seg in v.ground_truth.iter().flatten() {
            gts[seg.class_index].push(Tagged { video: i, start: seg.start, end: seg.end });
        }
    }

    let mut order: Vec<&ActionInstance> = preds.iter().collect();
    order.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut by_class: Vec<Vec<Tagged>> = vec![Vec::new(); classes];
    for p in order {
        let video = *video_index
            .get(p.video_id.as_str())
            .ok_or_else(|| Error::UnknownKey(format!("prediction for video {:?} without ground truth", p.video_id)))?;
        if p.class_index >= classes {
            return Err(Error::IndexOutOfRange { index: p.class_index, len: classes });
        }
        by_class[p.class_index].push(Tagged { video, start: p.start, end: p.end });
    }

    let mut ap = Vec::with_capacity(classes);
    for c in 0..classes {
        if gts[c].is_empty() {
            ap.push(None);
            continue;
        }
        let row = thresholds
            .iter()
            .map(|&th| Ok(ap_from_flags(&match_greedy(&by_class[c], &gts[c], th)?, gts[c].len())))
            .collect::<Result<Vec<f64>>>()?;
        ap.push(Some(row));
    }
    let scored: Vec<&Vec<f64>> = ap.iter().flatten().collect();
    if scored.is_empty() {
        return Err(Error::Empty("ground-truth instances".into()));
    }
    let map: Vec<f64> = (0..thresholds.len())
        .map(|k| scored.iter().map(|r| r[k]).sum::<f64>() / scored.len() as f64)
        .collect();
    let average_map = map.iter().sum::<f64>() / map.len() as f64;
    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        class_names: manifest.class_names.clone(),
        ap,
        map,
        average_map,
        num_ground_truth: gts.iter().map(Vec::len).collect(),
        num_predictions: preds.len(),
    })
}
