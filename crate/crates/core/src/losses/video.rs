use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{clamp_prob, sigmoid, Error, Result, PROB_EPS};

/// Pooling-ratio divisors for the top-k (foreground) and bottom-k
/// (background) pools.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoLossConfig {
    pub r_fg: f64,
    pub r_bg: f64,
}

impl Default for VideoLossConfig {
    fn default() -> Self {
        Self { r_fg: 8.0, r_bg: 3.0 }
    }
}

/// `max(1, floor(T / r))`.
pub fn pool_size(length: usize, ratio: f64) -> usize {
    ((length as f64 / ratio).floor() as usize).max(1)
}

/// Multi-hot video label: class `c` is on iff some label carries it.
pub fn video_label<'a>(class_sets: impl IntoIterator<Item = &'a BTreeSet<usize>>, num_classes: usize) -> Vec<f64> {
    let mut y = vec![0.0; num_classes];
    for set in class_sets {
        for &c in set {
            if c < num_classes {
                y[c] = 1.0;
            }
        }
    }
    y
}

/// Result of a logit pool over one score row.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub value: f64,
    /// Selected positions, in selection order.
    pub indices: Vec<usize>,
    /// Some selected score had to be clamped away from 0 or 1.
    pub clamped: bool,
}

impl Pooled {
    /// `d value / d row[t]` for every selected `t` (zero where clamped).
    pub fn gradient(&self, row: &[f64]) -> Vec<(usize, f64)> {
        let k = self.indices.len() as f64;
        let outer = self.value * (1.0 - self.value) / k;
        self.indices
            .iter()
            .map(|&t| {
                let p = row[t];
                let g = if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
                    0.0
                } else {
                    outer / (p * (1.0 - p))
                };
                (t, g)
            })
            .collect()
    }
}

fn logit(p: f64) -> f64 {
    let q = clamp_prob(p);
    (q / (1.0 - q)).ln()
}

fn pool(row: &[f64], k: usize, largest: bool) -> Result<Pooled> {
    if k == 0 || k > row.len() {
        return Err(Error::invalid("k", format!("{k} not in 1..={}", row.len())));
    }
    let mut order: Vec<usize> = (0..row.len()).collect();
    // stable sort keeps earlier indices first among ties
    if largest {
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    } else {
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
    }
    order.truncate(k);
    let clamped = order.iter().any(|&t| row[t] < PROB_EPS || row[t] > 1.0 - PROB_EPS);
    if clamped {
        log::warn!("logit pooling clamped a score to [{PROB_EPS}, {}]", 1.0 - PROB_EPS);
    }
    let mean = order.iter().map(|&t| logit(row[t])).sum::<f64>() / k as f64;
    Ok(Pooled {
        value: sigmoid(mean),
        indices: order,
        clamped,
    })
}

/// `σ(mean of the k largest σ⁻¹(row))`.
pub fn topk_pool_logit(row: &[f64], k: usize) -> Result<Pooled> {
    pool(row, k, true)
}

/// `σ(mean of the k smallest σ⁻¹(row))`.
pub fn bottomk_pool_logit(row: &[f64], k: usize) -> Result<Pooled> {
    pool(row, k, false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoLoss {
    pub pos: f64,
    pub neg: f64,
    /// `C × T`
    pub d_p: Vec<f64>,
}

impl VideoLoss {
    pub fn value(&self) -> f64 {
        self.pos + self.neg
    }
}

/// Positive part over classes present in `y` (absent classes are left out,
/// not pushed down); negative part over every class, on bottom-k pools.
pub fn video_loss(p: &[f64], length: usize, y: &[f64], cfg: &VideoLossConfig) -> Result<VideoLoss> {
    let c = y.len();
    if length == 0 || p.len() != c * length {
        return Err(Error::Shape(format!("P has {} values for C={c}, T={length}", p.len())));
    }
    let k_pos = pool_size(length, cfg.r_fg);
    let k_neg = pool_size(length, cfg.r_bg);
    let mut d_p = vec![0.0; p.len()];
    let mut pos = 0.0;
    let mut neg = 0.0;
    for k in 0..c {
        let row = &p[k * length..(k + 1) * length];
        if y[k] > 0.0 {
            let top = topk_pool_logit(row, k_pos)?;
            pos -= y[k] * top.value.ln();
            let outer = -y[k] / top.value;
            for (t, g) in top.gradient(row) {
                d_p[k * length + t] += outer * g;
            }
        }
        let bottom = bottomk_pool_logit(row, k_neg)?;
        neg -= (1.0 - bottom.value).ln();
        let outer = 1.0 / (1.0 - bottom.value);
        for (t, g) in bottom.gradient(row) {
            d_p[k * length + t] += outer * g;
        }
    }
    Ok(VideoLoss { pos, neg, d_p })
}
