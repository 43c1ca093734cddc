use crate::corpus::SnippetLabels;
use crate::model::ScoringOutputs;
use crate::{Error, Result, PROB_EPS};

/// Focal point loss, split into its foreground and background parts.
#[derive(Debug, Clone, PartialEq)]
pub struct PointLoss {
    pub fg: f64,
    pub bg: f64,
    /// `C × T`
    pub d_s: Vec<f64>,
    /// `T`
    pub d_a: Vec<f64>,
}

impl PointLoss {
    pub fn value(&self) -> f64 {
        self.fg + self.bg
    }
}

/// Clamped probability and the derivative of the clamp.
fn clamped(p: f64) -> (f64, f64) {
    if p < PROB_EPS {
        (PROB_EPS, 0.0)
    } else if p > 1.0 - PROB_EPS {
        (1.0 - PROB_EPS, 0.0)
    } else {
        (p, 1.0)
    }
}

/// `(1-p)^2 ln p` and its derivative.
fn pos_term(p: f64) -> (f64, f64) {
    let (q, dq) = clamped(p);
    let v = (1.0 - q).powi(2) * q.ln();
    let d = -2.0 * (1.0 - q) * q.ln() + (1.0 - q).powi(2) / q;
    (v, d * dq)
}

/// `p^2 ln(1-p)` and its derivative.
fn neg_term(p: f64) -> (f64, f64) {
    let (q, dq) = clamped(p);
    let v = q * q * (1.0 - q).ln();
    let d = 2.0 * q * (1.0 - q).ln() - q * q / (1.0 - q);
    (v, d * dq)
}

/// Focal loss (exponent 2) on the labeled snippets. Foreground and
/// background parts are each averaged over their own labels; an empty part
/// contributes zero.
pub fn point_loss(out: &ScoringOutputs, labels: &SnippetLabels) -> Result<PointLoss> {
    let t_len = out.length;
    let c = out.classes;
    labels.check_range(t_len)?;
    if let Some(k) = labels.max_class().filter(|&k| k >= c) {
        return Err(Error::IndexOutOfRange { index: k, len: c });
    }
    let n_fg = labels.foreground().count();
    let n_bg = labels.len() - n_fg;
    let mut d_s = vec![0.0; c * t_len];
    let mut d_a = vec![0.0; t_len];
    let mut fg = 0.0;
    let mut bg = 0.0;

    for (t, classes) in labels.iter() {
        if classes.is_empty() {
            let w = -1.0 / n_bg as f64;
            let (v, d) = neg_term(out.a[t]);
            bg += w * v;
            d_a[t] += w * d;
            for k in 0..c {
                let i = k * t_len + t;
                let (v, d) = neg_term(out.s[i]);
                bg += w * v;
                d_s[i] += w * d;
            }
        } else {
            let w = -1.0 / n_fg as f64;
            let (v, d) = pos_term(out.a[t]);
            fg += w * v;
            d_a[t] += w * d;
            for k in 0..c {
                let i = k * t_len + t;
                let (v, d) = if classes.contains(&k) {
                    pos_term(out.s[i])
                } else {
                    neg_term(out.s[i])
                };
                fg += w * v;
                d_s[i] += w * d;
            }
        }
    }
    Ok(PointLoss { fg, bg, d_s, d_a })
}
