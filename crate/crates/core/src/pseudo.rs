//! Ground-truth anchored pseudo-labels.
//!
//! A maximal run of snippets whose fused score for class `c` exceeds `theta_fg`
//! becomes class-`c` foreground if it holds at least one point label and every
//! point label inside it carries `c`. A maximal run whose actionness is below
//! `theta_bg` becomes background if it holds a background label and no
//! foreground label. Thresholds are strict, so `theta_fg = 1` and
//! `theta_bg = 0` switch the mechanism off.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::SnippetLabels;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelConfig {
    pub theta_fg: f64,
    pub theta_bg: f64,
    #[serde(default = "default_enabled")]
    pub enabled: bool,
    /// Fraction of the iteration budget trained on point labels only.
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
}

fn default_enabled() -> bool {
    true
}

fn default_warmup() -> f64 {
    0.2
}

impl PseudoLabelConfig {
    pub fn new(theta_fg: f64, theta_bg: f64) -> Self {
        Self { theta_fg, theta_bg, enabled: true, warmup_fraction: default_warmup() }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("theta_fg", self.theta_fg), ("theta_bg", self.theta_bg), ("warmup_fraction", self.warmup_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(field, format!("{v} not in [0, 1]")));
            }
        }
        Ok(())
    }

    /// Whether pseudo-labels replace point labels at `iteration`.
    pub fn active_at(&self, iteration: usize, max_iterations: usize) -> bool {
        self.enabled && iteration as f64 >= self.warmup_fraction * max_iterations as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct PseudoLabelSet {
    /// Snippet index to pseudo-foreground classes.
    pub foreground: BTreeMap<usize, BTreeSet<usize>>,
    pub background: BTreeSet<usize>,
    /// Snippet index to the first point-label index anchoring it.
    pub provenance: BTreeMap<usize, usize>,
}

impl PseudoLabelSet {
    /// Original labels extended by the pseudo-labels.
    pub fn merged_labels(&self, original: &SnippetLabels) -> SnippetLabels {
        let mut out = original.clone();
        for &i in &self.background {
            out.insert(i, []);
        }
        for (&i, c) in &self.foreground {
            out.insert(i, c.iter().copied());
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.foreground.is_empty() && self.background.is_empty()
    }
}

/// Maximal runs `[start, end)` of indices satisfying `pred`.
fn runs(len: usize, pred: impl Fn(usize) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for t in 0..=len {
        match (t < len && pred(t), start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                out.push((s, t));
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// `p` is C×T channel-major, `a` has length T.
pub fn generate_pseudo_labels(
    p: &[f64],
    classes: usize,
    a: &[f64],
    labels: &SnippetLabels,
    cfg: &PseudoLabelConfig,
) -> Result<PseudoLabelSet> {
    let len = a.len();
    if p.len() != classes * len {
        return Err(Error::Shape(format!("scores of length {} for {classes}x{len}", p.len())));
    }
    labels.check_range(len)?;
    let mut out = PseudoLabelSet::default();
    if !cfg.enabled {
        return Ok(out);
    }
    let inside = |s: usize, e: usize| labels.iter().filter(move |&(i, _)| i >= s && i < e);

    for c in 0..classes {
        let row = &p[c * len..(c + 1) * len];
        for (s, e) in runs(len, |t| row[t] > cfg.theta_fg) {
            let mut anchor = None;
            let mut consistent = true;
            for (i, set) in inside(s, e) {
                anchor.get_or_insert(i);
                consistent &= set.contains(&c);
            }
            let (Some(anchor), true) = (anchor, consistent) else { continue };
            for t in s..e {
                out.foreground.entry(t).or_default().insert(c);
                out.provenance.entry(t).or_insert(anchor);
            }
        }
    }

    for (s, e) in runs(len, |t| a[t] < cfg.theta_bg) {
        let mut anchor = None;
        let mut clean = true;
        for (i, set) in inside(s, e) {
            if set.is_empty() {
                anchor.get_or_insert(i);
            } else {
                clean = false;
            }
        }
        let (Some(anchor), true) = (anchor, clean) else { continue };
        for t in (s..e).filter(|t| !out.foreground.contains_key(t)) {
            out.background.insert(t);
            out.provenance.entry(t).or_insert(anchor);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(items: &[(usize, &[usize])]) -> SnippetLabels {
        items.iter().map(|(i, c)| (*i, c.iter().copied().collect())).collect()
    }

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn foreground_run_expands() {
        let p = [0.9, 0.9, 0.9, 0.1, 0.1];
        let out = generate_pseudo_labels(&p, 1, &[0.5; 5], &labels(&[(1, &[0])]), &PseudoLabelConfig::new(0.8, 0.0)).unwrap();
        assert_eq!(out.foreground.keys().copied().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(out.foreground.values().all(|c| *c == set(&[0])));
        assert!(out.provenance.values().all(|&a| a == 1));
    }

    #[test]
    fn background_label_inside_rejects_run() {
        let p = [0.9, 0.9, 0.9, 0.1, 0.1];
        let orig = labels(&[(1, &[0]), (2, &[])]);
        let out = generate_pseudo_labels(&p, 1, &[0.5; 5], &orig, &PseudoLabelConfig::new(0.8, 0.0)).unwrap();
        assert!(out.is_empty());
        assert_eq!(out.merged_labels(&orig), orig);
    }

    #[test]
    fn background_run_expands() {
        let a = [0.01, 0.01, 0.9, 0.01, 0.01];
        let out = generate_pseudo_labels(&[0.0; 5], 1, &a, &labels(&[(0, &[])]), &PseudoLabelConfig::new(1.0, 0.05)).unwrap();
        assert_eq!(out.background, set(&[0, 1]));
        assert!(out.foreground.is_empty());
    }

    #[test]
    fn background_run_with_foreground_label_rejected() {
        let a = [0.01; 4];
        let out = generate_pseudo_labels(&[0.0; 4], 1, &a, &labels(&[(0, &[]), (3, &[0])]), &PseudoLabelConfig::new(1.0, 0.05)).unwrap();
        assert!(out.background.is_empty());
    }

    #[test]
    fn multi_class_labels() {
        // class 0 run covers both labels; class 1 run covers only {0,1}
        let p = [0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.2, 0.2];
        let out = generate_pseudo_labels(&p, 2, &[0.5; 4], &labels(&[(1, &[0, 1]), (3, &[0])]), &PseudoLabelConfig::new(0.5, 0.0)).unwrap();
        assert_eq!(out.foreground[&0], set(&[0, 1]));
        assert_eq!(out.foreground[&1], set(&[0, 1]));
        assert_eq!(out.foreground[&2], set(&[0]));
        assert_eq!(out.foreground[&3], set(&[0]));
    }

    #[test]
    fn foreground_wins_over_background() {
        let p = [0.9, 0.9, 0.1];
        let a = [0.01, 0.01, 0.01];
        let out = generate_pseudo_labels(&p, 1, &a, &labels(&[(0, &[0]), (2, &[])]), &PseudoLabelConfig::new(0.5, 0.05)).unwrap();
        assert_eq!(out.foreground.keys().copied().collect::<Vec<_>>(), vec![0, 1]);
        // the background run spans all three but holds a foreground label
        assert!(out.background.is_empty());
        let out = generate_pseudo_labels(&p, 1, &a, &labels(&[(1, &[0]), (2, &[])]), &PseudoLabelConfig::new(0.5, 0.05)).unwrap();
        assert!(out.background.is_empty());
    }

    #[test]
    fn disabled_flag_and_errors() {
        let mut cfg = PseudoLabelConfig::new(0.1, 0.9);
        cfg.enabled = false;
        assert!(generate_pseudo_labels(&[0.9; 3], 1, &[0.0; 3], &labels(&[(0, &[0])]), &cfg).unwrap().is_empty());
        assert!(generate_pseudo_labels(&[0.9; 2], 1, &[0.0; 3], &labels(&[]), &cfg).is_err());
        assert!(generate_pseudo_labels(&[0.9; 3], 1, &[0.0; 3], &labels(&[(3, &[])]), &cfg).is_err());
        assert!(PseudoLabelConfig::new(1.5, 0.0).validate().is_err());
        assert!(!PseudoLabelConfig::new(0.5, 0.5).active_at(19, 100));
        assert!(PseudoLabelConfig::new(0.5, 0.5).active_at(20, 100));
    }

    fn instance() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, SnippetLabels)> {
        (1usize..4, 1usize..16).prop_flat_map(|(c, t)| {
            (
                Just(c),
                prop::collection::vec(0.0..=1.0f64, c * t),
                prop::collection::vec(0.0..=1.0f64, t),
                prop::collection::btree_map(0..t, prop::collection::btree_set(0..c, 0..=c), 0..=t),
            )
                .prop_map(|(c, p, a, m)| (c, p, a, m.into_iter().collect()))
        })
    }

    proptest! {
        #[test]
        fn disabling_thresholds_return_originals((c, p, a, l) in instance()) {
            let out = generate_pseudo_labels(&p, c, &a, &l, &PseudoLabelConfig::new(1.0, 0.0)).unwrap();
            prop_assert!(out.is_empty());
            prop_assert_eq!(out.merged_labels(&l), l);
        }

        #[test]
        fn invariants((c, p, a, l) in instance(), fg in 0.0..1.0f64, bg in 0.0..1.0f64) {
            let out = generate_pseudo_labels(&p, c, &a, &l, &PseudoLabelConfig::new(fg, bg)).unwrap();
            let merged = out.merged_labels(&l);
            for (i, classes) in l.iter() {
                prop_assert_eq!(merged.get(i), Some(classes));
            }
            for (t, classes) in &out.foreground {
                prop_assert!(!out.background.contains(t));
                let anchor = out.provenance[t];
                prop_assert!(l.get(anchor).is_some());
                for &k in classes {
                    prop_assert!(p[k * a.len() + t] > fg);
                    if let Some(orig) = l.get(*t) {
                        prop_assert!(orig.contains(&k));
                    }
                }
            }
            for t in &out.background {
                prop_assert!(a[*t] < bg);
                prop_assert!(l.get(*t).is_none_or(|c| c.is_empty()));
                prop_assert!(l.get(out.provenance[t]).is_some_and(|c| c.is_empty()));
            }
        }
    }
}
