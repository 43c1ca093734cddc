use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    pub weight: f64,
}

/// Per-class prototypes, kept as exponential moving averages of labeled
/// embeddings. Classes never seen with a label stay uninitialized and are
/// skipped by the loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    pub prototypes: Vec<Vec<f64>>,
    pub momentum: f64,
    pub initialized: Vec<bool>,
}

/// An embedding of a foreground-labeled snippet.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbedding {
    pub z: Vec<f64>,
    pub classes: BTreeSet<usize>,
}

fn class_means<'a>(
    items: impl IntoIterator<Item = (&'a BTreeSet<usize>, &'a [f64])>,
    classes: usize,
    dims: usize,
) -> Vec<Option<Vec<f64>>> {
    let mut sums = vec![vec![0.0; dims]; classes];
    let mut counts = vec![0usize; classes];
    for (set, z) in items {
        for &c in set {
            if c >= classes {
                continue;
            }
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(z) {
                *s += v;
            }
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(mut s, n)| {
            (n > 0).then(|| {
                s.iter_mut().for_each(|v| *v /= n as f64);
                s
            })
        })
        .collect()
}

impl PrototypeBank {
    pub fn new(classes: usize, dims: usize, momentum: f64) -> Result<Self> {
        if !(momentum > 0.0 && momentum <= 1.0) {
            return Err(Error::invalid("momentum", format!("{momentum} not in (0, 1]")));
        }
        Ok(Self {
            prototypes: vec![vec![0.0; dims]; classes],
            momentum,
            initialized: vec![false; classes],
        })
    }

    pub fn classes(&self) -> usize {
        self.prototypes.len()
    }

    pub fn dims(&self) -> usize {
        self.prototypes.first().map_or(0, Vec::len)
    }

    /// Sets every prototype to the mean embedding of its labeled snippets
    /// over the whole training set.
    pub fn initialize<'a>(&mut self, items: impl IntoIterator<Item = (&'a BTreeSet<usize>, &'a [f64])>) {
        let means = class_means(items, self.classes(), self.dims());
        for (c, m) in means.into_iter().enumerate() {
            match m {
                Some(m) => {
                    self.prototypes[c] = m;
                    self.initialized[c] = true;
                }
                None => {
                    self.prototypes[c].iter_mut().for_each(|v| *v = 0.0);
                    self.initialized[c] = false;
                }
            }
        }
    }

    /// `q ← (1 − μ) q + μ · batch mean`, for initialized classes present in
    /// the batch.
    pub fn update<'a>(&mut self, items: impl IntoIterator<Item = (&'a BTreeSet<usize>, &'a [f64])>) {
        let mu = self.momentum;
        let means = class_means(items, self.classes(), self.dims());
        for (c, m) in means.into_iter().enumerate() {
            if let (Some(m), true) = (m, self.initialized[c]) {
                for (q, v) in self.prototypes[c].iter_mut().zip(m) {
                    *q = (1.0 - mu) * *q + mu * v;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveLoss {
    pub value: f64,
    /// Gradient per batch entry, same order as the input.
    pub d_z: Vec<Vec<f64>>,
    /// No foreground entry in the batch; the loss is zero.
    pub empty: bool,
}

/// Prototype-anchored supervised contrastive loss over a batch.
///
/// For each initialized class `c` with labeled entries, averages
/// `−ln softmax_j(q_c·z_j / τ)` over its entries, the softmax running over
/// every foreground entry of the batch. Class terms are summed.
pub fn contrastive_loss(
    batch: &[LabeledEmbedding],
    bank: &PrototypeBank,
    cfg: &ContrastiveConfig,
) -> Result<ContrastiveLoss> {
    if !(cfg.temperature > 0.0) {
        return Err(Error::invalid("temperature", "must be positive"));
    }
    let dims = bank.dims();
    if let Some(e) = batch.iter().find(|e| e.z.len() != dims) {
        return Err(Error::Shape(format!("embedding of length {} vs prototypes of {dims}", e.z.len())));
    }
    let fg: Vec<usize> = (0..batch.len()).filter(|&i| !batch[i].classes.is_empty()).collect();
    let mut d_z = vec![vec![0.0; dims]; batch.len()];
    if fg.is_empty() {
        return Ok(ContrastiveLoss { value: 0.0, d_z, empty: true });
    }
    let inv_tau = 1.0 / cfg.temperature;
    let mut value = 0.0;
    for c in 0..bank.classes() {
        if !bank.initialized[c] {
            continue;
        }
        let members: Vec<usize> = fg.iter().copied().filter(|&i| batch[i].classes.contains(&c)).collect();
        if members.is_empty() {
            continue;
        }
        let q = &bank.prototypes[c];
        let logits: Vec<f64> = fg
            .iter()
            .map(|&i| batch[i].z.iter().zip(q).map(|(a, b)| a * b).sum::<f64>() * inv_tau)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let lse = max + sum_exp.ln();
        let weight = 1.0 / members.len() as f64;
        for (pos, &i) in fg.iter().enumerate() {
            if batch[i].classes.contains(&c) {
                value += weight * (lse - logits[pos]);
            }
            // d/dz_i of (lse - mean over members of logit)
            let soft = (logits[pos] - max).exp() / sum_exp;
            let member = if batch[i].classes.contains(&c) { weight } else { 0.0 };
            let coef = (soft - member) * inv_tau;
            for (g, qv) in d_z[i].iter_mut().zip(q) {
                *g += coef * qv;
            }
        }
    }
    Ok(ContrastiveLoss { value, d_z, empty: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(c: &[usize]) -> BTreeSet<usize> {
        c.iter().copied().collect()
    }

    fn entry(z: &[f64], c: &[usize]) -> LabeledEmbedding {
        LabeledEmbedding { z: z.to_vec(), classes: set(c) }
    }

    fn bank(protos: Vec<Vec<f64>>) -> PrototypeBank {
        let n = protos.len();
        PrototypeBank { prototypes: protos, momentum: 0.001, initialized: vec![true; n] }
    }

    #[test]
    fn initialization() {
        let mut b = PrototypeBank::new(3, 2, 0.001).unwrap();
        let (s0, s01) = (set(&[0]), set(&[0, 1]));
        let (u, v) = ([1.0, 2.0], [3.0, -2.0]);
        b.initialize([(&s0, &u[..]), (&s01, &v[..])]);
        assert_eq!(b.prototypes[0], vec![2.0, 0.0]);
        assert_eq!(b.prototypes[1], vec![3.0, -2.0]);
        assert_eq!(b.initialized, vec![true, true, false]);
        let mut one = PrototypeBank::new(1, 2, 0.5).unwrap();
        one.initialize([(&s0, &u[..])]);
        assert_eq!(one.prototypes[0], u.to_vec());
        assert!(PrototypeBank::new(1, 2, 0.0).is_err());
    }

    #[test]
    fn ema_update() {
        let s0 = set(&[0]);
        let mut b = PrototypeBank { prototypes: vec![vec![0.0], vec![5.0]], momentum: 0.001, initialized: vec![true, true] };
        b.update([(&s0, &[1.0][..])]);
        assert!((b.prototypes[0][0] - 0.001).abs() < 1e-15);
        assert_eq!(b.prototypes[1][0], 5.0);
        b.momentum = 1.0;
        b.update([(&s0, &[4.0][..]), (&s0, &[2.0][..])]);
        assert_eq!(b.prototypes[0][0], 3.0);
    }

    #[test]
    fn hand_values() {
        let cfg = ContrastiveConfig { temperature: 0.1, weight: 1.0 };
        let b = bank(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let single = contrastive_loss(&[entry(&[0.3, 0.4], &[0])], &b, &cfg).unwrap();
        assert!(single.value.abs() < 1e-12);
        // q0·z0 = q0·z1 = 0.5
        let two = contrastive_loss(&[entry(&[0.5, 0.0], &[0]), entry(&[0.5, 7.0], &[1])], &bank(vec![vec![1.0, 0.0]]), &cfg).unwrap();
        assert!((two.value - 2f64.ln()).abs() < 1e-12);
        let none = contrastive_loss(&[entry(&[0.5, 0.0], &[])], &b, &cfg).unwrap();
        assert!(none.empty && none.value == 0.0);
    }

    #[test]
    fn uniform_limit() {
        let b = bank(vec![vec![1.0, -2.0], vec![0.5, 3.0], vec![2.0, 2.0]]);
        let batch = [entry(&[0.3, 0.4], &[0]), entry(&[-1.0, 2.0], &[1]), entry(&[2.0, 0.1], &[0, 1]), entry(&[9.0, 9.0], &[])];
        let cfg = ContrastiveConfig { temperature: 1e9, weight: 1.0 };
        let l = contrastive_loss(&batch, &b, &cfg).unwrap();
        // two classes present, three foreground entries
        assert!((l.value - 2.0 * 3f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn uninitialized_classes_are_skipped() {
        let mut b = bank(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        b.initialized[1] = false;
        let batch = [entry(&[1.0, 0.0], &[1]), entry(&[0.0, 1.0], &[1])];
        let l = contrastive_loss(&batch, &b, &ContrastiveConfig { temperature: 0.5, weight: 1.0 }).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.d_z.iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let b = bank(vec![vec![0.7, -0.2, 0.4], vec![-0.3, 0.9, 0.1]]);
        let cfg = ContrastiveConfig { temperature: 0.3, weight: 1.0 };
        let batch = vec![
            entry(&[0.3, 0.4, -0.1], &[0]),
            entry(&[-1.0, 0.2, 0.5], &[1]),
            entry(&[0.6, 0.1, 0.9], &[0, 1]),
            entry(&[0.2, -0.7, 0.3], &[]),
            entry(&[0.1, 0.1, 0.1], &[0]),
        ];
        let base = contrastive_loss(&batch, &b, &cfg).unwrap();
        let h = 1e-6;
        for i in 0..batch.len() {
            for d in 0..3 {
                let mut p = batch.clone();
                p[i].z[d] += h;
                let mut m = batch.clone();
                m[i].z[d] -= h;
                let num = (contrastive_loss(&p, &b, &cfg).unwrap().value - contrastive_loss(&m, &b, &cfg).unwrap().value) / (2.0 * h);
                assert!((num - base.d_z[i][d]).abs() < 1e-6 * num.abs().max(1.0), "z[{i}][{d}]");
            }
        }
        assert!(base.d_z[3].iter().all(|&g| g == 0.0));
    }
}
