//! Snippet scoring model: a kernel-3 temporal convolution with ReLU, then a
//! classification head and an actionness head on the two halves of the
//! embedded features.
//!
//! Layouts: input `x` is `T × D` row-major (snippet-major, like the feature
//! files); every output matrix is channel-major (`[channel * T + t]`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{sigmoid, Error, Result};

/// All trainable weights, stored in one flat vector.
///
/// Segments, in order: embedder weights `[out][in][tap]` (`3·D²`), embedder
/// biases (`D`), classification weights `[j][c]` (`D/2 · C`), classification
/// biases (`C`), actionness weights (`D/2`), actionness bias (`1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: usize,
    pub classes: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    embed_w: usize,
    embed_b: usize,
    cls_w: usize,
    cls_b: usize,
    act_w: usize,
    act_b: usize,
    total: usize,
}

impl Layout {
    fn new(d: usize, c: usize) -> Self {
        let embed_w = 0;
        let embed_b = embed_w + 3 * d * d;
        let cls_w = embed_b + d;
        let cls_b = cls_w + d / 2 * c;
        let act_w = cls_b + c;
        let act_b = act_w + d / 2;
        Self {
            embed_w,
            embed_b,
            cls_w,
            cls_b,
            act_w,
            act_b,
            total: act_b + 1,
        }
    }
}

impl ModelParams {
    pub fn zeros(dims: usize, classes: usize) -> Result<Self> {
        if dims < 2 || !dims.is_multiple_of(2) {
            return Err(Error::invalid("dims", format!("{dims} must be even and >= 2")));
        }
        if classes == 0 {
            return Err(Error::invalid("classes", "must be >= 1"));
        }
        Ok(Self {
            dims,
            classes,
            values: vec![0.0; Layout::new(dims, classes).total],
        })
    }

    /// Uniform `±sqrt(1 / fan_in)` weights, zero biases.
    pub fn init(dims: usize, classes: usize, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(dims, classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = dims / 2;
        let mut fill = |slice: &mut [f64], fan_in: usize| {
            let bound = (1.0 / fan_in as f64).sqrt();
            for w in slice {
                *w = rng.random_range(-bound..=bound);
            }
        };
        fill(p.embed_weight_mut(), 3 * dims);
        fill(p.cls_weight_mut(), half);
        fill(p.act_weight_mut(), half);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            dims: self.dims,
            classes: self.classes,
            values: vec![0.0; self.values.len()],
        }
    }

    fn layout(&self) -> Layout {
        Layout::new(self.dims, self.classes)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.layout().total {
            return Err(Error::Shape(format!(
                "{} parameters for D={}, C={}",
                self.values.len(),
                self.dims,
                self.classes
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    pub fn embed_weight(&self) -> &[f64] {
        let l = self.layout();
        &self.values[l.embed_w..l.embed_b]
    }
    pub fn embed_bias(&self) -> &[f64] {
        let l = self.layout();
        &self.values[l.embed_b..l.cls_w]
    }
    pub fn cls_weight(&self) -> &[f64] {
        let l = self.layout();
        &self.values[l.cls_w..l.cls_b]
    }
    pub fn cls_bias(&self) -> &[f64] {
        let l = self.layout();
        &self.values[l.cls_b..l.act_w]
    }
    pub fn act_weight(&self) -> &[f64] {
        let l = self.layout();
        &self.values[l.act_w..l.act_b]
    }
    pub fn act_bias(&self) -> f64 {
        self.values[self.layout().act_b]
    }

    pub fn embed_weight_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.values[l.embed_w..l.embed_b]
    }
    pub fn cls_weight_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.values[l.cls_w..l.cls_b]
    }
    pub fn act_weight_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.values[l.act_w..l.act_b]
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Evaluation or training (inverted dropout on the head inputs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Eval,
    Train { dropout: f64, seed: u64 },
}

/// Per-snippet outputs for one video.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringOutputs {
    pub dims: usize,
    pub classes: usize,
    pub length: usize,
    /// Embedded features, `D × T`.
    pub z: Vec<f64>,
    /// Class activation sequence, `C × T`.
    pub s: Vec<f64>,
    /// Actionness, `T`.
    pub a: Vec<f64>,
    /// Fused scores `a[t] * s[c][t]`, `C × T`.
    pub p: Vec<f64>,
}

impl ScoringOutputs {
    pub fn p_row(&self, c: usize) -> &[f64] {
        &self.p[c * self.length..(c + 1) * self.length]
    }

    pub fn s_row(&self, c: usize) -> &[f64] {
        &self.s[c * self.length..(c + 1) * self.length]
    }

    /// Embedding of snippet `t` (column of `z`).
    pub fn embedding(&self, t: usize) -> Vec<f64> {
        (0..self.dims).map(|d| self.z[d * self.length + t]).collect()
    }
}

/// Inverted-dropout keep scales for the `D × T` head inputs.
fn dropout_mask(mode: Mode, dims: usize, length: usize) -> Result<Option<Vec<f64>>> {
    match mode {
        Mode::Eval => Ok(None),
        Mode::Train { dropout, seed } => {
            if !(0.0..1.0).contains(&dropout) {
                return Err(Error::invalid("dropout", format!("{dropout} not in [0, 1)")));
            }
            if dropout == 0.0 {
                return Ok(None);
            }
            let keep = 1.0 / (1.0 - dropout);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(Some(
                (0..dims * length)
                    .map(|_| if rng.random::<f64>() < dropout { 0.0 } else { keep })
                    .collect(),
            ))
        }
    }
}

fn check_input(x: &[f64], length: usize, params: &ModelParams) -> Result<()> {
    if length == 0 {
        return Err(Error::Shape("empty sequence".into()));
    }
    if x.len() != length * params.dims {
        return Err(Error::Shape(format!(
            "input has {} values, expected {} x {}",
            x.len(),
            length,
            params.dims
        )));
    }
    Ok(())
}

/// Runs the model on `x` (`length × D`, row-major).
pub fn forward(x: &[f64], length: usize, params: &ModelParams, mode: Mode) -> Result<ScoringOutputs> {
    check_input(x, length, params)?;
    let (d, c, t_len) = (params.dims, params.classes, length);
    let half = d / 2;
    let ew = params.embed_weight();
    let eb = params.embed_bias();

    let mut z = vec![0.0; d * t_len];
    for o in 0..d {
        for t in 0..t_len {
            let mut acc = eb[o];
            for tap in 0..3 {
                let src = t + tap;
                if src == 0 || src > t_len {
                    continue; // zero padding
                }
                let row = &x[(src - 1) * d..src * d];
                let w = &ew[o * d * 3..(o + 1) * d * 3];
                for i in 0..d {
                    acc += w[i * 3 + tap] * row[i];
                }
            }
            z[o * t_len + t] = acc.max(0.0);
        }
    }

    let mask = dropout_mask(mode, d, t_len)?;
    let head_in = |j: usize, t: usize| -> f64 {
        let v = z[j * t_len + t];
        match &mask {
            Some(m) => v * m[j * t_len + t],
            None => v,
        }
    };

    let cw = params.cls_weight();
    let cb = params.cls_bias();
    let aw = params.act_weight();
    let ab = params.act_bias();
    let mut s = vec![0.0; c * t_len];
    let mut a = vec![0.0; t_len];
    for t in 0..t_len {
        for k in 0..c {
            let mut acc = cb[k];
            for j in 0..half {
                acc += cw[j * c + k] * head_in(j, t);
            }
            s[k * t_len + t] = sigmoid(acc);
        }
        let mut acc = ab;
        for j in 0..half {
            acc += aw[j] * head_in(half + j, t);
        }
        a[t] = sigmoid(acc);
    }
    let p = (0..c * t_len).map(|i| a[i % t_len] * s[i]).collect();
    Ok(ScoringOutputs {
        dims: d,
        classes: c,
        length: t_len,
        z,
        s,
        a,
        p,
    })
}

/// Gradients flowing back into the model from the losses.
#[derive(Debug, Clone, PartialEq)]
pub struct Upstream {
    /// `C × T`
    pub d_s: Vec<f64>,
    /// `T`
    pub d_a: Vec<f64>,
    /// `D × T`, w.r.t. the (pre-dropout) embedded features.
    pub d_z: Vec<f64>,
}

impl Upstream {
    pub fn zeros(out: &ScoringOutputs) -> Self {
        Self {
            d_s: vec![0.0; out.s.len()],
            d_a: vec![0.0; out.a.len()],
            d_z: vec![0.0; out.z.len()],
        }
    }

    /// Adds `scale * dL/dP`, pushed through `P = A ⊙ S`.
    pub fn add_dp(&mut self, d_p: &[f64], out: &ScoringOutputs, scale: f64) {
        let t_len = out.length;
        for (i, &g) in d_p.iter().enumerate() {
            let t = i % t_len;
            self.d_s[i] += scale * g * out.a[t];
            self.d_a[t] += scale * g * out.s[i];
        }
    }

    pub fn add_scaled(&mut self, other: &Upstream, scale: f64) {
        for (a, b) in self.d_s.iter_mut().zip(&other.d_s) {
            *a += scale * b;
        }
        for (a, b) in self.d_a.iter_mut().zip(&other.d_a) {
            *a += scale * b;
        }
        for (a, b) in self.d_z.iter_mut().zip(&other.d_z) {
            *a += scale * b;
        }
    }
}

/// Accumulates parameter gradients into `grads`. `mode` must match the
/// forward pass so the dropout mask replays.
pub fn backward_into(
    x: &[f64],
    params: &ModelParams,
    out: &ScoringOutputs,
    upstream: &Upstream,
    mode: Mode,
    grads: &mut ModelParams,
) -> Result<()> {
    let t_len = out.length;
    check_input(x, t_len, params)?;
    let (d, c) = (params.dims, params.classes);
    if upstream.d_s.len() != c * t_len || upstream.d_a.len() != t_len || upstream.d_z.len() != d * t_len {
        return Err(Error::Shape("upstream gradients do not match outputs".into()));
    }
    if grads.values.len() != params.values.len() {
        return Err(Error::Shape("gradient buffer does not match parameters".into()));
    }
    let half = d / 2;
    let mask = dropout_mask(mode, d, t_len)?;
    let keep = |i: usize| mask.as_ref().map_or(1.0, |m| m[i]);

    let g_cls: Vec<f64> = (0..c * t_len)
        .map(|i| upstream.d_s[i] * out.s[i] * (1.0 - out.s[i]))
        .collect();
    let g_act: Vec<f64> = (0..t_len)
        .map(|t| upstream.d_a[t] * out.a[t] * (1.0 - out.a[t]))
        .collect();

    let l = params.layout();
    let cw = params.cls_weight();
    let aw = params.act_weight();
    let g = &mut grads.values;

    let mut d_z = upstream.d_z.clone();
    for t in 0..t_len {
        for k in 0..c {
            let gk = g_cls[k * t_len + t];
            g[l.cls_b + k] += gk;
            for j in 0..half {
                let idx = j * t_len + t;
                g[l.cls_w + j * c + k] += gk * out.z[idx] * keep(idx);
                d_z[idx] += cw[j * c + k] * gk * keep(idx);
            }
        }
        let ga = g_act[t];
        g[l.act_b] += ga;
        for j in 0..half {
            let idx = (half + j) * t_len + t;
            g[l.act_w + j] += ga * out.z[idx] * keep(idx);
            d_z[idx] += aw[j] * ga * keep(idx);
        }
    }

    // ReLU, then the convolution.
    for o in 0..d {
        for t in 0..t_len {
            let idx = o * t_len + t;
            if out.z[idx] <= 0.0 {
                continue;
            }
            let gp = d_z[idx];
            if gp == 0.0 {
                continue;
            }
            g[l.embed_b + o] += gp;
            for tap in 0..3 {
                let src = t + tap;
                if src == 0 || src > t_len {
                    continue;
                }
                let row = &x[(src - 1) * d..src * d];
                let base = l.embed_w + o * d * 3;
                for i in 0..d {
                    g[base + i * 3 + tap] += gp * row[i];
                }
            }
        }
    }
    Ok(())
}

pub fn backward(
    x: &[f64],
    params: &ModelParams,
    out: &ScoringOutputs,
    upstream: &Upstream,
    mode: Mode,
) -> Result<ModelParams> {
    let mut grads = params.zeros_like();
    backward_into(x, params, out, upstream, mode, &mut grads)?;
    Ok(grads)
}
