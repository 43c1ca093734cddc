//! Mini-batch training of the scoring model.
//!
//! Each iteration draws a batch of videos, resamples them to the training
//! length, and minimises
//! `mean_v (L_pt + λ_vid · L_vid) + λ_pascl · L_pascl` with one Adam step.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::corpus::{
    load_features, sample_to_train_length, DatasetManifest, FeatureSequence, PointLabelSet, SamplingMode,
    SnippetLabels,
};
use crate::losses::{
    contrastive_loss, point_loss, video_label, video_loss, ContrastiveConfig, LabeledEmbedding, LossReport,
    PrototypeBank, VideoLossConfig,
};
use crate::model::{backward_into, forward, Mode, ModelParams, ScoringOutputs, Upstream};
use crate::optim::AdamState;
use crate::pseudo::generate_pseudo_labels;
use crate::{Error, Result};

/// A training video with its point labels on snippet indices.
#[derive(Debug, Clone)]
pub struct TrainingVideo {
    pub features: FeatureSequence,
    pub labels: SnippetLabels,
}

/// Loads the features of every manifest video and pairs them with labels.
/// Every video needs a label set, possibly with background labels only.
pub fn prepare_videos(manifest: &DatasetManifest, label_sets: &[PointLabelSet]) -> Result<Vec<TrainingVideo>> {
    let by_id: HashMap<&str, &PointLabelSet> = label_sets.iter().map(|s| (s.video_id.as_str(), s)).collect();
    for set in label_sets {
        if manifest.video(&set.video_id).is_none() {
            return Err(Error::invalid("labels", format!("video {:?} is not in the manifest", set.video_id)));
        }
    }
    let classes = manifest.num_classes();
    manifest
        .videos
        .iter()
        .map(|record| {
            let set = by_id
                .get(record.id.as_str())
                .ok_or_else(|| Error::invalid("labels", format!("no label set for video {:?}", record.id)))?;
            set.validate(record.duration, classes)?;
            let mut features = load_features(manifest.feature_file(record))?
                .with_timing(record.snippet_len, record.frame_rate);
            features.video_id = record.id.clone();
            let labels = SnippetLabels::from_points(set, &features);
            Ok(TrainingVideo { features, labels })
        })
        .collect()
}

/// Weights and settings of the batch objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub lambda_vid: f64,
    pub lambda_pascl: f64,
    pub video: VideoLossConfig,
    pub temperature: f64,
}

impl From<&TrainConfig> for ObjectiveConfig {
    fn from(cfg: &TrainConfig) -> Self {
        Self {
            lambda_vid: cfg.lambda_vid,
            lambda_pascl: cfg.lambda_pascl,
            video: cfg.video_loss_config(),
            temperature: cfg.temperature,
        }
    }
}

/// One video of a batch, ready for the forward pass.
#[derive(Debug, Clone)]
pub struct BatchItem {
    /// `length × D`, row-major.
    pub x: Vec<f64>,
    pub length: usize,
    /// Labels for the point and contrastive losses.
    pub labels: SnippetLabels,
    /// Multi-hot video label.
    pub video_label: Vec<f64>,
    pub mode: Mode,
}

#[derive(Debug, Clone)]
pub struct BatchObjective {
    pub report: LossReport,
    pub grads: ModelParams,
    pub outputs: Vec<ScoringOutputs>,
    /// Foreground embeddings of the batch, for the prototype update.
    pub embeddings: Vec<LabeledEmbedding>,
}

/// Value and parameter gradient of the batch objective. Prototypes are
/// constants here.
pub fn batch_objective(
    params: &ModelParams,
    items: &[BatchItem],
    bank: &PrototypeBank,
    cfg: &ObjectiveConfig,
) -> Result<BatchObjective> {
    if items.is_empty() {
        return Err(Error::Empty("batch".into()));
    }
    let n = items.len() as f64;
    let mut outputs = Vec::with_capacity(items.len());
    let mut upstreams = Vec::with_capacity(items.len());
    let mut sums = [0.0; 4];
    let mut embeddings = Vec::new();
    let mut owners = Vec::new();
    for (v, item) in items.iter().enumerate() {
        let out = forward(&item.x, item.length, params, item.mode)?;
        let pt = point_loss(&out, &item.labels)?;
        let vid = video_loss(&out.p, out.length, &item.video_label, &cfg.video)?;
        sums[0] += pt.fg;
        sums[1] += pt.bg;
        sums[2] += vid.pos;
        sums[3] += vid.neg;
        let mut up = Upstream::zeros(&out);
        for (g, d) in up.d_s.iter_mut().zip(&pt.d_s) {
            *g += d / n;
        }
        for (g, d) in up.d_a.iter_mut().zip(&pt.d_a) {
            *g += d / n;
        }
        up.add_dp(&vid.d_p, &out, cfg.lambda_vid / n);
        for (t, classes) in item.labels.foreground() {
            embeddings.push(LabeledEmbedding { z: out.embedding(t), classes: classes.clone() });
            owners.push((v, t));
        }
        outputs.push(out);
        upstreams.push(up);
    }

    let mut l_pascl = 0.0;
    if cfg.lambda_pascl > 0.0 {
        let ccfg = ContrastiveConfig { temperature: cfg.temperature, weight: cfg.lambda_pascl };
        let cl = contrastive_loss(&embeddings, bank, &ccfg)?;
        l_pascl = cl.value;
        for ((v, t), dz) in owners.iter().zip(&cl.d_z) {
            let len = outputs[*v].length;
            for (d, g) in dz.iter().enumerate() {
                upstreams[*v].d_z[d * len + t] += cfg.lambda_pascl * g;
            }
        }
    }

    let mut grads = params.zeros_like();
    for ((item, out), up) in items.iter().zip(&outputs).zip(&upstreams) {
        backward_into(&item.x, params, out, up, item.mode, &mut grads)?;
    }
    let report = LossReport::new(
        sums[0] / n,
        sums[1] / n,
        sums[2] / n,
        sums[3] / n,
        l_pascl,
        cfg.lambda_vid,
        cfg.lambda_pascl,
    );
    Ok(BatchObjective { report, grads, outputs, embeddings })
}

/// Prototypes from the foreground embeddings of the full-length videos.
pub fn init_prototypes(params: &ModelParams, videos: &[TrainingVideo], momentum: f64) -> Result<PrototypeBank> {
    let mut items = Vec::new();
    for v in videos {
        let out = forward(&v.features.to_f64(), v.features.length, params, Mode::Eval)?;
        for (t, classes) in v.labels.foreground() {
            items.push((classes.clone(), out.embedding(t)));
        }
    }
    let mut bank = PrototypeBank::new(params.classes, params.dims, momentum)?;
    bank.initialize(items.iter().map(|(c, z)| (c, z.as_slice())));
    Ok(bank)
}

/// State handed to the per-iteration observer.
pub struct Snapshot<'a> {
    /// Number of completed iterations.
    pub iteration: usize,
    pub params: &'a ModelParams,
    pub adam: &'a AdamState,
    pub prototypes: &'a PrototypeBank,
    pub report: &'a LossReport,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub history: Vec<LossReport>,
    pub params: ModelParams,
    pub adam: AdamState,
    pub prototypes: PrototypeBank,
    pub seed: u64,
    pub wall_clock: Duration,
}

pub const LOSS_CSV_HEADER: &str = "iteration,l_pt_fg,l_pt_bg,l_vid_pos,l_vid_neg,l_pascl,total";

impl TrainReport {
    pub fn loss_csv(&self) -> String {
        let mut s = String::from(LOSS_CSV_HEADER);
        s.push('\n');
        for (i, r) in self.history.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                i, r.l_pt_fg, r.l_pt_bg, r.l_vid_pos, r.l_vid_neg, r.l_pascl, r.total
            );
        }
        s
    }
}

pub fn train(videos: &[TrainingVideo], classes: usize, cfg: &TrainConfig) -> Result<TrainReport> {
    train_with(videos, classes, cfg, |_| Ok(()))
}

/// Runs the training loop, calling `observe` after every iteration.
/// Deterministic for a fixed `cfg.seed`.
pub fn train_with(
    videos: &[TrainingVideo],
    classes: usize,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&Snapshot) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let first = videos.first().ok_or_else(|| Error::Empty("training set".into()))?;
    let dims = first.features.dims;
    for v in videos {
        if v.features.dims != dims {
            return Err(Error::Shape(format!(
                "video {:?} has {} feature dims, expected {dims}",
                v.features.video_id, v.features.dims
            )));
        }
        v.labels.check_range(v.features.length)?;
        if let Some(c) = v.labels.max_class().filter(|&c| c >= classes) {
            return Err(Error::IndexOutOfRange { index: c, len: classes });
        }
    }

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(dims, classes, rng.random())?;
    let mut adam = AdamState::new(params.len(), cfg.learning_rate, cfg.weight_decay);
    let mut bank = init_prototypes(&params, videos, cfg.momentum)?;
    let objective = ObjectiveConfig::from(cfg);
    let pseudo = cfg.pseudo_config();
    let mut history = Vec::with_capacity(cfg.max_iterations);

    for iteration in 0..cfg.max_iterations {
        let picks: Vec<usize> = if videos.len() >= cfg.batch_size {
            sample(&mut rng, videos.len(), cfg.batch_size).into_vec()
        } else {
            (0..cfg.batch_size).map(|_| rng.random_range(0..videos.len())).collect()
        };
        let pseudo_active = pseudo.active_at(iteration, cfg.max_iterations);
        let mut items = Vec::with_capacity(picks.len());
        for &i in &picks {
            let v = &videos[i];
            let r = sample_to_train_length(
                &v.features,
                &v.labels,
                cfg.train_length,
                SamplingMode::Stochastic,
                rng.random(),
            )?;
            let x = r.features.to_f64();
            let y = video_label(r.labels.iter().map(|(_, c)| c), classes);
            let labels = if pseudo_active {
                let eval = forward(&x, r.features.length, &params, Mode::Eval)?;
                generate_pseudo_labels(&eval.p, classes, &eval.a, &r.labels, &pseudo)?.merged_labels(&r.labels)
            } else {
                r.labels
            };
            items.push(BatchItem {
                x,
                length: r.features.length,
                labels,
                video_label: y,
                mode: Mode::Train { dropout: cfg.dropout, seed: rng.random() },
            });
        }

        let obj = batch_objective(&params, &items, &bank, &objective)?;
        if !obj.report.is_finite() {
            return Err(Error::NonFiniteLoss { iteration });
        }
        bank.update(obj.embeddings.iter().map(|e| (&e.classes, e.z.as_slice())));
        adam.step_slice(&mut params.values, &obj.grads.values)?;
        log::debug!("iteration {iteration}: total {:.6}", obj.report.total);
        history.push(obj.report);
        observe(&Snapshot {
            iteration: iteration + 1,
            params: &params,
            adam: &adam,
            prototypes: &bank,
            report: &obj.report,
        })?;
    }

    Ok(TrainReport {
        history,
        params,
        adam,
        prototypes: bank,
        seed: cfg.seed,
        wall_clock: started.elapsed(),
    })
}
