use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use aapl_annotation::{http, Store};
use aapl_core::checkpoint::{Checkpoint, CHECKPOINT_VERSION};
use aapl_core::config::TrainConfig;
use aapl_core::corpus::{load_features, load_label_sets, load_manifest, write_label_set, DatasetManifest, Split};
use aapl_core::cost::{estimate, tradeoff_curve, Dataset, Scheme, Variant};
use aapl_core::detector::{detect, predictions_to_json, write_predictions, DetectorConfig};
use aapl_core::evaluator::{evaluate, thresholds_for};
use aapl_core::model::{forward, Mode};
use aapl_core::sampler::{annotate_oracle, SamplingMethod, SamplingPlan, DEFAULT_PCA_DIMS};
use aapl_core::synth::{generate, LabelSampling, SynthConfig};
use aapl_core::trainer::{prepare_videos, train_with};
use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::*;

/// What a successful command produced. Data meant for piping goes to
/// stdout; artifact paths and the summary line go to stderr.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: Option<String>,
    pub artifacts: Vec<PathBuf>,
    pub summary: String,
}

impl Outcome {
    /// A closed stdout (e.g. piped into `head`) is not an error; other
    /// write failures are.
    pub fn report(&self) -> std::io::Result<()> {
        if let Some(s) = &self.stdout {
            let mut out = std::io::stdout().lock();
            let written = out.write_all(s.as_bytes()).and_then(|()| {
                if s.ends_with('\n') { Ok(()) } else { out.write_all(b"\n") }
            });
            match written.and_then(|()| out.flush()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
                other => other?,
            }
        }
        for p in &self.artifacts {
            eprintln!("wrote {}", p.display());
        }
        eprintln!("{}", self.summary);
        Ok(())
    }
}

pub fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Sample(a) => sample(a),
        Command::AnnotateOracle(a) => annotate(a),
        Command::Serve(a) => serve(a),
        Command::Train(a) => train(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Cost(a) => cost(a),
        Command::Synth(a) => synth(a),
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Reads a settings struct from `--config`, or its default.
fn settings<T: DeserializeOwned + Default>(config: Option<&Path>) -> Result<T> {
    match config {
        Some(p) => serde_json::from_value(read_json(p)?).with_context(|| format!("settings in {}", p.display())),
        None => Ok(T::default()),
    }
}

/// Overrides the fields of `base` named in the `--config` object.
fn overlay<T: Serialize + DeserializeOwned>(base: T, config: Option<&Path>) -> Result<T> {
    let Some(path) = config else { return Ok(base) };
    let serde_json::Value::Object(patch) = read_json(path)? else {
        bail!("{}: expected a JSON object", path.display());
    };
    let mut value = serde_json::to_value(base)?;
    let fields = value.as_object_mut().expect("settings serialize as objects");
    fields.extend(patch);
    serde_json::from_value(value).with_context(|| format!("settings in {}", path.display()))
}

fn manifest(path: &Path, features_dir: Option<&PathBuf>) -> Result<DatasetManifest> {
    let mut m = load_manifest(path, false)?;
    if let Some(dir) = features_dir {
        m.base_dir = Some(dir.clone());
    }
    Ok(m)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplingSettings {
    method: Option<Method>,
    interval: Option<f64>,
    pca_dims: Option<usize>,
    seed: Option<u64>,
}

fn sampling_method(args: &SamplingArgs, common: &Common) -> Result<SamplingMethod> {
    let cfg: SamplingSettings = settings(common.config.as_deref())?;
    let interval = args
        .interval
        .or(cfg.interval)
        .ok_or_else(|| anyhow!("missing --interval (or \"interval\" in --config)"))?;
    let seed = common.seed.or(cfg.seed).unwrap_or(0);
    Ok(match args.method.or(cfg.method).unwrap_or(Method::Regular) {
        Method::Regular => SamplingMethod::Regular { interval },
        Method::Random => SamplingMethod::Random { interval, seed },
        Method::Clustering => SamplingMethod::Clustering {
            interval,
            pca_dims: args.pca_dims.or(cfg.pca_dims).unwrap_or(DEFAULT_PCA_DIMS),
            seed,
        },
    })
}

fn build_plans(m: &DatasetManifest, method: SamplingMethod) -> Result<Vec<SamplingPlan>> {
    m.videos
        .iter()
        .map(|v| {
            let features = match method {
                SamplingMethod::Clustering { .. } => {
                    Some(load_features(m.feature_file(v))?.with_timing(v.snippet_len, v.frame_rate))
                }
                _ => None,
            };
            Ok(SamplingPlan::build(&v.id, v.duration, features.as_ref(), method)?)
        })
        .collect()
}

fn sample(a: SampleArgs) -> Result<Outcome> {
    let method = sampling_method(&a.sampling, &a.common)?;
    let plans = match (&a.manifest, a.duration) {
        (Some(path), _) => build_plans(&manifest(path, a.features_dir.as_ref())?, method)?,
        (None, Some(duration)) => {
            if matches!(method, SamplingMethod::Clustering { .. }) {
                bail!("clustering needs features; pass --manifest");
            }
            vec![SamplingPlan::build("video", duration, None, method)?]
        }
        (None, None) => unreachable!("clap requires one of them"),
    };
    let frames: usize = plans.iter().map(|p| p.timestamps.len()).sum();
    let json = serde_json::to_string_pretty(&plans)?;
    let summary = format!("{frames} frames over {} videos", plans.len());
    Ok(match a.out {
        Some(out) => {
            write_text(&out, &json)?;
            Outcome { artifacts: vec![out], summary, ..Default::default() }
        }
        None => Outcome { stdout: Some(json), summary, ..Default::default() },
    })
}

fn annotate(a: OracleArgs) -> Result<Outcome> {
    let m = manifest(&a.manifest, a.features_dir.as_ref())?;
    let plans: Vec<SamplingPlan> = match &a.plans {
        Some(path) => serde_json::from_value(read_json(path)?).with_context(|| format!("plans in {}", path.display()))?,
        None => build_plans(&m, sampling_method(&a.sampling, &a.common)?)?,
    };
    let mut sets = Vec::with_capacity(plans.len());
    for plan in &plans {
        let record = m.video(&plan.video_id).ok_or_else(|| anyhow!("plan for unknown video {:?}", plan.video_id))?;
        let gt = record
            .ground_truth
            .as_ref()
            .ok_or_else(|| anyhow!("video {:?} has no ground truth to annotate from", record.id))?;
        sets.push(annotate_oracle(&record.id, &plan.timestamps, gt));
    }
    let labels: usize = sets.iter().map(|s| s.labels.len()).sum();
    let background: usize = sets.iter().flat_map(|s| &s.labels).filter(|l| l.is_background()).count();
    let summary = format!("{labels} labels ({background} background) over {} videos", sets.len());
    Ok(match a.out {
        Some(dir) => {
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let mut artifacts = Vec::with_capacity(sets.len());
            for s in &sets {
                let path = dir.join(format!("{}.json", s.video_id));
                write_label_set(&path, s)?;
                artifacts.push(path);
            }
            Outcome { artifacts, summary, ..Default::default() }
        }
        None => Outcome { stdout: Some(serde_json::to_string_pretty(&sets)?), summary, ..Default::default() },
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ServeSettings {
    addr: Option<String>,
    out: Option<PathBuf>,
    frames_dir: Option<PathBuf>,
    seed: Option<u64>,
}

fn serve(a: ServeArgs) -> Result<Outcome> {
    let cfg: ServeSettings = settings(a.common.config.as_deref())?;
    let addr = a.addr.or(cfg.addr).unwrap_or_else(|| "127.0.0.1:8080".into());
    let dir = a.out.or(cfg.out).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let log_path = dir.join("annotations.jsonl");
    let store = Store::open(&log_path)?.with_default_seed(a.common.seed.or(cfg.seed).unwrap_or(0));
    let app = http::router(Arc::new(store), a.frames_dir.or(cfg.frames_dir));
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        // Tests and scripts read the bound port from this line.
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).await.context("server stopped")
    })?;
    Ok(Outcome { artifacts: vec![log_path], summary: "server stopped".into(), ..Default::default() })
}

fn train(a: TrainArgs) -> Result<Outcome> {
    let m = manifest(&a.manifest, a.features_dir.as_ref())?;
    let mut cfg = overlay(TrainConfig::preset(&a.preset)?, a.common.config.as_deref())?;
    if let Some(seed) = a.common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.iterations {
        cfg.max_iterations = n;
    }
    cfg.validate()?;
    let sets = load_label_sets(&a.labels)?;
    let videos = prepare_videos(&m, &sets)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut artifacts = Vec::new();
    let config_path = a.out.join("config.json");
    write_text(&config_path, &cfg.to_json())?;
    artifacts.push(config_path);

    let ck_dir = a.out.join("checkpoints");
    if cfg.checkpoint_every > 0 {
        std::fs::create_dir_all(&ck_dir).with_context(|| format!("creating {}", ck_dir.display()))?;
    }
    let checkpoint = |iteration, params: &_, adam: &_, prototypes: &_| Checkpoint {
        version: CHECKPOINT_VERSION,
        iteration,
        class_names: m.class_names.clone(),
        params: Clone::clone(params),
        adam: Clone::clone(adam),
        prototypes: Clone::clone(prototypes),
        config: cfg.clone(),
    };
    let mut written = Vec::new();
    let report = train_with(&videos, m.num_classes(), &cfg, |snap| {
        if cfg.checkpoint_every > 0 && snap.iteration % cfg.checkpoint_every == 0 {
            let path = ck_dir.join(format!("iter_{:06}.json", snap.iteration));
            checkpoint(snap.iteration, snap.params, snap.adam, snap.prototypes).save(&path)?;
            log::info!("checkpoint {}", path.display());
            written.push(path);
        }
        Ok(())
    })?;
    artifacts.extend(written);

    let loss_path = a.out.join("loss.csv");
    write_text(&loss_path, &report.loss_csv())?;
    artifacts.push(loss_path);
    let model_path = a.out.join("model.json");
    checkpoint(cfg.max_iterations, &report.params, &report.adam, &report.prototypes).save(&model_path)?;
    artifacts.push(model_path);

    let last = report.history.last().map_or(f64::NAN, |r| r.total);
    let summary = format!(
        "trained {} iterations on {} videos in {:.1}s; final loss {last:.4}",
        cfg.max_iterations,
        videos.len(),
        report.wall_clock.as_secs_f64()
    );
    Ok(Outcome { artifacts, summary, ..Default::default() })
}

fn detect_cmd(a: DetectArgs) -> Result<Outcome> {
    if a.common.seed.is_some() {
        log::debug!("detect uses no randomness; --seed has no effect");
    }
    let m = manifest(&a.manifest, a.features_dir.as_ref())?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    if ck.class_names.len() != m.num_classes() {
        bail!("checkpoint has {} classes, manifest has {}", ck.class_names.len(), m.num_classes());
    }
    if ck.class_names != m.class_names {
        log::warn!("class names differ between checkpoint and manifest; matching by index");
    }
    let cfg = overlay(DetectorConfig::default(), a.common.config.as_deref())?;
    cfg.validate()?;
    let mut preds = Vec::new();
    for record in &m.videos {
        let seq = load_features(m.feature_file(record))?;
        let out = forward(&seq.to_f64(), seq.length, &ck.params, Mode::Eval)
            .with_context(|| format!("scoring {:?}", record.id))?;
        preds.extend(detect(&out, record, &cfg)?);
    }
    let summary = format!("{} instances over {} videos", preds.len(), m.videos.len());
    Ok(match a.out {
        Some(out) => {
            write_predictions(&out, &preds)?;
            Outcome { artifacts: vec![out], summary, ..Default::default() }
        }
        None => Outcome { stdout: Some(predictions_to_json(&preds)), summary, ..Default::default() },
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSettings {
    thresholds: Option<Vec<f64>>,
}

fn eval(a: EvalArgs) -> Result<Outcome> {
    let m = load_manifest(&a.manifest, false)?;
    let cfg: EvalSettings = settings(a.common.config.as_deref())?;
    let thresholds = match cfg.thresholds {
        Some(t) => t,
        None => thresholds_for(&a.preset)?,
    };
    let preds = aapl_core::detector::load_predictions(&a.predictions)?;
    let report = evaluate(&preds, &m, &thresholds)?;
    let summary = format!("Avg mAP {:.4} over {} thresholds", report.average_map, thresholds.len());
    let mut artifacts = Vec::new();
    if let Some(out) = a.out {
        write_text(&out, &report.to_json())?;
        artifacts.push(out);
    }
    Ok(Outcome { stdout: Some(report.to_table()), artifacts, summary })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostSettings {
    dataset: Option<String>,
    schemes: Option<Vec<String>>,
    variant: Option<String>,
    minutes: Option<f64>,
}

const DEFAULT_SCHEMES: [&str; 7] = ["full", "video", "point", "aapl-3s", "aapl-5s", "aapl-10s", "aapl-30s"];

fn cost(a: CostArgs) -> Result<Outcome> {
    let cfg: CostSettings = settings(a.common.config.as_deref())?;
    let dataset: Dataset = a.dataset.or(cfg.dataset).as_deref().unwrap_or("thumos").parse()?;
    let variant: Variant = a.variant.or(cfg.variant).as_deref().unwrap_or("raw").parse()?;
    let minutes = a.minutes.or(cfg.minutes).unwrap_or(60.0);
    let names = match (a.schemes.is_empty(), cfg.schemes) {
        (false, _) => a.schemes,
        (true, Some(s)) => s,
        (true, None) => DEFAULT_SCHEMES.iter().map(|s| s.to_string()).collect(),
    };
    let schemes = names.iter().map(|s| s.parse()).collect::<aapl_core::Result<Vec<Scheme>>>()?;

    let mut table = format!("{:<12} {:>10} {:>10}  source\n", "scheme", "relative", "minutes");
    for &scheme in &schemes {
        let e = estimate(dataset, scheme, variant, minutes)?;
        let source = match (serde_json::to_value(e.source)?, e.extrapolated) {
            (v, true) => format!("{} (extrapolated)", v.as_str().unwrap_or_default()),
            (v, false) => v.as_str().unwrap_or_default().to_string(),
        };
        let _ = writeln!(table, "{:<12} {:>10.4} {:>10.2}  {source}", scheme.to_string(), e.relative_time, e.minutes);
    }
    let mut artifacts = Vec::new();
    if let Some(out) = a.out {
        write_text(&out, &aapl_core::cost::tradeoff_csv(&tradeoff_curve(dataset, variant, &schemes)?))?;
        artifacts.push(out);
    }
    let summary = format!("{dataset} {} for {minutes} video minutes", variant_name(variant));
    Ok(Outcome { stdout: Some(table), artifacts, summary })
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Raw => "raw",
        Variant::WithSelfCheck => "with self-check",
    }
}

fn synth(a: SynthArgs) -> Result<Outcome> {
    let mut cfg = overlay(SynthConfig::default(), a.common.config.as_deref())?;
    if let Some(seed) = a.common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.videos {
        cfg.videos = n;
    }
    let split = match a.split {
        SplitArg::Train => Split::Training,
        SplitArg::Val => Split::Validation,
    };
    let sampling = match a.sampling {
        LabelSamplingArg::Regular => LabelSampling::Regular,
        LabelSamplingArg::Random => LabelSampling::Random,
    };
    let ds = generate(&cfg, a.means_seed.unwrap_or(cfg.seed), split, sampling)?;
    let path = ds.write(&a.out)?;
    let segments: usize = ds.manifest.videos.iter().filter_map(|v| v.ground_truth.as_ref()).map(Vec::len).sum();
    let summary = format!("{} videos, {segments} action segments", ds.manifest.videos.len());
    Ok(Outcome { artifacts: vec![path], summary, ..Default::default() })
}
