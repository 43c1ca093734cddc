use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use aapl_core::corpus::{load_features, load_manifest, write_label_set, DatasetManifest, PointLabel, PointLabelSet};
use aapl_core::sampler::{SamplingMethod, SamplingPlan};
use serde::{Deserialize, Serialize};

use crate::allocation::{allocate, Allocation};
use crate::{AnnotationError, Result};

/// Request body for creating a project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateProject {
    #[serde(default)]
    pub id: Option<String>,
    /// Manifest path as seen by the server.
    pub manifest: PathBuf,
    pub sampling: SamplingMethod,
    pub workers: Vec<String>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<String>,
    /// Allocation seed; the store's default applies when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_schemes() -> Vec<String> {
    vec!["aapl".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub id: String,
    pub manifest: PathBuf,
    pub class_names: Vec<String>,
    /// Video durations in seconds.
    pub durations: BTreeMap<String, f64>,
    pub plans: BTreeMap<String, SamplingPlan>,
    pub workers: Vec<String>,
    pub schemes: Vec<String>,
    pub allocation: Vec<Allocation>,
    pub seed: u64,
}

/// One allocated video as a worker sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub video_id: String,
    pub scheme: String,
    pub duration: f64,
    pub timestamps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub worker: String,
    pub video_id: String,
    /// Seconds; must be a frame of the video's plan.
    pub t: f64,
    /// Empty for background.
    #[serde(default)]
    pub classes: BTreeSet<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submitted_at: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimerKind {
    Start,
    Stop,
    SelfCheckStart,
    SelfCheckStop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimerEvent {
    pub worker: String,
    pub video_id: String,
    pub kind: TimerKind,
    /// Wall-clock seconds.
    pub at: f64,
}

impl Project {
    /// Loads the manifest and builds a plan per video. Clustering plans read
    /// the feature files.
    pub fn create(id: String, req: &CreateProject) -> Result<Self> {
        let needs_features = matches!(req.sampling, SamplingMethod::Clustering { .. });
        let manifest = load_manifest(&req.manifest, needs_features)?;
        Self::from_manifest(id, &manifest, req)
    }

    pub fn from_manifest(id: String, manifest: &DatasetManifest, req: &CreateProject) -> Result<Self> {
        if req.workers.is_empty() || req.schemes.is_empty() {
            return Err(AnnotationError::Invalid("need at least one worker and one scheme".into()));
        }
        for (what, list) in [("worker", &req.workers), ("scheme", &req.schemes)] {
            let unique: BTreeSet<&String> = list.iter().collect();
            if unique.len() != list.len() {
                return Err(AnnotationError::Invalid(format!("duplicate {what} names")));
            }
        }
        let mut plans = BTreeMap::new();
        let mut durations = BTreeMap::new();
        for v in &manifest.videos {
            let features = match req.sampling {
                SamplingMethod::Clustering { .. } => Some(
                    load_features(manifest.feature_file(v))?.with_timing(v.snippet_len, v.frame_rate),
                ),
                _ => None,
            };
            plans.insert(v.id.clone(), SamplingPlan::build(&v.id, v.duration, features.as_ref(), req.sampling)?);
            durations.insert(v.id.clone(), v.duration);
        }
        let ids: Vec<String> = manifest.videos.iter().map(|v| v.id.clone()).collect();
        let seed = req.seed.unwrap_or(0);
        let allocation = allocate(&ids, &req.workers, &req.schemes, seed)?;
        Ok(Self {
            id,
            manifest: req.manifest.clone(),
            class_names: manifest.class_names.clone(),
            durations,
            plans,
            workers: req.workers.clone(),
            schemes: req.schemes.clone(),
            allocation,
            seed,
        })
    }

    pub fn allocation_for(&self, video_id: &str) -> Option<&Allocation> {
        self.allocation.iter().find(|a| a.video_id == video_id)
    }

    pub fn tasks(&self, worker: &str) -> Result<Vec<Task>> {
        if !self.workers.iter().any(|w| w == worker) {
            return Err(AnnotationError::NotFound(format!("worker {worker:?}")));
        }
        Ok(self
            .allocation
            .iter()
            .filter(|a| a.worker == worker)
            .map(|a| Task {
                video_id: a.video_id.clone(),
                scheme: a.scheme.clone(),
                duration: self.durations[&a.video_id],
                timestamps: self.plans[&a.video_id].timestamps.clone(),
            })
            .collect())
    }

    fn check_worker(&self, worker: &str, video_id: &str) -> Result<()> {
        let alloc = self
            .allocation_for(video_id)
            .ok_or_else(|| AnnotationError::NotFound(format!("video {video_id:?} in project {:?}", self.id)))?;
        if alloc.worker != worker {
            return Err(AnnotationError::Forbidden(format!(
                "video {video_id:?} is allocated to {:?}, not {worker:?}",
                alloc.worker
            )));
        }
        Ok(())
    }

    /// Index of the submitted frame within the plan.
    pub fn frame_index(&self, s: &LabelSubmission) -> Result<usize> {
        self.check_worker(&s.worker, &s.video_id)?;
        let plan = &self.plans[&s.video_id];
        let index = plan
            .timestamps
            .iter()
            .position(|&t| (t - s.t).abs() <= 1e-6)
            .ok_or_else(|| AnnotationError::Invalid(format!("frame t={} is not in the plan of {:?}", s.t, s.video_id)))?;
        if let Some(&c) = s.classes.iter().find(|&&c| c >= self.class_names.len()) {
            return Err(AnnotationError::Invalid(format!(
                "class {c} out of range for {} classes",
                self.class_names.len()
            )));
        }
        Ok(index)
    }

    /// Checks `event` against the worker allocation and the events so far.
    pub fn check_timer(&self, history: &[TimerEvent], event: &TimerEvent) -> Result<()> {
        self.check_worker(&event.worker, &event.video_id)?;
        if !event.at.is_finite() {
            return Err(AnnotationError::Invalid("timer timestamp must be finite".into()));
        }
        let mut open = None;
        for e in history.iter().filter(|e| e.worker == event.worker && e.video_id == event.video_id) {
            open = step(open, e)?;
        }
        step(open, event).map(|_| ())
    }
}

/// Advances the per-(worker, video) session state.
fn step(open: Option<(TimerKind, f64)>, e: &TimerEvent) -> Result<Option<(TimerKind, f64)>> {
    use TimerKind::*;
    match (open, e.kind) {
        (None, Start | SelfCheckStart) => Ok(Some((e.kind, e.at))),
        (Some((Start, t0)), Stop) | (Some((SelfCheckStart, t0)), SelfCheckStop) => {
            if e.at > t0 {
                Ok(None)
            } else {
                Err(AnnotationError::Conflict(format!("stop at {} is not after start at {t0}", e.at)))
            }
        }
        (Some((k, _)), _) => Err(AnnotationError::Conflict(format!("{:?} while a {k:?} session is open", e.kind))),
        (None, _) => Err(AnnotationError::Conflict(format!("{:?} without a matching start", e.kind))),
    }
}

/// One label file per video, in video order. Unlabeled frames are omitted.
pub fn export_labels(project: &Project, labels: &BTreeMap<(String, usize), LabelSubmission>) -> Vec<PointLabelSet> {
    project
        .plans
        .iter()
        .map(|(video_id, plan)| {
            let points = labels
                .range((video_id.clone(), 0)..=(video_id.clone(), usize::MAX))
                .map(|((_, i), s)| PointLabel::new(plan.timestamps[*i], s.classes.iter().copied()))
                .collect();
            PointLabelSet::new(video_id.clone(), points)
        })
        .collect()
}

/// Writes `<video_id>.json` files into `dir`.
pub fn write_export(dir: impl AsRef<Path>, sets: &[PointLabelSet]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| AnnotationError::Storage(format!("{}: {e}", dir.display())))?;
    sets.iter()
        .map(|s| {
            let path = dir.join(format!("{}.json", s.video_id));
            write_label_set(&path, s)?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTime {
    pub video_id: String,
    pub worker: String,
    pub annotation_seconds: f64,
    pub self_check_seconds: f64,
    pub video_minutes: f64,
    /// Annotation minutes per video minute.
    pub relative_time: f64,
    pub relative_time_with_self_check: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSummary {
    pub videos: Vec<VideoTime>,
    pub relative_time: f64,
    pub relative_time_with_self_check: f64,
}

/// Sums closed sessions per (video, worker). Open sessions are not counted.
pub fn summarize_time(project: &Project, events: &[TimerEvent]) -> Result<TimeSummary> {
    let mut open: HashMap<(&str, &str), Option<(TimerKind, f64)>> = HashMap::new();
    let mut totals: BTreeMap<(String, String), (f64, f64)> = BTreeMap::new();
    for e in events {
        let state = open.entry((e.video_id.as_str(), e.worker.as_str())).or_default();
        let before = *state;
        *state = step(before, e)?;
        if let (Some((kind, t0)), None) = (before, *state) {
            let entry = totals.entry((e.video_id.clone(), e.worker.clone())).or_default();
            match kind {
                TimerKind::Start => entry.0 += e.at - t0,
                _ => entry.1 += e.at - t0,
            }
        }
    }
    let mut videos = Vec::with_capacity(totals.len());
    let (mut ann, mut check, mut minutes) = (0.0, 0.0, 0.0);
    for ((video_id, worker), (a, c)) in totals {
        let duration = *project
            .durations
            .get(&video_id)
            .ok_or_else(|| AnnotationError::NotFound(format!("video {video_id:?}")))?;
        let video_minutes = duration / 60.0;
        ann += a;
        check += c;
        minutes += video_minutes;
        videos.push(VideoTime {
            video_id,
            worker,
            annotation_seconds: a,
            self_check_seconds: c,
            video_minutes,
            relative_time: a / 60.0 / video_minutes,
            relative_time_with_self_check: (a + c) / 60.0 / video_minutes,
        });
    }
    let ratio = |secs: f64| if minutes > 0.0 { secs / 60.0 / minutes } else { 0.0 };
    Ok(TimeSummary { videos, relative_time: ratio(ann), relative_time_with_self_check: ratio(ann + check) })
}
