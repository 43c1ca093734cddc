//! Project state behind a single writer lock. Every mutation is appended to
//! a JSON-lines log and synced before it is applied, so acknowledged writes
//! survive a restart.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use aapl_core::corpus::PointLabelSet;
use aapl_core::sampler::SamplingPlan;
use serde::{Deserialize, Serialize};

use crate::project::{export_labels, summarize_time, CreateProject, LabelSubmission, Project, Task, TimeSummary, TimerEvent};
use crate::{AnnotationError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Record {
    Project { project: Project },
    Labels { project_id: String, labels: Vec<(usize, LabelSubmission)> },
    Timer { project_id: String, event: TimerEvent },
}

#[derive(Debug, Clone)]
struct ProjectState {
    project: Project,
    /// Latest submission per (video, plan frame).
    labels: BTreeMap<(String, usize), LabelSubmission>,
    timers: Vec<TimerEvent>,
}

#[derive(Default)]
struct Inner {
    projects: BTreeMap<String, ProjectState>,
    log: Option<File>,
}

pub struct Store {
    inner: Mutex<Inner>,
    path: Option<PathBuf>,
    default_seed: u64,
}

impl Inner {
    fn state(&self, id: &str) -> Result<&ProjectState> {
        self.projects.get(id).ok_or_else(|| AnnotationError::NotFound(format!("project {id:?}")))
    }

    fn append(&mut self, record: &Record) -> Result<()> {
        if let Some(file) = self.log.as_mut() {
            let mut line = serde_json::to_string(record).map_err(|e| AnnotationError::Storage(e.to_string()))?;
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.sync_data())
                .map_err(|e| AnnotationError::Storage(format!("log write failed: {e}")))?;
        }
        Ok(())
    }

    /// Validates a record against current state.
    fn check(&self, record: &Record) -> Result<()> {
        match record {
            Record::Project { project } => {
                if self.projects.contains_key(&project.id) {
                    return Err(AnnotationError::Conflict(format!("project {:?} already exists", project.id)));
                }
            }
            Record::Labels { project_id, labels } => {
                let st = self.state(project_id)?;
                for (index, s) in labels {
                    if st.project.frame_index(s)? != *index {
                        return Err(AnnotationError::Storage(format!("frame index mismatch for t={}", s.t)));
                    }
                }
            }
            Record::Timer { project_id, event } => {
                let st = self.state(project_id)?;
                st.project.check_timer(&st.timers, event)?;
            }
        }
        Ok(())
    }

    fn apply(&mut self, record: Record) {
        match record {
            Record::Project { project } => {
                let id = project.id.clone();
                self.projects.insert(id, ProjectState { project, labels: BTreeMap::new(), timers: Vec::new() });
            }
            Record::Labels { project_id, labels } => {
                let st = self.projects.get_mut(&project_id).expect("checked");
                for (index, s) in labels {
                    st.labels.insert((s.video_id.clone(), index), s);
                }
            }
            Record::Timer { project_id, event } => {
                self.projects.get_mut(&project_id).expect("checked").timers.push(event);
            }
        }
    }

    fn commit(&mut self, record: Record) -> Result<()> {
        self.check(&record)?;
        self.append(&record)?;
        self.apply(record);
        Ok(())
    }
}

impl Store {
    pub fn in_memory() -> Self {
        Self { inner: Mutex::new(Inner::default()), path: None, default_seed: 0 }
    }

    /// Opens or creates the log at `path` and replays it. A torn final line
    /// from an interrupted write is dropped.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let storage = |e: std::io::Error| AnnotationError::Storage(format!("{}: {e}", path.display()));
        let mut inner = Inner::default();
        let mut valid_len = 0u64;
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(storage)?);
            let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>().map_err(storage)?;
            let n = lines.len();
            for (i, line) in lines.into_iter().enumerate() {
                if line.trim().is_empty() {
                    valid_len += line.len() as u64 + 1;
                    continue;
                }
                match serde_json::from_str::<Record>(&line) {
                    Ok(record) => {
                        inner.check(&record).map_err(|e| {
                            AnnotationError::Storage(format!("{} line {}: {e}", path.display(), i + 1))
                        })?;
                        inner.apply(record);
                        valid_len += line.len() as u64 + 1;
                    }
                    Err(e) if i + 1 == n => {
                        log::warn!("dropping torn final record in {}: {e}", path.display());
                    }
                    Err(e) => {
                        return Err(AnnotationError::Storage(format!("{} line {}: {e}", path.display(), i + 1)));
                    }
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(storage)?;
        if file.metadata().map_err(storage)?.len() > valid_len {
            file.set_len(valid_len).map_err(storage)?;
        }
        inner.log = Some(file);
        log::info!("opened store {} with {} projects", path.display(), inner.projects.len());
        Ok(Self { inner: Mutex::new(inner), path: Some(path), default_seed: 0 })
    }

    /// Allocation seed for projects created without one.
    pub fn with_default_seed(mut self, seed: u64) -> Self {
        self.default_seed = seed;
        self
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Builds plans outside the lock, then registers the project.
    pub fn create_project(&self, req: &CreateProject) -> Result<Project> {
        let id = match &req.id {
            Some(id) => {
                if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                    return Err(AnnotationError::Invalid(format!("bad project id {id:?}")));
                }
                id.clone()
            }
            None => {
                let inner = self.lock();
                (inner.projects.len()..).map(|n| format!("p{n}")).find(|id| !inner.projects.contains_key(id)).unwrap()
            }
        };
        let req = CreateProject { seed: Some(req.seed.unwrap_or(self.default_seed)), ..req.clone() };
        let project = Project::create(id, &req)?;
        self.lock().commit(Record::Project { project: project.clone() })?;
        Ok(project)
    }

    pub fn project(&self, id: &str) -> Result<Project> {
        Ok(self.lock().state(id)?.project.clone())
    }

    pub fn project_ids(&self) -> Vec<String> {
        self.lock().projects.keys().cloned().collect()
    }

    pub fn tasks(&self, project_id: &str, worker: &str) -> Result<Vec<Task>> {
        self.lock().state(project_id)?.project.tasks(worker)
    }

    /// The plan for a video. Without a project id the video must belong to
    /// exactly one project.
    pub fn plan(&self, video_id: &str, project_id: Option<&str>) -> Result<SamplingPlan> {
        let inner = self.lock();
        let found: Vec<&SamplingPlan> = match project_id {
            Some(id) => inner.state(id)?.project.plans.get(video_id).into_iter().collect(),
            None => inner.projects.values().filter_map(|s| s.project.plans.get(video_id)).collect(),
        };
        match found.as_slice() {
            [plan] => Ok((*plan).clone()),
            [] => Err(AnnotationError::NotFound(format!("video {video_id:?}"))),
            _ => Err(AnnotationError::Invalid(format!("video {video_id:?} is in several projects; pass project"))),
        }
    }

    /// All-or-nothing: one bad submission rejects the batch.
    pub fn submit_labels(&self, project_id: &str, submissions: Vec<LabelSubmission>) -> Result<usize> {
        let mut inner = self.lock();
        let st = inner.state(project_id)?;
        let labels = submissions
            .into_iter()
            .map(|s| Ok((st.project.frame_index(&s)?, s)))
            .collect::<Result<Vec<_>>>()?;
        let n = labels.len();
        inner.commit(Record::Labels { project_id: project_id.to_string(), labels })?;
        Ok(n)
    }

    pub fn record_timer(&self, project_id: &str, event: TimerEvent) -> Result<()> {
        self.lock().commit(Record::Timer { project_id: project_id.to_string(), event })
    }

    pub fn export(&self, project_id: &str) -> Result<Vec<PointLabelSet>> {
        let inner = self.lock();
        let st = inner.state(project_id)?;
        Ok(export_labels(&st.project, &st.labels))
    }

    pub fn time_summary(&self, project_id: &str) -> Result<TimeSummary> {
        let inner = self.lock();
        let st = inner.state(project_id)?;
        summarize_time(&st.project, &st.timers)
    }
}
