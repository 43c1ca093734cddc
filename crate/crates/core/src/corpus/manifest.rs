use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DEFAULT_SNIPPET_LEN;
use crate::{Error, Result};

/// A ground-truth action instance, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtSegment {
    pub start: f64,
    pub end: f64,
    pub class_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    /// Seconds.
    pub duration: f64,
    pub frame_rate: f64,
    #[serde(default = "default_snippet_len")]
    pub snippet_len: usize,
    pub feature_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<GtSegment>>,
}

fn default_snippet_len() -> usize {
    DEFAULT_SNIPPET_LEN
}

impl VideoRecord {
    /// Length of one snippet in seconds.
    pub fn snippet_seconds(&self) -> f64 {
        self.snippet_len as f64 / self.frame_rate
    }

    fn validate(&self, num_classes: usize) -> Result<()> {
        let field = |name: &str| format!("video {:?}: {name}", self.id);
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::invalid(field("duration"), "must be positive"));
        }
        if !(self.frame_rate > 0.0) || !self.frame_rate.is_finite() {
            return Err(Error::invalid(field("frame_rate"), "must be positive"));
        }
        if self.snippet_len == 0 {
            return Err(Error::invalid(field("snippet_len"), "must be positive"));
        }
        for (i, seg) in self.ground_truth.iter().flatten().enumerate() {
            let ok = seg.start >= 0.0 && seg.start < seg.end && seg.end <= self.duration;
            if !ok {
                return Err(Error::invalid(
                    field(&format!("ground_truth[{i}]")),
                    format!(
                        "segment [{}, {}] must satisfy 0 <= start < end <= {}",
                        seg.start, seg.end, self.duration
                    ),
                ));
            }
            if seg.class_index >= num_classes {
                return Err(Error::invalid(
                    field(&format!("ground_truth[{i}].class_index")),
                    format!("{} >= number of classes {num_classes}", seg.class_index),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Training,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub class_names: Vec<String>,
    pub videos: Vec<VideoRecord>,
    pub map_thresholds: Vec<f64>,
    #[serde(default)]
    pub split: Split,
    /// Directory relative feature paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn video(&self, id: &str) -> Option<&VideoRecord> {
        self.videos.iter().find(|v| v.id == id)
    }

    pub fn feature_file(&self, record: &VideoRecord) -> PathBuf {
        match &self.base_dir {
            Some(base) if record.feature_path.is_relative() => base.join(&record.feature_path),
            _ => record.feature_path.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_names.is_empty() {
            return Err(Error::invalid("class_names", "at least one class is required"));
        }
        let mut seen = HashSet::new();
        for v in &self.videos {
            if !seen.insert(v.id.as_str()) {
                return Err(Error::invalid("videos", format!("duplicate video id {:?}", v.id)));
            }
            v.validate(self.num_classes())?;
        }
        for (i, &th) in self.map_thresholds.iter().enumerate() {
            if !(th > 0.0 && th <= 1.0) {
                return Err(Error::invalid(
                    format!("map_thresholds[{i}]"),
                    format!("{th} is outside (0, 1]"),
                ));
            }
            if i > 0 && th <= self.map_thresholds[i - 1] {
                return Err(Error::invalid("map_thresholds", "must be strictly increasing"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Reads and validates a manifest. With `check_features`, every referenced
/// feature file must exist.
pub fn load_manifest(path: impl AsRef<Path>, check_features: bool) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::json(format!("manifest {}", path.display()), e))?;
    manifest.base_dir = path.parent().map(Path::to_path_buf);
    manifest.validate()?;
    if check_features {
        for v in &manifest.videos {
            let f = manifest.feature_file(v);
            if !f.is_file() {
                return Err(Error::invalid(
                    format!("video {:?}: feature_path", v.id),
                    format!("missing feature file {}", f.display()),
                ));
            }
        }
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest_json(gt_end: f64) -> String {
        format!(
            r#"{{
  "class_names": ["a", "b", "c"],
  "map_thresholds": [0.1, 0.5],
  "videos": [
    {{"id": "v1", "duration": 10.0, "frame_rate": 25.0, "feature_path": "v1.bin",
      "ground_truth": [{{"start": 2.0, "end": {gt_end}, "class_index": 1}}]}},
    {{"id": "v2", "duration": 5.0, "frame_rate": 30.0, "snippet_len": 8, "feature_path": "v2.bin"}}
  ]
}}"#
        )
    }

    #[test]
    fn loads_two_video_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, manifest_json(4.0)).unwrap();
        let m = load_manifest(&path, false).unwrap();
        assert_eq!(m.num_classes(), 3);
        assert_eq!(m.videos.len(), 2);
        assert_eq!(m.videos[0].snippet_len, 16);
        assert_eq!(m.videos[1].snippet_len, 8);
        assert_eq!(m.split, Split::Training);
        assert_eq!(m.feature_file(&m.videos[0]), dir.path().join("v1.bin"));
    }

    #[test]
    fn rejects_reversed_segment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, manifest_json(1.0)).unwrap();
        let err = load_manifest(&path, false).unwrap_err().to_string();
        assert!(err.contains("v1") && err.contains("ground_truth[0]"), "{err}");
    }

    #[test]
    fn missing_feature_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, manifest_json(4.0)).unwrap();
        let err = load_manifest(&path, true).unwrap_err().to_string();
        assert!(err.contains("v1.bin"), "{err}");
    }

    #[test]
    fn thresholds_must_increase() {
        let mut m: DatasetManifest = serde_json::from_str(&manifest_json(4.0)).unwrap();
        m.map_thresholds = vec![0.5, 0.5];
        assert!(m.validate().is_err());
        m.map_thresholds = vec![0.0, 0.5];
        assert!(m.validate().is_err());
    }
}
