use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FeatureSequence;
use crate::{Error, Result};

/// One annotated frame. An empty class set marks background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointLabel {
    pub t: f64,
    pub classes: BTreeSet<usize>,
}

impl PointLabel {
    pub fn new(t: f64, classes: impl IntoIterator<Item = usize>) -> Self {
        Self {
            t,
            classes: classes.into_iter().collect(),
        }
    }

    pub fn background(t: f64) -> Self {
        Self {
            t,
            classes: BTreeSet::new(),
        }
    }

    pub fn is_background(&self) -> bool {
        self.classes.is_empty()
    }
}

/// All point labels of one video, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointLabelSet {
    pub video_id: String,
    pub labels: Vec<PointLabel>,
}

impl PointLabelSet {
    pub fn new(video_id: impl Into<String>, mut labels: Vec<PointLabel>) -> Self {
        labels.sort_by(|a, b| a.t.total_cmp(&b.t));
        Self {
            video_id: video_id.into(),
            labels,
        }
    }

    pub fn validate(&self, duration: f64, num_classes: usize) -> Result<()> {
        let field = |i: usize| format!("labels of {:?} [{i}]", self.video_id);
        let mut seen = Vec::with_capacity(self.labels.len());
        for (i, l) in self.labels.iter().enumerate() {
            if !(l.t >= 0.0 && l.t <= duration) {
                return Err(Error::invalid(field(i), format!("t={} outside [0, {duration}]", l.t)));
            }
            if let Some(&c) = l.classes.iter().find(|&&c| c >= num_classes) {
                return Err(Error::invalid(field(i), format!("class {c} >= {num_classes}")));
            }
            seen.push(l.t);
        }
        seen.sort_by(f64::total_cmp);
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(
                format!("labels of {:?}", self.video_id),
                "duplicate timestamps",
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("labels serialize")
    }
}

/// A label attached to a snippet index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnippetLabel {
    pub index: usize,
    pub classes: BTreeSet<usize>,
}

impl SnippetLabel {
    pub fn is_background(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Point labels mapped onto snippet indices: sorted, one entry per index.
///
/// Labels landing on the same snippet merge by class-set union, so any
/// foreground class overrides background.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SnippetLabels {
    by_index: BTreeMap<usize, BTreeSet<usize>>,
}

impl SnippetLabels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, index: usize, classes: impl IntoIterator<Item = usize>) {
        self.by_index.entry(index).or_default().extend(classes);
    }

    /// Maps each timestamp to the snippet containing it.
    pub fn from_points(set: &PointLabelSet, seq: &FeatureSequence) -> Self {
        let mut out = Self::new();
        for l in &set.labels {
            out.insert(seq.index_of_time(l.t), l.classes.iter().copied());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.by_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_index.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&BTreeSet<usize>> {
        self.by_index.get(&index)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &BTreeSet<usize>)> {
        self.by_index.iter().map(|(&i, c)| (i, c))
    }

    pub fn to_vec(&self) -> Vec<SnippetLabel> {
        self.iter()
            .map(|(index, classes)| SnippetLabel {
                index,
                classes: classes.clone(),
            })
            .collect()
    }

    pub fn foreground(&self) -> impl Iterator<Item = (usize, &BTreeSet<usize>)> {
        self.iter().filter(|(_, c)| !c.is_empty())
    }

    pub fn background(&self) -> impl Iterator<Item = usize> + '_ {
        self.iter().filter(|(_, c)| c.is_empty()).map(|(i, _)| i)
    }

    pub fn check_range(&self, len: usize) -> Result<()> {
        match self.by_index.keys().next_back() {
            Some(&i) if i >= len => Err(Error::IndexOutOfRange { index: i, len }),
            _ => Ok(()),
        }
    }

    pub fn max_class(&self) -> Option<usize> {
        self.by_index.values().filter_map(|c| c.last().copied()).max()
    }
}

impl FromIterator<(usize, BTreeSet<usize>)> for SnippetLabels {
    fn from_iter<I: IntoIterator<Item = (usize, BTreeSet<usize>)>>(iter: I) -> Self {
        let mut out = Self::new();
        for (i, c) in iter {
            out.insert(i, c);
        }
        out
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    Many(Vec<PointLabelSet>),
    One(PointLabelSet),
}

/// Reads label sets from a JSON file (one set or an array of sets) or from
/// every `*.json` file of a directory, in file-name order.
pub fn load_label_sets(path: impl AsRef<Path>) -> Result<Vec<PointLabelSet>> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in files {
            out.extend(load_label_sets(&f)?);
        }
        return Ok(out);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed: OneOrMany = serde_json::from_str(&text)
        .map_err(|e| Error::json(format!("labels {}", path.display()), e))?;
    Ok(match parsed {
        OneOrMany::Many(v) => v,
        OneOrMany::One(s) => vec![s],
    })
}

pub fn write_label_set(path: impl AsRef<Path>, set: &PointLabelSet) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, set.to_json()).map_err(|e| Error::io(path, e))
}
