//! Dataset manifests, point-label storage, feature files and temporal resampling.

mod features;
mod labels;
mod manifest;
mod resample;

pub use features::{load_features, write_features, FeatureSequence, FEATURE_MAGIC};
pub use labels::{
    load_label_sets, write_label_set, PointLabel, PointLabelSet, SnippetLabel, SnippetLabels,
};
pub use manifest::{load_manifest, DatasetManifest, GtSegment, Split, VideoRecord};
pub use resample::{rescale_features, sample_to_train_length, Resampled, SamplingMode};

/// Frames per snippet used by the I3D-style feature extractors.
pub const DEFAULT_SNIPPET_LEN: usize = 16;
