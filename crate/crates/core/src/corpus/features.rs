use std::io::Write;
use std::path::Path;

use super::DEFAULT_SNIPPET_LEN;
use crate::{Error, Result};

/// Magic bytes at the head of every feature file.
pub const FEATURE_MAGIC: &[u8; 8] = b"AAPLFT1\0";

const HEADER_LEN: usize = 16;
const DEFAULT_FRAME_RATE: f64 = 25.0;

/// Snippet features of one video, stored snippet-major (`length` rows of `dims`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    pub dims: usize,
    pub length: usize,
    pub data: Vec<f32>,
    pub snippet_len: usize,
    pub frame_rate: f64,
}

impl FeatureSequence {
    pub fn new(video_id: impl Into<String>, dims: usize, data: Vec<f32>) -> Result<Self> {
        if dims < 2 || !dims.is_multiple_of(2) {
            return Err(Error::invalid("dims", format!("{dims} must be even and >= 2")));
        }
        if data.is_empty() || !data.len().is_multiple_of(dims) {
            return Err(Error::Shape(format!(
                "{} values is not a positive multiple of {dims}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature value {i}")));
        }
        Ok(Self {
            video_id: video_id.into(),
            dims,
            length: data.len() / dims,
            data,
            snippet_len: DEFAULT_SNIPPET_LEN,
            frame_rate: DEFAULT_FRAME_RATE,
        })
    }

    pub fn with_timing(mut self, snippet_len: usize, frame_rate: f64) -> Self {
        self.snippet_len = snippet_len;
        self.frame_rate = frame_rate;
        self
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dims..(t + 1) * self.dims]
    }

    pub fn snippet_seconds(&self) -> f64 {
        self.snippet_len as f64 / self.frame_rate
    }

    pub fn duration(&self) -> f64 {
        self.length as f64 * self.snippet_seconds()
    }

    /// Snippet containing time `t`, clamped to the sequence.
    pub fn index_of_time(&self, t: f64) -> usize {
        let i = (t / self.snippet_seconds()).floor();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.length - 1)
        }
    }

    pub fn center_time(&self, index: usize) -> f64 {
        (index as f64 + 0.5) * self.snippet_seconds()
    }

    /// Feature values widened to f64, same layout.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

/// Reads an AAPLFT1 file. The video id is taken from the file stem; timing
/// defaults can be overridden with [`FeatureSequence::with_timing`].
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |reason: String| Error::FeatureFormat {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN || &bytes[..8] != FEATURE_MAGIC {
        return Err(fail("bad magic".into()));
    }
    let length = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dims = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = length
        .checked_mul(dims)
        .ok_or_else(|| fail("header overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected * 4 {
        return Err(fail(format!(
            "truncated payload: header claims {expected} values, found {}",
            payload.len() / 4
        )));
    }
    if payload.len() > expected * 4 {
        return Err(fail(format!(
            "{} trailing bytes after payload",
            payload.len() - expected * 4
        )));
    }
    if length == 0 {
        return Err(fail("empty sequence".into()));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let video_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    FeatureSequence::new(video_id, dims, data).map_err(|e| fail(e.to_string()))
}

pub fn write_features(path: impl AsRef<Path>, seq: &FeatureSequence) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(HEADER_LEN + seq.data.len() * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&(seq.length as u32).to_le_bytes());
    buf.extend_from_slice(&(seq.dims as u32).to_le_bytes());
    for v in &seq.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw_file(t: u32, d: u32, values: &[f32]) -> Vec<u8> {
        let mut b = FEATURE_MAGIC.to_vec();
        b.extend_from_slice(&t.to_le_bytes());
        b.extend_from_slice(&d.to_le_bytes());
        for v in values {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn reads_three_by_four() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vid.bin");
        let values: Vec<f32> = (0..12).map(|i| i as f32 * 0.5).collect();
        std::fs::write(&path, raw_file(3, 4, &values)).unwrap();
        let seq = load_features(&path).unwrap();
        assert_eq!((seq.length, seq.dims), (3, 4));
        assert_eq!(seq.row(2), &values[8..12]);
        assert_eq!(seq.video_id, "vid");
    }

    #[test]
    fn truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        std::fs::write(&path, raw_file(3, 4, &[0.0; 11])).unwrap();
        let err = load_features(&path).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");
    }

    #[test]
    fn bad_magic_and_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        let mut b = raw_file(1, 2, &[1.0, 2.0]);
        b[0] = b'X';
        std::fs::write(&path, &b).unwrap();
        assert!(load_features(&path).unwrap_err().to_string().contains("magic"));
        std::fs::write(&path, raw_file(1, 2, &[1.0, f32::NAN])).unwrap();
        assert!(load_features(&path).unwrap_err().to_string().contains("non-finite"));
    }

    #[test]
    fn odd_dims_rejected() {
        assert!(FeatureSequence::new("v", 3, vec![0.0; 6]).is_err());
    }

    #[test]
    fn time_index_mapping() {
        let seq = FeatureSequence::new("v", 2, vec![0.0; 20])
            .unwrap()
            .with_timing(16, 16.0);
        assert_eq!(seq.index_of_time(0.0), 0);
        assert_eq!(seq.index_of_time(3.99), 3);
        assert_eq!(seq.index_of_time(10.0), 9);
        assert_eq!(seq.center_time(2), 2.5);
        assert_eq!(seq.duration(), 10.0);
    }

    proptest! {
        #[test]
        fn write_then_read_is_bit_exact(
            half in 1usize..5,
            len in 1usize..20,
            seed in any::<u64>(),
        ) {
            let dims = half * 2;
            let data: Vec<f32> = (0..dims * len)
                .map(|i| f32::from_bits((seed as u32).wrapping_mul(2654435761).wrapping_add(i as u32 * 7919) & 0x3fff_ffff))
                .collect();
            let seq = FeatureSequence::new("x", dims, data).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("x.bin");
            write_features(&path, &seq).unwrap();
            let back = load_features(&path).unwrap();
            prop_assert_eq!(back.dims, seq.dims);
            prop_assert_eq!(back.length, seq.length);
            let a: Vec<u32> = back.data.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = seq.data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
