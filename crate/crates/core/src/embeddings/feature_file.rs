//! Binary feature file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! 0   8 bytes  magic "CONVFEAT"
//! 8   u16      version (1)
//! 10  u32      D
//! 14  u64      N
//! 22  N*D f32  row-major vectors
//! ..  u64      manifest length L
//! ..  L bytes  UTF-8 JSON manifest
//! ```
//!
//! The manifest carries `backbone_id`, `labels` and `source_ids`. Writers in
//! this crate also emit `sample_ids`, `views` and `normalized`; readers treat
//! those as optional.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureRow, FeatureSet, FeatureVector, Label};
use crate::binio::OffsetReader;
use crate::error::{ConvError, Result};

pub const FEATURE_MAGIC: &[u8; 8] = b"CONVFEAT";
pub const FEATURE_VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 8 + 2 + 4 + 8;

#[derive(Serialize, Deserialize)]
struct Manifest {
    backbone_id: String,
    labels: Vec<Label>,
    source_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sample_ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    views: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    normalized: Option<Vec<bool>>,
}

pub fn write_feature_set<W: Write>(set: &FeatureSet, mut out: W) -> Result<()> {
    if set.is_empty() {
        return Err(ConvError::InvalidInput("refusing to write an empty feature set".into()));
    }
    let dim = u32::try_from(set.dim())
        .map_err(|_| ConvError::InvalidInput("dimension does not fit in u32".into()))?;
    out.write_all(FEATURE_MAGIC)?;
    out.write_all(&FEATURE_VERSION.to_le_bytes())?;
    out.write_all(&dim.to_le_bytes())?;
    out.write_all(&(set.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(set.dim() * 4);
    for row in set.rows() {
        buf.clear();
        for v in row.vector.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    let manifest = Manifest {
        backbone_id: set.backbone_id().to_string(),
        labels: set.rows().iter().map(|r| r.label).collect(),
        source_ids: set.rows().iter().map(|r| r.source_id.clone()).collect(),
        sample_ids: Some(set.rows().iter().map(|r| r.sample_id.clone()).collect()),
        views: Some(set.rows().iter().map(|r| r.view).collect()),
        normalized: Some(set.rows().iter().map(|r| r.vector.is_normalized()).collect()),
    };
    let json = serde_json::to_vec(&manifest)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    out.flush()?;
    Ok(())
}

pub fn read_feature_set<R: Read>(input: R) -> Result<FeatureSet> {
    let mut cur = OffsetReader::new(input);
    let mut magic = [0u8; 8];
    cur.read_exact(&mut magic, "magic")?;
    if &magic != FEATURE_MAGIC {
        return Err(ConvError::format(0, "bad magic, not a CONVFEAT file"));
    }
    let version = cur.u16("version")?;
    if version != FEATURE_VERSION {
        return Err(ConvError::format(8, format!("unsupported version {version}")));
    }
    let dim = cur.u32("dimension")? as usize;
    let count = cur.u64("row count")?;
    if dim == 0 {
        return Err(ConvError::format(10, "dimension is zero"));
    }
    let count = usize::try_from(count)
        .map_err(|_| ConvError::format(14, "row count does not fit in memory"))?;

    let mut vectors = Vec::with_capacity(count.min(1 << 20));
    let mut buf = vec![0u8; dim * 4];
    for row in 0..count {
        let start = cur.offset;
        cur.read_exact(&mut buf, &format!("row {row}"))?;
        let values: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ConvError::format(start, format!("row {row} has non-finite values")));
        }
        vectors.push(values);
    }

    let manifest_offset = cur.offset;
    let len = cur.u64("manifest length")?;
    let len = usize::try_from(len)
        .map_err(|_| ConvError::format(manifest_offset, "manifest length too large"))?;
    let mut json = vec![0u8; len];
    cur.read_exact(&mut json, "manifest")?;
    let manifest: Manifest = serde_json::from_slice(&json).map_err(|e| {
        ConvError::format(manifest_offset + 8, format!("invalid manifest JSON: {e}"))
    })?;

    let check_len = |name: &str, n: usize| -> Result<()> {
        if n != count {
            Err(ConvError::format(
                manifest_offset + 8,
                format!("manifest `{name}` has {n} entries for {count} rows"),
            ))
        } else {
            Ok(())
        }
    };
    check_len("labels", manifest.labels.len())?;
    check_len("source_ids", manifest.source_ids.len())?;
    if let Some(ids) = &manifest.sample_ids {
        check_len("sample_ids", ids.len())?;
    }
    if let Some(views) = &manifest.views {
        check_len("views", views.len())?;
    }
    if let Some(flags) = &manifest.normalized {
        check_len("normalized", flags.len())?;
    }

    let mut set = FeatureSet::new(manifest.backbone_id, dim);
    for (i, values) in vectors.into_iter().enumerate() {
        let normalized = manifest.normalized.as_ref().is_some_and(|f| f[i]);
        let vector = FeatureVector::with_flag(values, normalized).map_err(|e| {
            ConvError::format(HEADER_LEN + (i * dim * 4) as u64, e.to_string())
        })?;
        set.push(FeatureRow {
            vector,
            label: manifest.labels[i],
            source_id: manifest.source_ids[i].clone(),
            sample_id: manifest
                .sample_ids
                .as_ref()
                .map(|ids| ids[i].clone())
                .unwrap_or_else(|| format!("row{i:06}")),
            view: manifest.views.as_ref().map_or(0, |v| v[i]),
        })?;
    }
    Ok(set)
}

pub fn save_feature_file(set: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let run = || -> Result<()> {
        let file = File::create(path)?;
        write_feature_set(set, BufWriter::new(file))
    };
    run().map_err(|e| e.in_file(path))
}

pub fn load_feature_file(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let run = || -> Result<FeatureSet> {
        let file = File::open(path)?;
        read_feature_set(BufReader::new(file))
    };
    run().map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_set() -> FeatureSet {
        let mut set = FeatureSet::new("test-backbone", 4);
        for i in 0..3 {
            set.push(FeatureRow {
                vector: FeatureVector::new(vec![i as f32, 0.5, -1.25, 1e-7]).unwrap(),
                label: if i % 2 == 0 { Label::Natural } else { Label::Generated },
                source_id: format!("src{i}"),
                sample_id: format!("img_{i:04}"),
                view: i,
            })
            .unwrap();
        }
        set
    }

    fn encode(set: &FeatureSet) -> Vec<u8> {
        let mut buf = Vec::new();
        write_feature_set(set, &mut buf).unwrap();
        buf
    }

    #[test]
    fn three_vector_round_trip() {
        let set = small_set();
        let back = read_feature_set(encode(&set).as_slice()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn header_is_bit_exact() {
        let bytes = encode(&small_set());
        assert_eq!(&bytes[..8], b"CONVFEAT");
        assert_eq!(&bytes[8..10], &[1, 0]);
        assert_eq!(&bytes[10..14], &4u32.to_le_bytes());
        assert_eq!(&bytes[14..22], &3u64.to_le_bytes());
        assert_eq!(&bytes[22..26], &0f32.to_le_bytes());
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let mut bytes = encode(&small_set());
        bytes[0] = b'X';
        match read_feature_set(bytes.as_slice()) {
            Err(ConvError::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_version_names_offset() {
        let mut bytes = encode(&small_set());
        bytes[8] = 9;
        assert!(matches!(
            read_feature_set(bytes.as_slice()),
            Err(ConvError::Format { offset: 8, .. })
        ));
    }

    #[test]
    fn truncation_names_offset() {
        let bytes = encode(&small_set());
        let cut = &bytes[..30];
        match read_feature_set(cut) {
            Err(ConvError::Format { offset, message }) => {
                assert_eq!(offset, 30);
                assert!(message.contains("row 0"), "{message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_manifest_is_accepted() {
        // An external writer that only emits the required manifest fields.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(FEATURE_MAGIC);
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&1f32.to_le_bytes());
        bytes.extend_from_slice(&2f32.to_le_bytes());
        let json = br#"{"backbone_id":"x","labels":["generated"],"source_ids":["sd"]}"#;
        bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
        bytes.extend_from_slice(json);
        let set = read_feature_set(bytes.as_slice()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.rows()[0].label, Label::Generated);
        assert_eq!(set.rows()[0].view, 0);
    }

    #[test]
    fn empty_set_is_not_written() {
        let set = FeatureSet::new("b", 3);
        assert!(write_feature_set(&set, Vec::new()).is_err());
    }
}
