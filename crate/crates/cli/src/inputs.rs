//! Image directories and score files.

use std::path::{Component, Path, PathBuf};

use anyhow::{bail, Context};
use conv_core::embeddings::{preprocess_dynamic, CropMode, PreprocessOptions};
use conv_core::{ImageTensor, Label, ScoredSample, Verdict};
use serde::{Deserialize, Serialize};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Clone, Debug, PartialEq)]
pub struct ImageEntry {
    pub path: PathBuf,
    /// Path relative to the input directory, with `/` separators.
    pub sample_id: String,
    /// Parent directory relative to the input, or `.`.
    pub source_id: String,
    pub label: Option<Label>,
}

fn label_from_path(rel: &Path) -> Option<Label> {
    rel.parent()?.components().find_map(|c| match c {
        Component::Normal(s) => {
            let s = s.to_str()?.to_ascii_lowercase();
            matches!(s.as_str(), "natural" | "real" | "generated" | "fake")
                .then(|| s.parse().ok())
                .flatten()
        }
        _ => None,
    })
}

/// Every PNG or JPEG under `dir`, sorted by path.
pub fn scan_images(dir: &Path) -> anyhow::Result<Vec<ImageEntry>> {
    if !dir.is_dir() {
        bail!("{}: not a directory", dir.display());
    }
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.with_context(|| format!("listing {}", dir.display()))?;
        let path = entry.path();
        let is_image = entry.file_type().is_file()
            && path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if !is_image {
            continue;
        }
        let rel = path.strip_prefix(dir).unwrap_or(path);
        let join = |p: &Path| {
            p.components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/")
        };
        let source = rel.parent().map(join).filter(|s| !s.is_empty()).unwrap_or_else(|| ".".into());
        out.push(ImageEntry {
            path: path.to_path_buf(),
            sample_id: join(rel),
            source_id: source,
            label: label_from_path(rel),
        });
    }
    if out.is_empty() {
        bail!("{}: no PNG or JPEG images found", dir.display());
    }
    Ok(out)
}

pub fn load_image(entry: &ImageEntry, input_size: usize, crop: CropMode) -> anyhow::Result<ImageTensor> {
    let img = image::open(&entry.path).with_context(|| format!("decoding {}", entry.path.display()))?;
    let options = PreprocessOptions { input_size, crop };
    preprocess_dynamic(&img, &options).with_context(|| format!("preprocessing {}", entry.path.display()))
}

/// One line of `scores.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub sample_id: String,
    #[serde(deserialize_with = "lenient_label")]
    pub label: Option<Label>,
    pub score: f64,
    pub verdict: Option<Verdict>,
    #[serde(default)]
    pub source_id: Option<String>,
}

/// Accepts anything `Label::from_str` does (`natural`, `real`, `0`, `fake`, ...); empty means unlabelled.
fn lenient_label<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<Label>, D::Error> {
    let raw: Option<String> = Option::deserialize(d)?;
    match raw.as_deref().map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => s.parse().map(Some).map_err(serde::de::Error::custom),
    }
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.serialize(row).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_scores(path: &Path) -> anyhow::Result<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = r
        .deserialize()
        .collect::<Result<Vec<ScoreRow>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    if rows.is_empty() {
        bail!("{}: no score rows", path.display());
    }
    Ok(rows)
}

/// Labelled samples for the metrics; fails when any row lacks a label.
pub fn scored_samples(path: &Path, rows: &[ScoreRow]) -> anyhow::Result<Vec<ScoredSample>> {
    rows.iter()
        .map(|r| {
            let label = r
                .label
                .with_context(|| format!("{}: sample `{}` has no label", path.display(), r.sample_id))?;
            Ok(ScoredSample::new(r.sample_id.clone(), r.score, label)
                .with_source(r.source_id.clone().unwrap_or_default()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_from_layout() {
        assert_eq!(label_from_path(Path::new("real/a.png")), Some(Label::Natural));
        assert_eq!(label_from_path(Path::new("data/fake/sd/a.png")), Some(Label::Generated));
        assert_eq!(label_from_path(Path::new("a.png")), None);
        assert_eq!(label_from_path(Path::new("natural.png")), None);
    }

    #[test]
    fn scores_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let rows = vec![
            ScoreRow {
                sample_id: "a,b.png".into(),
                label: Some(Label::Natural),
                score: 0.125,
                verdict: Some(Verdict::Natural),
                source_id: Some("real".into()),
            },
            ScoreRow {
                sample_id: "c.png".into(),
                label: None,
                score: 0.5,
                verdict: None,
                source_id: None,
            },
        ];
        write_scores(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("sample_id,label,score,verdict,source_id\n"));
        assert_eq!(read_scores(&p).unwrap(), rows);
    }

    #[test]
    fn minimal_columns_are_enough() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "sample_id,label,score\nx,fake,0.9\ny,0,0.1\n").unwrap();
        let rows = read_scores(&p).unwrap();
        let samples = scored_samples(&p, &rows).unwrap();
        assert_eq!(samples[0].label, Label::Generated);
        assert_eq!(samples[1].label, Label::Natural);
    }
}
