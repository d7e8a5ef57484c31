//! Labeled manifests for the supported emotional speech corpora.

mod manifest;
mod schemes;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

pub use manifest::{read_manifest, write_manifest, MANIFEST_HEADER};
pub use schemes::{label_scheme, label_scheme_by_name, parse_path, DatasetId, LabelScheme, Parsed};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown dataset id {0:?}")]
    UnknownDataset(String),
    #[error("cannot parse {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("no parseable audio files under {0}")]
    EmptyCorpus(String),
    #[error("dataset root {0} does not exist")]
    MissingRoot(String),
    #[error("manifest schema mismatch: {0}")]
    Schema(String),
    #[error("manifest I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest CSV: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum AugmentTag {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "noise")]
    Noise,
    #[serde(rename = "pitch+")]
    PitchUp,
    #[serde(rename = "pitch-")]
    PitchDown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub label: String,
    pub dataset: DatasetId,
    pub speaker: String,
    pub split: Split,
    pub augment_tag: AugmentTag,
}

pub type Manifest = Vec<ManifestRow>;

/// Outcome of scanning a corpus directory.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub rows: Manifest,
    /// `.wav` files whose names do not follow the corpus convention.
    pub skipped: Vec<PathBuf>,
    /// Set when the corpus size differs from the published count.
    pub count_warning: Option<String>,
}

/// Walks `root` and builds one row per `.wav` file, labeled by the corpus
/// naming convention. Rows are sorted by path.
pub fn scan_dataset(root: &Path, dataset: DatasetId) -> Result<ScanReport, CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::MissingRoot(root.display().to_string()));
    }
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut files: Vec<PathBuf> = WalkDir::new(root)
        .follow_links(true)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
        })
        .collect();
    files.sort();

    for path in files {
        match parse_path(dataset, &path)? {
            Parsed::Labeled { label, speaker } => rows.push(ManifestRow {
                path: path.display().to_string(),
                label,
                dataset,
                speaker,
                split: Split::Unassigned,
                augment_tag: AugmentTag::None,
            }),
            Parsed::Unrecognized => skipped.push(path),
        }
    }
    if rows.is_empty() {
        return Err(CorpusError::EmptyCorpus(root.display().to_string()));
    }
    let count_warning = dataset
        .expected_count()
        .filter(|&n| n != rows.len())
        .map(|n| format!("{dataset}: found {} clips, full corpus has {n}", rows.len()));
    Ok(ScanReport {
        rows,
        skipped,
        count_warning,
    })
}
