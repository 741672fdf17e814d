//! On-disk dataset layout: `manifest.jsonl` plus float32 WAVs under
//! `audio/src/` and `audio/edit/`.

mod split;
mod validate;
mod write;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioError;
use crate::compose::TripletMetadata;
use crate::instruct::{TemplateBank, TemplateEntry, TemplateError};
use crate::task::{Subtype, Task};

pub use split::{split_records, write_split};
pub use validate::{validate, ValidationReport, Violation, ViolationKind};
pub use write::{write_dataset, DatasetWriter};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const FORMAT_NAME: &str = "editsynth-dataset";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("duplicate triplet id '{0}'")]
    DuplicateId(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("split: {0}")]
    Split(String),
}

pub(crate) fn io_err(path: &Path) -> impl Fn(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// First line of every manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub sample_rate_hz: u32,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub task_counts: BTreeMap<Task, usize>,
    pub record_count: usize,
    /// The template bank the instructions were drawn from.
    pub templates: Vec<TemplateEntry>,
}

impl ManifestHeader {
    pub fn bank(&self) -> Result<TemplateBank, TemplateError> {
        TemplateBank::from_entries(self.templates.clone())
    }
}

/// One manifest line. Paths are relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub triplet_id: String,
    pub task: Task,
    pub subtype: Subtype,
    pub instruction: String,
    pub template_id: String,
    pub src_path: String,
    pub edit_path: String,
    pub seed: u64,
    pub metadata: TripletMetadata,
}

pub fn task_counts<'a>(records: impl IntoIterator<Item = &'a TripletRecord>) -> BTreeMap<Task, usize> {
    let mut counts: BTreeMap<Task, usize> = Task::ALL.iter().map(|t| (*t, 0)).collect();
    for r in records {
        *counts.entry(r.task).or_default() += 1;
    }
    counts
}

/// Reads a manifest (or split file) into its header and records.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<(ManifestHeader, Vec<TripletRecord>), DatasetError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header: ManifestHeader = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(io_err(path))?;
            serde_json::from_str(&line).map_err(|source| DatasetError::Json {
                path: path.to_path_buf(),
                line: 1,
                source,
            })?
        }
        None => {
            return Err(DatasetError::Header {
                path: path.to_path_buf(),
                reason: "empty manifest".into(),
            })
        }
    };
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(DatasetError::Header {
            path: path.to_path_buf(),
            reason: format!("unsupported format {} v{}", header.format, header.version),
        });
    }
    let mut records = Vec::with_capacity(header.record_count);
    for (n, line) in lines {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|source| DatasetError::Json {
            path: path.to_path_buf(),
            line: n + 1,
            source,
        })?);
    }
    Ok((header, records))
}

pub fn read_dataset(root: impl AsRef<Path>) -> Result<(ManifestHeader, Vec<TripletRecord>), DatasetError> {
    read_manifest(root.as_ref().join(MANIFEST_FILE))
}

/// Header line followed by one record per line, records in the given order.
pub(crate) fn manifest_bytes(header: &ManifestHeader, records: &[TripletRecord]) -> Vec<u8> {
    let mut out = serde_json::to_vec(header).expect("header serializes");
    out.push(b'\n');
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.push(b'\n');
    }
    out
}

/// Writes via a temporary file so readers never see a partial manifest.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let tmp = path.with_extension("jsonl.tmp");
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub records: usize,
    pub task_counts: BTreeMap<Task, usize>,
    pub subtype_counts: BTreeMap<Subtype, usize>,
    pub template_counts: BTreeMap<String, usize>,
}

pub fn stats(records: &[TripletRecord]) -> DatasetStats {
    let mut s = DatasetStats {
        records: records.len(),
        task_counts: task_counts(records),
        ..Default::default()
    };
    for r in records {
        *s.subtype_counts.entry(r.subtype).or_default() += 1;
        *s.template_counts.entry(r.template_id.clone()).or_default() += 1;
    }
    s
}
