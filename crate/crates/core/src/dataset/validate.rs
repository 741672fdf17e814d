use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_dataset, task_counts, DatasetError, ManifestHeader, TripletRecord};
use crate::audio::{f32_checksum, load_wav, AudioError};
use crate::compose::slots_from_metadata;
use crate::instruct::TemplateBank;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    DuplicateId,
    CountMismatch,
    MissingFile,
    LoadFailure,
    SampleRate,
    Duration,
    Checksum,
    Instruction,
    Slots,
    TaskMismatch,
    Templates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triplet_id: Option<String>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub records: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_audio(
    root: &Path,
    header: &ManifestHeader,
    r: &TripletRecord,
    rel: &str,
    expected_len: usize,
    expected_sha: &str,
) -> Option<Violation> {
    let v = |kind, detail: String| {
        Some(Violation {
            kind,
            triplet_id: Some(r.triplet_id.clone()),
            detail,
        })
    };
    let path = root.join(rel);
    if !path.is_file() {
        return v(ViolationKind::MissingFile, format!("{rel} does not exist"));
    }
    let w = match load_wav(&path) {
        Ok(w) => w,
        Err(AudioError::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => {
            return v(ViolationKind::MissingFile, format!("{rel} does not exist"))
        }
        Err(e) => return v(ViolationKind::LoadFailure, format!("{rel}: {e}")),
    };
    if w.sample_rate_hz() != header.sample_rate_hz {
        return v(
            ViolationKind::SampleRate,
            format!("{rel} is {} Hz, manifest says {}", w.sample_rate_hz(), header.sample_rate_hz),
        );
    }
    if w.len() != expected_len {
        return v(
            ViolationKind::Duration,
            format!("{rel} has {} samples, scene needs {expected_len}", w.len()),
        );
    }
    if f32_checksum(&w) != expected_sha {
        return v(ViolationKind::Checksum, format!("{rel} checksum differs from record"));
    }
    None
}

fn check_record(root: &Path, header: &ManifestHeader, bank: Option<&TemplateBank>, r: &TripletRecord) -> Vec<Violation> {
    let m = &r.metadata;
    let mut out = Vec::new();
    let mut push = |kind, detail: String| {
        out.push(Violation {
            kind,
            triplet_id: Some(r.triplet_id.clone()),
            detail,
        })
    };
    if m.edit.task != r.task || m.edit.subtype != r.subtype || r.subtype.task() != r.task {
        push(
            ViolationKind::TaskMismatch,
            format!("record says {}/{}, edit metadata says {}/{}", r.task, r.subtype, m.edit.task, m.edit.subtype),
        );
    }
    if slots_from_metadata(&m.edit) != m.slots {
        push(ViolationKind::Slots, "stored slot values disagree with edit metadata".into());
    }
    if let Some(bank) = bank {
        match bank.refill(&r.template_id, &m.slots) {
            Ok(text) if text == r.instruction => {}
            Ok(text) => push(ViolationKind::Instruction, format!("template renders '{text}'")),
            Err(e) => push(ViolationKind::Instruction, e.to_string()),
        }
    }
    let src = check_audio(root, header, r, &r.src_path, m.source_spec.len_samples(), &m.src_sha256);
    let edit = check_audio(root, header, r, &r.edit_path, m.edited_spec.len_samples(), &m.edit_sha256);
    out.extend(src);
    out.extend(edit);
    out
}

/// Checks a dataset on disk and lists every violation found.
pub fn validate(root: impl AsRef<Path>) -> Result<ValidationReport, DatasetError> {
    let root = root.as_ref();
    let (header, records) = read_dataset(root)?;
    let mut violations = Vec::new();

    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &records {
        *seen.entry(&r.triplet_id).or_default() += 1;
    }
    for (id, n) in seen.iter().filter(|(_, n)| **n > 1) {
        violations.push(Violation {
            kind: ViolationKind::DuplicateId,
            triplet_id: Some(id.to_string()),
            detail: format!("appears {n} times"),
        });
    }
    let counts = task_counts(&records);
    for (task, n) in &counts {
        let declared = header.task_counts.get(task).copied().unwrap_or(0);
        if declared != *n {
            violations.push(Violation {
                kind: ViolationKind::CountMismatch,
                triplet_id: None,
                detail: format!("{task}: header {declared}, manifest {n}"),
            });
        }
    }
    if header.record_count != records.len() {
        violations.push(Violation {
            kind: ViolationKind::CountMismatch,
            triplet_id: None,
            detail: format!("header lists {} records, manifest has {}", header.record_count, records.len()),
        });
    }
    let bank = match header.bank() {
        Ok(b) => Some(b),
        Err(e) => {
            violations.push(Violation {
                kind: ViolationKind::Templates,
                triplet_id: None,
                detail: e.to_string(),
            });
            None
        }
    };

    let per_record: Vec<Vec<Violation>> = records
        .par_iter()
        .map(|r| check_record(root, &header, bank.as_ref(), r))
        .collect();
    violations.extend(per_record.into_iter().flatten());
    Ok(ValidationReport {
        records: records.len(),
        violations,
    })
}
