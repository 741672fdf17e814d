use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::{
    io_err, manifest_bytes, task_counts, write_atomic, DatasetError, ManifestHeader, TripletRecord,
    FORMAT_NAME, FORMAT_VERSION, MANIFEST_FILE,
};
use crate::audio::{save_wav, BitDepth};
use crate::compose::EditTriplet;
use crate::instruct::TemplateBank;

pub const SRC_DIR: &str = "audio/src";
pub const EDIT_DIR: &str = "audio/edit";

/// Streams triplets to disk: audio immediately, the manifest on `finish`.
pub struct DatasetWriter {
    root: PathBuf,
    sample_rate_hz: u32,
    config_hash: String,
    config: serde_json::Value,
    bank: TemplateBank,
    records: Vec<TripletRecord>,
    ids: BTreeSet<String>,
}

impl DatasetWriter {
    pub fn create(
        root: impl AsRef<Path>,
        sample_rate_hz: u32,
        config_hash: impl Into<String>,
        config: serde_json::Value,
        bank: &TemplateBank,
    ) -> Result<Self, DatasetError> {
        let root = root.as_ref().to_path_buf();
        for dir in [SRC_DIR, EDIT_DIR] {
            let d = root.join(dir);
            std::fs::create_dir_all(&d).map_err(io_err(&d))?;
        }
        Ok(Self {
            root,
            sample_rate_hz,
            config_hash: config_hash.into(),
            config,
            bank: bank.clone(),
            records: Vec::new(),
            ids: BTreeSet::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write(&mut self, t: EditTriplet) -> Result<(), DatasetError> {
        if !self.ids.insert(t.triplet_id.clone()) {
            return Err(DatasetError::DuplicateId(t.triplet_id));
        }
        let src_path = format!("{SRC_DIR}/{}.wav", t.triplet_id);
        let edit_path = format!("{EDIT_DIR}/{}.wav", t.triplet_id);
        save_wav(&t.source_audio, self.root.join(&src_path), BitDepth::Float32)?;
        save_wav(&t.edited_audio, self.root.join(&edit_path), BitDepth::Float32)?;
        self.records.push(TripletRecord {
            triplet_id: t.triplet_id,
            task: t.task,
            subtype: t.subtype,
            instruction: t.instruction,
            template_id: t.template_id,
            src_path,
            edit_path,
            seed: t.seed,
            metadata: t.metadata,
        });
        Ok(())
    }

    /// Sorts records by id and writes `manifest.jsonl`.
    pub fn finish(mut self) -> Result<(ManifestHeader, Vec<TripletRecord>), DatasetError> {
        self.records.sort_by(|a, b| a.triplet_id.cmp(&b.triplet_id));
        let header = ManifestHeader {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            sample_rate_hz: self.sample_rate_hz,
            config_hash: self.config_hash,
            config: self.config,
            task_counts: task_counts(&self.records),
            record_count: self.records.len(),
            templates: self.bank.entries(),
        };
        write_atomic(&self.root.join(MANIFEST_FILE), &manifest_bytes(&header, &self.records))?;
        Ok((header, self.records))
    }
}

/// Writes every triplet of `triplets` under `root`.
pub fn write_dataset(
    triplets: impl IntoIterator<Item = EditTriplet>,
    root: impl AsRef<Path>,
    sample_rate_hz: u32,
    config_hash: &str,
    config: serde_json::Value,
    bank: &TemplateBank,
) -> Result<(ManifestHeader, Vec<TripletRecord>), DatasetError> {
    let mut w = DatasetWriter::create(root, sample_rate_hz, config_hash, config, bank)?;
    for t in triplets {
        w.write(t)?;
    }
    w.finish()
}
