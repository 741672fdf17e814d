use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use sha2::{Digest, Sha256};

use super::{Candidate, Category, CurationError, EventSegment};
use crate::audio::{load_wav, Waveform};

pub const LIBRARY_MANIFEST: &str = "library.jsonl";

/// Read-only collection of curated segments, sorted by id. Audio is loaded
/// lazily and cached, so the library can be shared across worker threads.
#[derive(Debug, Clone)]
pub struct SegmentLibrary {
    root: Option<PathBuf>,
    segments: Vec<EventSegment>,
    index: HashMap<String, usize>,
    by_label: BTreeMap<String, Vec<String>>,
    cache: Vec<OnceLock<Arc<Waveform>>>,
}

impl SegmentLibrary {
    fn assemble(
        root: Option<PathBuf>,
        mut entries: Vec<(EventSegment, Option<Waveform>)>,
    ) -> Result<Self, CurationError> {
        entries.sort_by(|a, b| a.0.id.cmp(&b.0.id));
        let mut index = HashMap::with_capacity(entries.len());
        let mut by_label: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut segments = Vec::with_capacity(entries.len());
        let mut cache = Vec::with_capacity(entries.len());
        for (i, (seg, audio)) in entries.into_iter().enumerate() {
            if index.insert(seg.id.clone(), i).is_some() {
                return Err(CurationError::DuplicateSegment(seg.id));
            }
            by_label.entry(seg.label.clone()).or_default().push(seg.id.clone());
            let cell = OnceLock::new();
            if let Some(w) = audio {
                let _ = cell.set(Arc::new(w));
            }
            cache.push(cell);
            segments.push(seg);
        }
        Ok(Self {
            root,
            segments,
            index,
            by_label,
            cache,
        })
    }

    /// A library whose audio lives only in memory.
    pub fn in_memory(candidates: Vec<Candidate>) -> Result<Self, CurationError> {
        Self::assemble(
            None,
            candidates
                .into_iter()
                .map(|c| (c.segment, Some(c.audio)))
                .collect(),
        )
    }

    /// Opens `root/library.jsonl`; every referenced WAV must exist.
    pub fn load(root: impl AsRef<Path>) -> Result<Self, CurationError> {
        let root = root.as_ref();
        let path = root.join(LIBRARY_MANIFEST);
        let file = std::fs::File::open(&path).map_err(|source| CurationError::Io {
            path: path.clone(),
            source,
        })?;
        let mut entries = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| CurationError::Io {
                path: path.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let seg: EventSegment =
                serde_json::from_str(&line).map_err(|source| CurationError::Manifest {
                    path: path.clone(),
                    line: n + 1,
                    source,
                })?;
            if !root.join(&seg.audio_path).is_file() {
                return Err(CurationError::InvalidEntry {
                    path: path.clone(),
                    reason: format!("segment {} audio '{}' not found", seg.id, seg.audio_path),
                });
            }
            entries.push((seg, None));
        }
        Self::assemble(Some(root.to_path_buf()), entries)
    }

    /// Manifest bytes: one JSON object per line in id order.
    pub fn manifest_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for seg in &self.segments {
            serde_json::to_writer(&mut out, seg).expect("segment serializes");
            out.push(b'\n');
        }
        out
    }

    pub fn write_manifest(&self, root: impl AsRef<Path>) -> Result<PathBuf, CurationError> {
        let path = root.as_ref().join(LIBRARY_MANIFEST);
        std::fs::File::create(&path)
            .and_then(|mut f| f.write_all(&self.manifest_bytes()))
            .map_err(|source| CurationError::Io {
                path: path.clone(),
                source,
            })?;
        Ok(path)
    }

    /// SHA-256 of the manifest bytes, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.manifest_bytes()))
    }

    pub(crate) fn set_root(&mut self, root: &Path) {
        self.root = Some(root.to_path_buf());
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> &[EventSegment] {
        &self.segments
    }

    pub fn get(&self, id: &str) -> Option<&EventSegment> {
        self.index.get(id).map(|&i| &self.segments[i])
    }

    pub fn by_category(&self, category: Category) -> Vec<&EventSegment> {
        self.segments.iter().filter(|s| s.category == category).collect()
    }

    pub fn label_index(&self) -> &BTreeMap<String, Vec<String>> {
        &self.by_label
    }

    pub fn audio(&self, id: &str) -> Result<Arc<Waveform>, CurationError> {
        let &i = self
            .index
            .get(id)
            .ok_or_else(|| CurationError::UnknownSegment(id.to_string()))?;
        if let Some(w) = self.cache[i].get() {
            return Ok(Arc::clone(w));
        }
        let root = self
            .root
            .as_ref()
            .ok_or_else(|| CurationError::UnknownSegment(id.to_string()))?;
        let w = Arc::new(load_wav(root.join(&self.segments[i].audio_path))?);
        Ok(Arc::clone(self.cache[i].get_or_init(|| w)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(id: &str, label: &str, category: Category) -> Candidate {
        Candidate {
            segment: EventSegment {
                id: id.into(),
                label: label.into(),
                audio_path: format!("segments/{id}.wav"),
                onset_s: 0.0,
                offset_s: 0.5,
                duration_s: 0.5,
                category,
                source_clip_id: "clip".into(),
                similarity: Some(0.9),
            },
            audio: Waveform::new(vec![0.25; 8000], 16000).unwrap(),
        }
    }

    #[test]
    fn sorted_indexed_and_cached() {
        let lib = SegmentLibrary::in_memory(vec![
            seg("b", "dog", Category::Foreground),
            seg("a", "rain", Category::Background),
            seg("c", "dog", Category::Foreground),
        ])
        .unwrap();
        let ids: Vec<_> = lib.segments().iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(lib.label_index()["dog"], ["b", "c"]);
        assert_eq!(lib.by_category(Category::Background).len(), 1);
        assert_eq!(lib.audio("b").unwrap().len(), 8000);
        assert!(matches!(lib.audio("zz"), Err(CurationError::UnknownSegment(_))));
        assert!(SegmentLibrary::in_memory(vec![seg("a", "x", Category::Foreground); 2]).is_err());
    }

    #[test]
    fn manifest_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("segments")).unwrap();
        let items = vec![seg("a", "rain", Category::Background)];
        crate::audio::save_wav(&items[0].audio, dir.path().join("segments/a.wav"), Default::default())
            .unwrap();
        let lib = SegmentLibrary::in_memory(items).unwrap();
        lib.write_manifest(dir.path()).unwrap();
        let back = SegmentLibrary::load(dir.path()).unwrap();
        assert_eq!(back.segments(), lib.segments());
        assert_eq!(back.fingerprint(), lib.fingerprint());
        assert_eq!(back.audio("a").unwrap().samples(), lib.audio("a").unwrap().samples());

        std::fs::remove_file(dir.path().join("segments/a.wav")).unwrap();
        assert!(SegmentLibrary::load(dir.path()).is_err());
    }
}
