//! Declarative scenes, spec-level edits, and deterministic rendering.

mod edit;
mod generate;
mod render;
mod sample;
mod spec;

use thiserror::Error;

use crate::audio::AudioError;
use crate::curation::CurationError;
use crate::instruct::TemplateError;

pub use edit::{apply_edit, EditMetadata, EditOp, Selector, SPEED_EDIT_MAX, SPEED_EDIT_MIN, SPEED_EDIT_MIN_CHANGE};
pub use generate::{
    child_seed, generate_triplet, generate_triplets, plan, sample_edit, scale_task_mix,
    slots_from_metadata, triplet_id, EditTriplet, GenerationConfig, SceneSummary, TaskMix,
    TripletMetadata, REFERENCE_TASK_RATIOS,
};
pub use render::{render, render_pair};
pub use sample::{sample_spec, SceneConfig, SceneConstraints};
pub use spec::{
    effective_len, EventPlacement, Role, SoundscapeSpec, DEFAULT_REFERENCE_DB,
    DEFAULT_SCENE_DURATION_S,
};

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("segment '{0}' not in library")]
    MissingSegment(String),
    #[error("segment library: {0}")]
    Library(#[source] CurationError),
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("invalid edit: {0}")]
    InvalidEdit(String),
    #[error("selector: {0}")]
    Selector(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{scene_id}: gave up after {attempts} attempts; last failure: {last}")]
    GenerationFailed {
        scene_id: String,
        attempts: usize,
        last: String,
    },
}

impl From<CurationError> for ComposeError {
    fn from(e: CurationError) -> Self {
        match e {
            CurationError::UnknownSegment(id) => ComposeError::MissingSegment(id),
            CurationError::Audio(a) => ComposeError::Audio(a),
            other => ComposeError::Library(other),
        }
    }
}
