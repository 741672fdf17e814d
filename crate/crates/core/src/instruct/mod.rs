//! Template-driven instruction text with typed parameter slots.

mod bank;
mod slots;
mod template;

use thiserror::Error;

use crate::task::{Subtype, Task};

pub use bank::{Instruction, Template, TemplateBank, TemplateEntry};
pub use slots::{LoudnessWord, SlotName, SlotValue, SlotValues, SpeedWord};
pub use template::{fill, parse_template, Pattern};

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("empty template pattern")]
    EmptyPattern,
    #[error("unbalanced brace at byte {position}")]
    UnbalancedBrace { position: usize },
    #[error("empty placeholder at byte {position}")]
    EmptyPlaceholder { position: usize },
    #[error("invalid placeholder identifier '{0}'")]
    InvalidIdentifier(String),
    #[error("unknown slot '{0}'")]
    UnknownSlot(String),
    #[error("missing value for slot '{0}'")]
    MissingSlot(SlotName),
    #[error("slot '{slot}' expects {expected}, got {found}")]
    TypeMismatch {
        slot: SlotName,
        expected: &'static str,
        found: &'static str,
    },
    #[error("no template for task {task}, subtype {subtype}")]
    EmptyBank { task: Task, subtype: Subtype },
    #[error("subtype {subtype} does not belong to task {task}")]
    SubtypeMismatch { task: Task, subtype: Subtype },
    #[error("duplicate template id '{0}'")]
    DuplicateId(String),
    #[error("unknown template id '{0}'")]
    UnknownTemplate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
