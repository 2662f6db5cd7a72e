//! Memory agent: step history, experience bank, feature encoding and retrieval.

mod bank;
mod feature;
mod history;

use thiserror::Error;

pub use bank::{
    Cause, CauseCategory, Correction, ExperienceBank, ExperienceContext, ExperienceEntry,
    ReflectiveTuple, Scored, BANK_VERSION,
};
pub use feature::{cosine, encode, encode_all, tokenize, FeatureVector};
pub use history::{
    History, HistoryRecord, MapRecord, ObservationDigest, ReflectFlag, ReflectKind, ReflectStage,
    ReflectionEvent, RetrievalRecord, SalientPoint, scene_words, view_word,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MemoryError {
    #[error("history record out of order: expected t={expected}, got t={got}")]
    OutOfOrder { expected: u32, got: u32 },
    #[error("experience bank is empty")]
    EmptyBank,
    #[error("top_k must be at least 1")]
    InvalidTopK,
    #[error("corrupt experience bank: {0}")]
    CorruptBank(String),
    #[error("invalid experience entry: {0}")]
    InvalidEntry(String),
    #[error("io error: {0}")]
    Io(String),
}
