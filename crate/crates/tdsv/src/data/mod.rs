//! Domain types and file formats shared by the whole pipeline.
//!
//! All stores are immutable after load and safe to share read-only across
//! worker threads.

mod formats;

pub use formats::{
    detect_embedding_format, read_embeddings, read_embeddings_from, read_models, read_models_from,
    read_posteriors, read_posteriors_from, read_scores, read_scores_from, read_speaker_map,
    read_speaker_map_from, read_trials, read_trials_from, write_embeddings, write_embeddings_to,
    write_models, write_models_to, write_posteriors, write_posteriors_to, write_scores,
    write_scores_to, write_speaker_map, write_speaker_map_to, write_trials, write_trials_to,
    EmbeddingFormat, EMBEDDING_MAGIC,
};

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use thiserror::Error;

/// Number of fixed phrases; valid phrase ids are `0..PHRASE_COUNT`.
pub const PHRASE_COUNT: usize = 10;
/// Posterior vectors carry the ten phrase classes plus one free-text class.
pub const POSTERIOR_CLASSES: usize = 11;
/// Index of the free-text ("none of the above") class in a posterior.
pub const FREE_TEXT_CLASS: usize = 10;
/// Tolerance on the probability mass of a posterior (upstream softmax is f32).
pub const POSTERIOR_SUM_TOLERANCE: f64 = 1e-4;

/// Errors raised when mutating an in-memory [`EmbeddingStore`].
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("empty embedding id")]
    EmptyId,
    #[error("duplicate id {id:?}")]
    DuplicateId { id: String },
    #[error("dimension mismatch: store dim {expected}, vector for {id:?} has dim {found}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("zero-dimensional vector for {id:?}")]
    ZeroDim { id: String },
    #[error("non-finite component at index {index} of {id:?}")]
    NonFinite { id: String, index: usize },
}

/// Errors raised by the file readers and writers.
///
/// Every malformed input maps to a distinct kind naming the offending
/// record, line or byte offset.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing header")]
    MissingHeader { path: PathBuf },
    #[error("{path}: bad magic {found:?}, expected {expected:?}")]
    BadMagic {
        path: PathBuf,
        found: Vec<u8>,
        expected: &'static [u8],
    },
    #[error("{path}: truncated while reading {what} for record {record} at byte {offset}")]
    Truncated {
        path: PathBuf,
        record: usize,
        offset: u64,
        what: &'static str,
    },
    #[error("{path}: header declares dim 0 with {count} records")]
    ZeroDimHeader { path: PathBuf, count: u64 },
    #[error("{path}: record {record}: invalid utf-8 id")]
    InvalidId { path: PathBuf, record: usize },
    #[error("{path}: record {record}: {source}")]
    Store {
        path: PathBuf,
        record: usize,
        #[source]
        source: StoreError,
    },
    #[error("{path}: line {line}: expected {expected} tab-separated columns, found {found}")]
    ColumnCount {
        path: PathBuf,
        line: usize,
        expected: &'static str,
        found: usize,
    },
    #[error("{path}: line {line}: empty {field} field")]
    EmptyField {
        path: PathBuf,
        line: usize,
        field: &'static str,
    },
    #[error("{path}: line {line}: unknown trial label {token:?}")]
    UnknownLabel {
        path: PathBuf,
        line: usize,
        token: String,
    },
    #[error("{path}: line {line}: cannot parse {token:?} as {what}")]
    InvalidNumber {
        path: PathBuf,
        line: usize,
        token: String,
        what: &'static str,
    },
    #[error("{path}: line {line}: phrase id {found} outside 0..={max}")]
    PhraseRange {
        path: PathBuf,
        line: usize,
        found: i64,
        max: usize,
    },
    #[error(
        "{path}: line {line}: strict enrollment requires exactly 3 utterances, found {found}"
    )]
    EnrollmentCount {
        path: PathBuf,
        line: usize,
        found: usize,
    },
    #[error("{path}: line {line} ({id:?}): expected {expected} probabilities, found {found}")]
    ProbCount {
        path: PathBuf,
        line: usize,
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("{path}: line {line} ({id:?}): negative probability at class {index}")]
    NegativeProb {
        path: PathBuf,
        line: usize,
        id: String,
        index: usize,
    },
    #[error(
        "{path}: line {line} ({id:?}): probabilities sum to {sum}, expected 1 within {tolerance}"
    )]
    ProbSum {
        path: PathBuf,
        line: usize,
        id: String,
        sum: f64,
        tolerance: f64,
    },
    #[error("{path}: line {line}: non-finite score")]
    NonFiniteScore { path: PathBuf, line: usize },
    #[error("{path}: line {line}: duplicate entry for {id:?}")]
    DuplicateLine {
        path: PathBuf,
        line: usize,
        id: String,
    },
}

/// One of the four trial categories.
///
/// `Iw` is representable, but evaluation sets may contain none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrialLabel {
    /// Target speaker, correct phrase.
    Tc,
    /// Target speaker, wrong phrase.
    Tw,
    /// Imposter speaker, correct phrase.
    Ic,
    /// Imposter speaker, wrong phrase.
    Iw,
}

impl TrialLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialLabel::Tc => "TC",
            TrialLabel::Tw => "TW",
            TrialLabel::Ic => "IC",
            TrialLabel::Iw => "IW",
        }
    }

    pub fn parse(token: &str) -> Option<TrialLabel> {
        match token {
            "TC" => Some(TrialLabel::Tc),
            "TW" => Some(TrialLabel::Tw),
            "IC" => Some(TrialLabel::Ic),
            "IW" => Some(TrialLabel::Iw),
            _ => None,
        }
    }
}

impl fmt::Display for TrialLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One verification trial: a claimed model and a test utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub model_id: String,
    pub test_utt_id: String,
    pub label: Option<TrialLabel>,
}

/// An enrolled model: identity, enrolled phrase and enrollment utterances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDefinition {
    pub model_id: String,
    pub phrase_id: usize,
    pub enrollment_utts: Vec<String>,
}

/// 11-class phrase posterior for one utterance (ten phrases + free text).
#[derive(Debug, Clone, PartialEq)]
pub struct PhrasePosterior {
    pub utt_id: String,
    pub probs: Vec<f64>,
}

/// One scored trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub model_id: String,
    pub test_utt_id: String,
    pub score: f64,
}

impl ScoreRecord {
    pub fn new(model_id: impl Into<String>, test_utt_id: impl Into<String>, score: f64) -> Self {
        ScoreRecord {
            model_id: model_id.into(),
            test_utt_id: test_utt_id.into(),
            score,
        }
    }
}

/// Enrollment-count policy. `Strict` requires exactly three utterances per
/// model; `Relaxed` admits any non-empty list for synthetic experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnrollmentPolicy {
    #[default]
    Strict,
    Relaxed,
}

impl EnrollmentPolicy {
    pub fn check(self, count: usize) -> bool {
        match self {
            EnrollmentPolicy::Strict => count == 3,
            EnrollmentPolicy::Relaxed => count >= 1,
        }
    }
}

/// Immutable map from utterance/speaker/model ids to fixed-dimension f32
/// vectors. Insertion order is preserved so write/read round-trips are
/// byte-identical.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    vecs: Vec<Vec<f32>>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new() -> Self {
        EmbeddingStore::default()
    }

    /// Vector dimensionality; 0 while the store is empty.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Inserts a record, fixing the store dimension on first insert.
    pub fn insert(&mut self, id: impl Into<String>, values: Vec<f32>) -> Result<(), StoreError> {
        let id = id.into();
        if id.is_empty() {
            return Err(StoreError::EmptyId);
        }
        if values.is_empty() {
            return Err(StoreError::ZeroDim { id });
        }
        if self.index.contains_key(&id) {
            return Err(StoreError::DuplicateId { id });
        }
        if self.dim == 0 {
            self.dim = values.len();
        } else if values.len() != self.dim {
            return Err(StoreError::DimensionMismatch {
                id,
                expected: self.dim,
                found: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(StoreError::NonFinite { id, index });
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vecs.push(values);
        Ok(())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.vecs[i].as_slice())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.ids.iter().map(String::as_str)
    }

    /// Records in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .zip(self.vecs.iter())
            .map(|(id, v)| (id.as_str(), v.as_slice()))
    }
}
