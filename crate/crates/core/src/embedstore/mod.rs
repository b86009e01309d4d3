//! Encoder boundary and the immutable embedding store.
//!
//! Every vector is keyed by the raw utterance text and the [`EncodingMode`]
//! it was produced under. Downstream code never concatenates prefix tokens;
//! the prefix is a property of the mode and only the encoder sees it.

mod mock;
mod wire;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{mock_encode, MockEncoder};
pub use wire::{meta_path, parse_requests, read_store, render_requests, vec_path, write_store, ReadStats};

/// Vectors whose norm is further than this from 1 are re-normalized on read.
pub const NORM_TOLERANCE: f64 = 1e-5;
/// Vectors whose norm is further than this from 1 are rejected on read.
pub const NORM_REJECT: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("embedding dimension must be at least 2, got {0}")]
    DimTooSmall(usize),
    #[error("dimension mismatch: store has {expected}, vector has {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("duplicate key {0}")]
    DuplicateKey(EmbeddingKey),
    #[error("row {row}: vector norm {norm} is not unit")]
    NormError { row: usize, norm: f64 },
    #[error("format error: {0}")]
    Format(String),
    #[error("missing embedding for {0}")]
    MissingEmbedding(EmbeddingKey),
    #[error("encoder unavailable: {0}")]
    EncoderUnavailable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Before,
    After,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SpeakerToken {
    #[serde(rename = "none")]
    None,
    E,
    O,
}

impl SpeakerToken {
    /// `[E]` for even turn distances, `[O]` for odd ones.
    pub fn for_distance(distance: usize) -> Self {
        if distance.is_multiple_of(2) {
            SpeakerToken::E
        } else {
            SpeakerToken::O
        }
    }
}

/// How an utterance is presented to the encoder.
///
/// Only `[BEFORE]` utterances may carry a speaker token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EncodingMode {
    direction: Direction,
    speaker: SpeakerToken,
}

impl EncodingMode {
    pub const BEFORE: EncodingMode = EncodingMode {
        direction: Direction::Before,
        speaker: SpeakerToken::None,
    };
    pub const AFTER: EncodingMode = EncodingMode {
        direction: Direction::After,
        speaker: SpeakerToken::None,
    };

    pub fn new(direction: Direction, speaker: SpeakerToken) -> Option<Self> {
        if direction == Direction::After && speaker != SpeakerToken::None {
            return None;
        }
        Some(EncodingMode { direction, speaker })
    }

    pub fn before(speaker: SpeakerToken) -> Self {
        EncodingMode {
            direction: Direction::Before,
            speaker,
        }
    }

    /// `[BEFORE]` mode for a history or candidate utterance that sits
    /// `distance` turns ahead of its `[AFTER]` target. Without speaker
    /// tokens this is plain `[BEFORE]`.
    pub fn before_at(distance: usize, speaker_mode: bool) -> Self {
        if speaker_mode {
            Self::before(SpeakerToken::for_distance(distance))
        } else {
            Self::BEFORE
        }
    }

    pub fn direction(self) -> Direction {
        self.direction
    }

    pub fn speaker(self) -> SpeakerToken {
        self.speaker
    }

    /// Canonical prefix prepended to the text before encoding.
    pub fn prefix(self) -> &'static str {
        match (self.direction, self.speaker) {
            (Direction::Before, SpeakerToken::None) => "[BEFORE] ",
            (Direction::Before, SpeakerToken::E) => "[E] [BEFORE] ",
            (Direction::Before, SpeakerToken::O) => "[O] [BEFORE] ",
            (Direction::After, _) => "[AFTER] ",
        }
    }

    pub fn apply(self, text: &str) -> String {
        format!("{}{}", self.prefix(), text)
    }
}

impl fmt::Display for EncodingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix().trim_end())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EmbeddingKey {
    pub text: String,
    pub mode: EncodingMode,
}

impl EmbeddingKey {
    pub fn new(text: impl Into<String>, mode: EncodingMode) -> Self {
        EmbeddingKey {
            text: text.into(),
            mode,
        }
    }
}

impl fmt::Display for EmbeddingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:?}", self.mode, self.text)
    }
}

/// Anything that can turn text into a unit vector.
///
/// Implementations must be deterministic for a fixed `(text, mode)`.
pub trait Encoder: Send + Sync {
    fn encoder_id(&self) -> String;
    fn dim(&self) -> usize;
    fn encode(&self, text: &str, mode: EncodingMode) -> Result<Vec<f32>, StoreError>;
}

pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Immutable collection of unit vectors keyed by `(text, mode)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    encoder_id: String,
    created: Option<String>,
    keys: Vec<EmbeddingKey>,
    data: Vec<f32>,
    index: HashMap<EncodingMode, HashMap<String, usize>>,
}

impl EmbeddingStore {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    pub fn created(&self) -> Option<&str> {
        self.created.as_deref()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[EmbeddingKey] {
        &self.keys
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn get(&self, text: &str, mode: EncodingMode) -> Option<&[f32]> {
        let row = *self.index.get(&mode)?.get(text)?;
        Some(self.row(row))
    }

    /// Like [`get`](Self::get) but reports the missing key.
    pub fn require(&self, text: &str, mode: EncodingMode) -> Result<&[f32], StoreError> {
        self.get(text, mode)
            .ok_or_else(|| StoreError::MissingEmbedding(EmbeddingKey::new(text, mode)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EmbeddingKey, &[f32])> {
        self.keys
            .iter()
            .enumerate()
            .map(move |(row, key)| (key, self.row(row)))
    }

    /// Encode every request with `encoder` and collect the results.
    pub fn encode_all<'a>(
        encoder: &dyn Encoder,
        requests: impl IntoIterator<Item = &'a EmbeddingKey>,
    ) -> Result<EmbeddingStore, StoreError> {
        let mut builder = StoreBuilder::new(encoder.dim(), encoder.encoder_id());
        for key in requests {
            if builder.contains(&key.text, key.mode) {
                continue;
            }
            let v = encoder.encode(&key.text, key.mode)?;
            builder.push(key.clone(), v)?;
        }
        Ok(builder.build())
    }
}

/// Accumulates records and rejects duplicates and malformed vectors.
#[derive(Debug)]
pub struct StoreBuilder {
    dim: usize,
    encoder_id: String,
    created: Option<String>,
    keys: Vec<EmbeddingKey>,
    data: Vec<f32>,
    index: HashMap<EncodingMode, HashMap<String, usize>>,
}

impl StoreBuilder {
    pub fn new(dim: usize, encoder_id: impl Into<String>) -> Self {
        StoreBuilder {
            dim,
            encoder_id: encoder_id.into(),
            created: None,
            keys: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn created(mut self, created: impl Into<String>) -> Self {
        self.created = Some(created.into());
        self
    }

    pub fn contains(&self, text: &str, mode: EncodingMode) -> bool {
        self.index.get(&mode).is_some_and(|m| m.contains_key(text))
    }

    /// Add a record whose vector must already be unit norm within
    /// [`NORM_TOLERANCE`].
    pub fn push(&mut self, key: EmbeddingKey, vector: Vec<f32>) -> Result<(), StoreError> {
        if vector.len() != self.dim {
            return Err(StoreError::DimMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        let norm = l2_norm(&vector);
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(StoreError::NormError {
                row: self.keys.len(),
                norm,
            });
        }
        self.push_unchecked(key, &vector)
    }

    pub(crate) fn push_unchecked(&mut self, key: EmbeddingKey, vector: &[f32]) -> Result<(), StoreError> {
        let row = self.keys.len();
        let slot = self.index.entry(key.mode).or_default();
        if slot.contains_key(&key.text) {
            return Err(StoreError::DuplicateKey(key));
        }
        slot.insert(key.text.clone(), row);
        self.keys.push(key);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn build(self) -> EmbeddingStore {
        EmbeddingStore {
            dim: self.dim,
            encoder_id: self.encoder_id,
            created: self.created,
            keys: self.keys,
            data: self.data,
            index: self.index,
        }
    }
}

/// Serves lookups from an existing store, e.g. one written by an external
/// encoder job.
pub struct StoreEncoder {
    store: EmbeddingStore,
}

impl StoreEncoder {
    pub fn new(store: EmbeddingStore) -> Self {
        StoreEncoder { store }
    }
}

impl Encoder for StoreEncoder {
    fn encoder_id(&self) -> String {
        self.store.encoder_id.clone()
    }

    fn dim(&self) -> usize {
        self.store.dim
    }

    fn encode(&self, text: &str, mode: EncodingMode) -> Result<Vec<f32>, StoreError> {
        self.store.require(text, mode).map(<[f32]>::to_vec)
    }
}
