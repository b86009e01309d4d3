//! Curved contrastive training pairs.
//!
//! A window of length `l` slides over every utterance of a dialogue. For
//! each anchor `u[0]` and each offset `i` in `1..=l` still inside the
//! dialogue, four kinds of rows are produced:
//!
//! | row | sentence_a | sentence_b | score |
//! |-----|------------|------------|-------|
//! | positive | `[BEFORE] u[0]` | `[AFTER] u[i]` | `(l - i) / l` |
//! | swap | `[BEFORE] u[i]` | `[AFTER] u[0]` | 0 |
//! | random (even slot) | `[BEFORE] u[0]` | `[AFTER] u'` | 0 |
//! | random (odd slot) | `[BEFORE] u'` | `[AFTER] u[0]` | 0 |
//!
//! With speaker tokens the `[BEFORE]` side is additionally prefixed with
//! `[E]` (even `i`) or `[O]` (odd `i`), and each random slot picks one of the
//! four `{[E], [O]} x {u' as after, u' as before}` combinations uniformly,
//! paired with `u[i]`. The binary ablations replace every positive score
//! with 1; the adjacent variant keeps only `i = 1`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Dialogue};
use crate::embedstore::{EncodingMode, SpeakerToken};
use crate::io::{atomic_write, derive_seed};

pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_RANDOM_NEGATIVES: usize = 2;

#[derive(Debug, Error)]
pub enum PairGenError {
    #[error("random utterance pool is empty")]
    EmptyRandomPool,
    #[error("window length must be at least 1")]
    InvalidWindow,
    #[error("{op} requires mode {expected}, config has {got}")]
    WrongMode {
        op: &'static str,
        expected: &'static str,
        got: PairMode,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairMode {
    #[serde(rename = "curved")]
    Curved,
    #[serde(rename = "speaker")]
    CurvedSpeaker,
    /// `ab5`: curved window with binary labels.
    #[serde(rename = "ab5")]
    BinaryWindow,
    /// `ab2`: only directly adjacent pairs, binary labels.
    #[serde(rename = "ab2")]
    BinaryAdjacent,
}

impl PairMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PairMode::Curved => "curved",
            PairMode::CurvedSpeaker => "speaker",
            PairMode::BinaryWindow => "ab5",
            PairMode::BinaryAdjacent => "ab2",
        }
    }

    fn is_binary(self) -> bool {
        matches!(self, PairMode::BinaryWindow | PairMode::BinaryAdjacent)
    }
}

impl fmt::Display for PairMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "curved" => Ok(PairMode::Curved),
            "speaker" => Ok(PairMode::CurvedSpeaker),
            "ab5" => Ok(PairMode::BinaryWindow),
            "ab2" => Ok(PairMode::BinaryAdjacent),
            other => Err(format!("unknown pair mode {other:?} (curved|speaker|ab5|ab2)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairGenConfig {
    pub window: usize,
    pub mode: PairMode,
    pub seed: u64,
    pub random_negatives: usize,
    /// Drop exact duplicate rows (first occurrence wins).
    pub dedup: bool,
}

impl Default for PairGenConfig {
    fn default() -> Self {
        PairGenConfig {
            window: DEFAULT_WINDOW,
            mode: PairMode::Curved,
            seed: 0,
            random_negatives: DEFAULT_RANDOM_NEGATIVES,
            dedup: false,
        }
    }
}

impl PairGenConfig {
    /// Largest offset `i` a window may use.
    pub fn max_offset(&self) -> usize {
        match self.mode {
            PairMode::BinaryAdjacent => 1,
            _ => self.window,
        }
    }

    /// Target cosine of a positive pair at offset `i`.
    pub fn positive_score(&self, i: usize) -> f64 {
        if self.mode.is_binary() {
            1.0
        } else {
            (self.window - i) as f64 / self.window as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    Positive,
    SwapNegative,
    RandomNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub sentence_a: String,
    pub sentence_b: String,
    pub score: f64,
    pub kind: PairKind,
}

impl TrainingPair {
    fn new(sentence_a: String, sentence_b: String, score: f64, kind: PairKind) -> Self {
        TrainingPair {
            sentence_a,
            sentence_b,
            score,
            kind,
        }
    }
}

trait RandomSource {
    fn draw<'s>(&'s self, rng: &mut ChaCha20Rng) -> &'s str;
}

struct SlicePool<'a, S>(&'a [S]);

impl<S: AsRef<str>> RandomSource for SlicePool<'_, S> {
    fn draw<'s>(&'s self, rng: &mut ChaCha20Rng) -> &'s str {
        self.0[rng.random_range(0..self.0.len())].as_ref()
    }
}

/// Every utterance of a corpus, tagged with its dialogue.
struct CorpusPool<'a> {
    texts: Vec<(usize, &'a str)>,
}

struct ExcludingPool<'p, 'a> {
    pool: &'p CorpusPool<'a>,
    owner: usize,
}

impl RandomSource for ExcludingPool<'_, '_> {
    fn draw<'s>(&'s self, rng: &mut ChaCha20Rng) -> &'s str {
        loop {
            let (owner, text) = self.pool.texts[rng.random_range(0..self.pool.texts.len())];
            if owner != self.owner {
                return text;
            }
        }
    }
}

fn generate(
    d: &Dialogue,
    cfg: &PairGenConfig,
    pool: &dyn RandomSource,
) -> Vec<TrainingPair> {
    let speaker = cfg.mode == PairMode::CurvedSpeaker;
    let mut rng = ChaCha20Rng::from_seed(derive_seed(cfg.seed, &d.id));
    let n = d.len();
    let after = EncodingMode::AFTER;
    let mut out = Vec::new();
    for anchor in 0..n {
        for i in 1..=cfg.max_offset() {
            let target = anchor + i;
            if target >= n {
                break;
            }
            let before = if speaker {
                EncodingMode::before(SpeakerToken::for_distance(i))
            } else {
                EncodingMode::BEFORE
            };
            let (a, f) = (d.text(anchor), d.text(target));
            out.push(TrainingPair::new(
                before.apply(a),
                after.apply(f),
                cfg.positive_score(i),
                PairKind::Positive,
            ));
            out.push(TrainingPair::new(
                before.apply(f),
                after.apply(a),
                0.0,
                PairKind::SwapNegative,
            ));
            for slot in 0..cfg.random_negatives {
                let (sa, sb) = if speaker {
                    let combo = rng.random_range(0..4u8);
                    let r = pool.draw(&mut rng);
                    let token = if combo % 2 == 0 {
                        SpeakerToken::O
                    } else {
                        SpeakerToken::E
                    };
                    let tb = EncodingMode::before(token);
                    if combo < 2 {
                        (tb.apply(f), after.apply(r))
                    } else {
                        (tb.apply(r), after.apply(f))
                    }
                } else {
                    let r = pool.draw(&mut rng);
                    if slot % 2 == 0 {
                        (before.apply(a), after.apply(r))
                    } else {
                        (before.apply(r), after.apply(a))
                    }
                };
                out.push(TrainingPair::new(sa, sb, 0.0, PairKind::RandomNegative));
            }
        }
    }
    out
}

fn check(
    cfg: &PairGenConfig,
    pool_len: usize,
    op: &'static str,
    expected: &'static str,
    ok: bool,
) -> Result<(), PairGenError> {
    if !ok {
        return Err(PairGenError::WrongMode {
            op,
            expected,
            got: cfg.mode,
        });
    }
    if cfg.window == 0 {
        return Err(PairGenError::InvalidWindow);
    }
    if pool_len == 0 {
        return Err(PairGenError::EmptyRandomPool);
    }
    Ok(())
}

/// Curved pairs for one (already speaker-merged) dialogue.
pub fn curved_pairs<S: AsRef<str>>(
    d: &Dialogue,
    cfg: &PairGenConfig,
    random_pool: &[S],
) -> Result<Vec<TrainingPair>, PairGenError> {
    let ok = cfg.mode == PairMode::Curved;
    check(cfg, random_pool.len(), "curved_pairs", "curved", ok)?;
    Ok(generate(d, cfg, &SlicePool(random_pool)))
}

/// Curved pairs with `[E]`/`[O]` speaker tokens.
pub fn speaker_pairs<S: AsRef<str>>(
    d: &Dialogue,
    cfg: &PairGenConfig,
    random_pool: &[S],
) -> Result<Vec<TrainingPair>, PairGenError> {
    let ok = cfg.mode == PairMode::CurvedSpeaker;
    check(cfg, random_pool.len(), "speaker_pairs", "speaker", ok)?;
    Ok(generate(d, cfg, &SlicePool(random_pool)))
}

/// Binary-label ablation pairs (`ab5` or `ab2`).
pub fn binary_pairs<S: AsRef<str>>(
    d: &Dialogue,
    cfg: &PairGenConfig,
    random_pool: &[S],
) -> Result<Vec<TrainingPair>, PairGenError> {
    let ok = cfg.mode.is_binary();
    check(cfg, random_pool.len(), "binary_pairs", "ab5|ab2", ok)?;
    Ok(generate(d, cfg, &SlicePool(random_pool)))
}

/// Pairs for a whole corpus in dialogue order. The random pool of each
/// dialogue is every utterance of the other dialogues. Each dialogue seeds
/// its own generator from `(cfg.seed, dialogue.id)`, so the output does not
/// depend on scheduling.
pub fn corpus_pairs(c: &Corpus, cfg: &PairGenConfig) -> Result<Vec<TrainingPair>, PairGenError> {
    if cfg.window == 0 {
        return Err(PairGenError::InvalidWindow);
    }
    let pool = CorpusPool {
        texts: c
            .dialogues
            .iter()
            .enumerate()
            .flat_map(|(i, d)| d.turns.iter().map(move |u| (i, u.text.as_str())))
            .collect(),
    };
    let total = pool.texts.len();
    let per_dialogue: Vec<Vec<TrainingPair>> = c
        .dialogues
        .par_iter()
        .enumerate()
        .map(|(owner, d)| {
            if total == d.len() {
                return Err(PairGenError::EmptyRandomPool);
            }
            let source = ExcludingPool { pool: &pool, owner };
            Ok(generate(d, cfg, &source))
        })
        .collect::<Result<_, _>>()?;
    let mut pairs: Vec<TrainingPair> = per_dialogue.into_iter().flatten().collect();
    if cfg.dedup {
        dedup_pairs(&mut pairs);
    }
    Ok(pairs)
}

/// Remove exact duplicate rows, keeping the first occurrence.
pub fn dedup_pairs(pairs: &mut Vec<TrainingPair>) {
    let mut seen = HashSet::new();
    pairs.retain(|p| {
        seen.insert((
            p.sentence_a.clone(),
            p.sentence_b.clone(),
            p.score.to_bits(),
            p.kind,
        ))
    });
}

fn render(pairs: &[TrainingPair], meta: Option<&serde_json::Value>) -> String {
    let mut out = String::new();
    if let Some(meta) = meta {
        out.push_str(&serde_json::json!({ "_meta": meta }).to_string());
        out.push('\n');
    }
    for p in pairs {
        out.push_str(&serde_json::to_string(p).expect("pair serializes"));
        out.push('\n');
    }
    out
}

/// Write pairs as JSONL, one object per line. Returns the number of pairs.
pub fn export_pairs(pairs: &[TrainingPair], path: &Path) -> Result<usize, PairGenError> {
    atomic_write(path, render(pairs, None).as_bytes())?;
    Ok(pairs.len())
}

/// Like [`export_pairs`] with a leading `{"_meta": ...}` line.
pub fn export_pairs_with_meta(
    pairs: &[TrainingPair],
    path: &Path,
    meta: &serde_json::Value,
) -> Result<usize, PairGenError> {
    atomic_write(path, render(pairs, Some(meta)).as_bytes())?;
    Ok(pairs.len())
}

/// Parse a pairs file, skipping a `_meta` header if present.
pub fn parse_pairs(raw: &str) -> Result<Vec<TrainingPair>, PairGenError> {
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| PairGenError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
        if value.get("_meta").is_some() {
            continue;
        }
        out.push(
            serde_json::from_value(value).map_err(|e| PairGenError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(out)
}
