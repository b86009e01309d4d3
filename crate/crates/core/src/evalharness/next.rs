//! Next-utterance selection: rank the true next turn among every
//! dialogue's turn at the same position.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bm25::{bm25_rank, Bm25Params};
use super::{position_of, EvalError, PROTOCOL_VERSION};
use crate::corpus::{Corpus, Utterance};
use crate::curvedspace::{entailment_strength, ContextCache};
use crate::embedstore::{EmbeddingKey, EmbeddingStore, EncodingMode};
use crate::io::neutral_id;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextSample {
    pub dialogue_id: String,
    pub history: Vec<Utterance>,
    pub true_next: Utterance,
    /// Position of `true_next` in the pool.
    pub pool_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: String,
    pub text: String,
}

/// All samples at one history length, sharing one candidate pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextSet {
    pub h_l: usize,
    pub samples: Vec<NextSample>,
    /// Turn `h_l` of every long-enough dialogue, one entry per dialogue.
    pub pool: Vec<PoolEntry>,
}

pub fn build_next_samples(c: &Corpus, h_l: usize) -> Result<NextSet, EvalError> {
    if h_l < 1 {
        return Err(EvalError::InvalidConfig("next-utterance needs h_l >= 1".into()));
    }
    let mut samples = Vec::new();
    let mut pool = Vec::new();
    for d in c.dialogues.iter().filter(|d| d.len() > h_l) {
        samples.push(NextSample {
            dialogue_id: d.id.clone(),
            history: d.turns[..h_l].to_vec(),
            true_next: d.turns[h_l].clone(),
            pool_index: pool.len(),
        });
        pool.push(PoolEntry {
            id: neutral_id(&[&d.id, &h_l.to_string()]),
            text: d.turns[h_l].text.clone(),
        });
    }
    Ok(NextSet { h_l, samples, pool })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NextVariant {
    /// Curving over the whole history.
    Full,
    /// Curving over the last history turn only.
    Last,
    /// Lexical baseline.
    Bm25,
}

impl NextVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            NextVariant::Full => "full",
            NextVariant::Last => "last",
            NextVariant::Bm25 => "bm25",
        }
    }
}

impl fmt::Display for NextVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NextVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(NextVariant::Full),
            "last" => Ok(NextVariant::Last),
            "bm25" => Ok(NextVariant::Bm25),
            other => Err(format!("unknown next-utterance variant {other:?} (full|last|bm25)")),
        }
    }
}

/// `(rank - 1) / (pool - 1)`; 0 for a single-entry pool.
pub fn normalized_rank(rank: usize, pool_size: usize) -> f64 {
    if pool_size <= 1 {
        0.0
    } else {
        (rank - 1) as f64 / (pool_size - 1) as f64
    }
}

fn history_slice(sample: &NextSample, variant: NextVariant) -> &[Utterance] {
    match variant {
        NextVariant::Last => &sample.history[sample.history.len() - 1..],
        _ => &sample.history,
    }
}

fn before_mode(u: &Utterance, h_l: usize, speaker_mode: bool) -> EncodingMode {
    EncodingMode::before_at(h_l - u.index, speaker_mode)
}

impl NextSet {
    /// Every store key `eval_next` looks up for `variant`.
    pub fn required_keys(&self, variant: NextVariant, speaker_mode: bool, out: &mut Vec<EmbeddingKey>) {
        if variant == NextVariant::Bm25 {
            return;
        }
        out.extend(
            self.pool
                .iter()
                .map(|p| EmbeddingKey::new(p.text.clone(), EncodingMode::AFTER)),
        );
        for s in &self.samples {
            out.extend(
                history_slice(s, variant)
                    .iter()
                    .map(|u| EmbeddingKey::new(u.text.clone(), before_mode(u, self.h_l, speaker_mode))),
            );
        }
    }

    fn pool_cache(&self, store: &EmbeddingStore) -> Result<ContextCache, EvalError> {
        let rows = self
            .pool
            .iter()
            .map(|p| Ok((p.id.as_str(), store.require(&p.text, EncodingMode::AFTER)?)))
            .collect::<Result<Vec<_>, EvalError>>()?;
        Ok(ContextCache::new(&rows)?)
    }
}

/// Mean normalized rank of one history length under one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextCell {
    pub h_l: usize,
    pub variant: NextVariant,
    pub n: usize,
    pub pool_size: usize,
    pub mean_normalized_rank: f64,
}

impl NextCell {
    fn from_ranks(set: &NextSet, variant: NextVariant, ranks: &[usize]) -> Self {
        let pool = set.pool.len();
        let mean = if ranks.is_empty() {
            0.0
        } else {
            ranks.iter().map(|&r| normalized_rank(r, pool)).sum::<f64>() / ranks.len() as f64
        };
        NextCell {
            h_l: set.h_l,
            variant,
            n: ranks.len(),
            pool_size: pool,
            mean_normalized_rank: mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextReport {
    pub protocol_version: String,
    pub speaker_mode: bool,
    pub cells: Vec<NextCell>,
}

impl NextReport {
    pub fn new(speaker_mode: bool, cells: Vec<NextCell>) -> Self {
        NextReport {
            protocol_version: PROTOCOL_VERSION.to_string(),
            speaker_mode,
            cells,
        }
    }
}

/// 1-based ranks through the incremental cache: the history is pushed turn
/// by turn onto a fresh cache over the shared pool matrix.
pub fn next_ranks(
    set: &NextSet,
    store: &EmbeddingStore,
    variant: NextVariant,
    speaker_mode: bool,
) -> Result<Vec<usize>, EvalError> {
    if variant == NextVariant::Bm25 {
        return Ok(bm25_next_ranks(set, Bm25Params::default()));
    }
    let base = set.pool_cache(store)?;
    set.samples
        .par_iter()
        .map(|s| {
            let mut cache = base.fresh();
            for u in history_slice(s, variant) {
                cache.push(store.require(&u.text, before_mode(u, set.h_l, speaker_mode))?)?;
            }
            Ok(cache.rank_of(s.pool_index))
        })
        .collect()
}

/// Same ranks recomputed from scratch for every sample.
pub fn next_ranks_batch(
    set: &NextSet,
    store: &EmbeddingStore,
    variant: NextVariant,
    speaker_mode: bool,
) -> Result<Vec<usize>, EvalError> {
    let pool = set
        .pool
        .iter()
        .map(|p| Ok((p.id.clone(), store.require(&p.text, EncodingMode::AFTER)?)))
        .collect::<Result<Vec<_>, EvalError>>()?;
    set.samples
        .iter()
        .map(|s| {
            let history = history_slice(s, variant)
                .iter()
                .map(|u| store.require(&u.text, before_mode(u, set.h_l, speaker_mode)))
                .collect::<Result<Vec<_>, _>>()?;
            let mut scored = pool
                .iter()
                .map(|(id, v)| Ok((id.clone(), entailment_strength(&history, v)?)))
                .collect::<Result<Vec<_>, EvalError>>()?;
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let id = &set.pool[s.pool_index].id;
            Ok(position_of(&scored, |(x, _)| x == id))
        })
        .collect()
}

fn bm25_next_ranks(set: &NextSet, params: Bm25Params) -> Vec<usize> {
    let pool: Vec<(&str, &str)> = set
        .pool
        .iter()
        .map(|p| (p.id.as_str(), p.text.as_str()))
        .collect();
    set.samples
        .par_iter()
        .map(|s| {
            let history: Vec<&str> = s.history.iter().map(|u| u.text.as_str()).collect();
            let ranked = bm25_rank(&history, &pool, params);
            let id = &set.pool[s.pool_index].id;
            position_of(&ranked, |(x, _)| x == id)
        })
        .collect()
}

pub fn eval_next(
    set: &NextSet,
    store: &EmbeddingStore,
    variant: NextVariant,
    speaker_mode: bool,
) -> Result<NextCell, EvalError> {
    let ranks = next_ranks(set, store, variant, speaker_mode)?;
    Ok(NextCell::from_ranks(set, variant, &ranks))
}

pub fn eval_next_bm25(set: &NextSet, params: Bm25Params) -> NextCell {
    NextCell::from_ranks(set, NextVariant::Bm25, &bm25_next_ranks(set, params))
}
