//! Short-term planning: rank the true next utterance among generated
//! candidates by closeness to a goal `g_d` turns ahead.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::candidates::CandidateIndex;
use super::{position_of, EvalError, Parity, RankingReport, PROTOCOL_VERSION, STP_HITS_AT};
use crate::corpus::{Corpus, Utterance};
use crate::curvedspace::stp_rank;
use crate::embedstore::{EmbeddingKey, EmbeddingStore, EncodingMode};
use crate::io::neutral_id;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StpSample {
    pub dialogue_id: String,
    pub history: Vec<Utterance>,
    pub true_utterance: Utterance,
    pub goal: Utterance,
    pub goal_distance: usize,
    /// Generated alternatives; never contains the true utterance's text.
    pub candidates: Vec<String>,
}

impl StpSample {
    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn cell(&self) -> String {
        format!("h_l={},g_d={}", self.history.len(), self.goal_distance)
    }

    /// Every store key [`stp_sample_rank`] looks up.
    pub fn required_keys(&self, speaker_mode: bool, out: &mut Vec<EmbeddingKey>) {
        let before = EncodingMode::before_at(self.goal_distance, speaker_mode);
        out.push(EmbeddingKey::new(self.goal.text.clone(), EncodingMode::AFTER));
        out.push(EmbeddingKey::new(self.true_utterance.text.clone(), before));
        out.extend(self.candidates.iter().map(|c| EmbeddingKey::new(c.clone(), before)));
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StpBuild {
    pub samples: Vec<StpSample>,
    /// Long-enough dialogues without a candidate set.
    pub skipped_no_candidates: usize,
    /// Candidates removed because they repeated the true utterance.
    pub removed_true_duplicates: usize,
}

/// Minimum dialogue length for an STP sample.
pub fn stp_min_len(h_l: usize, g_d: usize) -> usize {
    h_l + g_d + 1
}

pub fn build_stp_samples(
    c: &Corpus,
    h_l: usize,
    g_d: usize,
    candidates: &CandidateIndex,
) -> Result<StpBuild, EvalError> {
    if h_l < 1 || g_d < 1 {
        return Err(EvalError::InvalidConfig(format!(
            "STP needs h_l >= 1 and g_d >= 1, got h_l={h_l}, g_d={g_d}"
        )));
    }
    let mut out = StpBuild::default();
    for d in &c.dialogues {
        if d.len() < stp_min_len(h_l, g_d) {
            continue;
        }
        let Some(cands) = candidates.get(&d.id, h_l) else {
            out.skipped_no_candidates += 1;
            continue;
        };
        let true_utterance = d.turns[h_l].clone();
        let kept: Vec<String> = cands
            .iter()
            .filter(|t| **t != true_utterance.text)
            .cloned()
            .collect();
        out.removed_true_duplicates += cands.len() - kept.len();
        out.samples.push(StpSample {
            dialogue_id: d.id.clone(),
            history: d.turns[..h_l].to_vec(),
            true_utterance,
            goal: d.turns[h_l + g_d].clone(),
            goal_distance: g_d,
            candidates: kept,
        });
    }
    Ok(out)
}

/// 1-based rank of the true utterance among `true ∪ candidates`.
pub fn stp_sample_rank(
    sample: &StpSample,
    store: &EmbeddingStore,
    speaker_mode: bool,
) -> Result<usize, EvalError> {
    let before = EncodingMode::before_at(sample.goal_distance, speaker_mode);
    let goal = store.require(&sample.goal.text, EncodingMode::AFTER)?;
    let h_l = sample.history.len().to_string();
    let g_d = sample.goal_distance.to_string();
    let true_id = neutral_id(&[&sample.dialogue_id, &h_l, &g_d, "true"]);
    let mut items = Vec::with_capacity(sample.candidates.len() + 1);
    items.push((true_id.clone(), store.require(&sample.true_utterance.text, before)?));
    // Ids depend on text and occurrence, not position, so the rank of the
    // true utterance does not depend on candidate order.
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for text in &sample.candidates {
        let occurrence = seen.entry(text).or_default();
        let id = neutral_id(&[&sample.dialogue_id, &h_l, &g_d, text, &occurrence.to_string()]);
        *occurrence += 1;
        items.push((id, store.require(text, before)?));
    }
    let ranked = stp_rank(&items, goal)?;
    Ok(position_of(&ranked, |(id, _)| *id == true_id))
}

/// Ranks of every sample, in sample order.
pub fn stp_ranks(
    samples: &[StpSample],
    store: &EmbeddingStore,
    speaker_mode: bool,
) -> Result<Vec<usize>, EvalError> {
    samples
        .par_iter()
        .map(|s| stp_sample_rank(s, store, speaker_mode))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StpReport {
    pub protocol_version: String,
    pub speaker_mode: bool,
    /// Largest `1 + |candidates|` over the samples.
    pub pool_size: usize,
    /// Pooled over all samples; `breakdown` holds one entry per
    /// `(h_l, g_d)` cell.
    pub overall: RankingReport,
    /// Odd and even goal distances pooled separately, weighted by n.
    pub by_parity: BTreeMap<Parity, RankingReport>,
}

pub fn stp_report(samples: &[StpSample], ranks: &[usize], speaker_mode: bool) -> StpReport {
    let mut overall = RankingReport::from_ranks(ranks, &STP_HITS_AT, Parity::All);
    let mut cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let mut parity: BTreeMap<Parity, Vec<usize>> = BTreeMap::new();
    for (s, &r) in samples.iter().zip(ranks) {
        cells
            .entry((s.history.len(), s.goal_distance))
            .or_default()
            .push(r);
        parity.entry(Parity::of(s.goal_distance)).or_default().push(r);
    }
    for ((h_l, g_d), rs) in cells {
        overall.breakdown.insert(
            format!("h_l={h_l},g_d={g_d}"),
            RankingReport::from_ranks(&rs, &STP_HITS_AT, Parity::of(g_d)),
        );
    }
    StpReport {
        protocol_version: PROTOCOL_VERSION.to_string(),
        speaker_mode,
        pool_size: samples.iter().map(|s| s.candidates.len() + 1).max().unwrap_or(0),
        overall,
        by_parity: parity
            .into_iter()
            .map(|(p, rs)| (p, RankingReport::from_ranks(&rs, &STP_HITS_AT, p)))
            .collect(),
    }
}

pub fn eval_stp(
    samples: &[StpSample],
    store: &EmbeddingStore,
    speaker_mode: bool,
) -> Result<StpReport, EvalError> {
    let ranks = stp_ranks(samples, store, speaker_mode)?;
    Ok(stp_report(samples, &ranks, speaker_mode))
}
