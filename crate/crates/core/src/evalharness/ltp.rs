//! Long-term planning: order three future goals, or pick the next one.
//!
//! A sample splits a dialogue into a history `d[:h_l]` and goals
//! `d[x], d[x + g_d], d[x + 2 g_d]` with `x = h_l + first_goal_in_distance`.
//!
//! Panel arithmetic for the ordering methods (IEC and IEC with curving):
//! all six permutations are scored; the partial-order panel ranks the true
//! order among itself plus the four partially ordered permutations
//! (Hits@1..4); the reverse panel is a pairwise true-vs-reverse comparison
//! (Hits@1); the average rank is the rank of the true order among all six.
//! Greedy curving ranks the true first goal among the three goals
//! (Hits@1, Hits@2, average rank).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalError, PROTOCOL_VERSION};
use crate::corpus::{Corpus, Utterance};
use crate::curvedspace::{
    rank_goals_by_curving, rank_orders_curving, rank_orders_iec, CurvingWeights, Goal, GoalSet,
    ScoredOrder,
};
use crate::embedstore::{EmbeddingKey, EmbeddingStore, EncodingMode};
use crate::io::neutral_id;

/// Which dialogues are long enough to yield a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LtpEligibility {
    /// `|turns| >= x + 3 g_d + 1`. Reproduces the published DailyDialog
    /// sample counts.
    #[default]
    Tables,
    /// `|turns| >= x + 2 g_d + 1`: just enough turns to hold the last goal.
    Strict,
}

impl LtpEligibility {
    pub fn min_len(self, h_l: usize, g_d: usize, first_goal_in_distance: usize) -> usize {
        let x = h_l + first_goal_in_distance;
        match self {
            LtpEligibility::Tables => x + 3 * g_d + 1,
            LtpEligibility::Strict => x + 2 * g_d + 1,
        }
    }
}

impl FromStr for LtpEligibility {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tables" => Ok(LtpEligibility::Tables),
            "strict" => Ok(LtpEligibility::Strict),
            other => Err(format!("unknown eligibility rule {other:?} (tables|strict)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtpSample {
    pub dialogue_id: String,
    pub history: Vec<Utterance>,
    /// In true chronological order.
    pub goals: [Utterance; 3],
    pub goal_distance: usize,
    pub first_goal_in_distance: usize,
}

impl LtpSample {
    /// Position of the first goal.
    pub fn x(&self) -> usize {
        self.history.len() + self.first_goal_in_distance
    }

    pub fn cell(&self) -> String {
        format!(
            "h_l={},g_d={},fgid={}",
            self.history.len(),
            self.goal_distance,
            self.first_goal_in_distance
        )
    }

    /// Turn positions the history is curved towards.
    fn curving_targets(&self, method: LtpMethod) -> Vec<usize> {
        let (x, g_d) = (self.x(), self.goal_distance);
        match method {
            LtpMethod::Iec => vec![],
            LtpMethod::IecCu => vec![x, x + g_d, x + 2 * g_d],
            LtpMethod::Gc => vec![x],
        }
    }

    /// Every store key [`ltp_sample_outcome`] looks up for `method`.
    pub fn required_keys(&self, method: LtpMethod, speaker_mode: bool, out: &mut Vec<EmbeddingKey>) {
        let chain_before = EncodingMode::before_at(self.goal_distance, speaker_mode);
        for g in &self.goals {
            out.push(EmbeddingKey::new(g.text.clone(), chain_before));
            out.push(EmbeddingKey::new(g.text.clone(), EncodingMode::AFTER));
        }
        for target in self.curving_targets(method) {
            out.extend(self.history.iter().map(|u| {
                EmbeddingKey::new(u.text.clone(), EncodingMode::before_at(target - u.index, speaker_mode))
            }));
        }
    }
}

pub fn build_ltp_samples(
    c: &Corpus,
    h_l: usize,
    g_d: usize,
    first_goal_in_distance: usize,
    eligibility: LtpEligibility,
) -> Result<Vec<LtpSample>, EvalError> {
    if g_d < 2 {
        return Err(EvalError::InvalidConfig(format!(
            "LTP needs a goal distance of at least 2, got {g_d}"
        )));
    }
    if h_l < 1 {
        return Err(EvalError::InvalidConfig("LTP needs h_l >= 1".into()));
    }
    let x = h_l + first_goal_in_distance;
    let min_len = eligibility.min_len(h_l, g_d, first_goal_in_distance);
    Ok(c.dialogues
        .iter()
        .filter(|d| d.len() >= min_len)
        .map(|d| LtpSample {
            dialogue_id: d.id.clone(),
            history: d.turns[..h_l].to_vec(),
            goals: [
                d.turns[x].clone(),
                d.turns[x + g_d].clone(),
                d.turns[x + 2 * g_d].clone(),
            ],
            goal_distance: g_d,
            first_goal_in_distance,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LtpMethod {
    /// Imaginary embedding chains.
    Iec,
    /// Chains plus history curving.
    IecCu,
    /// Greedy curving.
    Gc,
}

impl LtpMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            LtpMethod::Iec => "iec",
            LtpMethod::IecCu => "iec_cu",
            LtpMethod::Gc => "gc",
        }
    }

    /// Hits@K cut-offs reported for this method.
    pub fn hits_at(self) -> &'static [usize] {
        match self {
            LtpMethod::Gc => &[1, 2],
            _ => &[1, 2, 3, 4],
        }
    }
}

impl fmt::Display for LtpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LtpMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iec" => Ok(LtpMethod::Iec),
            "iec-cu" | "iec_cu" => Ok(LtpMethod::IecCu),
            "gc" => Ok(LtpMethod::Gc),
            other => Err(format!("unknown LTP method {other:?} (iec|iec-cu|gc)")),
        }
    }
}

/// Per-sample outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LtpOutcome {
    /// Rank among all six orders (ordering methods) or among the three
    /// goals (greedy curving).
    pub total_rank: usize,
    /// Rank among true + four partially ordered permutations.
    pub partial_rank: Option<usize>,
    /// True order scored above its reverse.
    pub beats_reverse: Option<bool>,
}

fn goal_ids(sample: &LtpSample) -> [String; 3] {
    sample
        .goals
        .each_ref()
        .map(|g| neutral_id(&[&sample.dialogue_id, &g.index.to_string()]))
}

fn history_vectors<'s>(
    sample: &LtpSample,
    store: &'s EmbeddingStore,
    target: usize,
    speaker_mode: bool,
) -> Result<Vec<&'s [f32]>, EvalError> {
    sample
        .history
        .iter()
        .map(|u| {
            let mode = EncodingMode::before_at(target - u.index, speaker_mode);
            Ok(store.require(&u.text, mode)?)
        })
        .collect()
}

/// Summarize an ordering ranked best-first against the true order.
pub fn order_outcome(ranked: &[ScoredOrder], true_order: &[String]) -> LtpOutcome {
    let reverse: Vec<String> = true_order.iter().rev().cloned().collect();
    let total = ranked
        .iter()
        .position(|o| o.order == true_order)
        .expect("true order is scored");
    let reverse_pos = ranked
        .iter()
        .position(|o| o.order == reverse)
        .expect("reverse order is scored");
    let above_true_partial = ranked[..total]
        .iter()
        .filter(|o| o.order != reverse)
        .count();
    LtpOutcome {
        total_rank: total + 1,
        partial_rank: Some(above_true_partial + 1),
        beats_reverse: Some(total < reverse_pos),
    }
}

pub fn ltp_sample_outcome(
    sample: &LtpSample,
    store: &EmbeddingStore,
    method: LtpMethod,
    speaker_mode: bool,
    weights: CurvingWeights,
) -> Result<LtpOutcome, EvalError> {
    let ids = goal_ids(sample);
    let chain_before = EncodingMode::before_at(sample.goal_distance, speaker_mode);
    let goals = GoalSet::new(
        sample
            .goals
            .iter()
            .zip(&ids)
            .map(|(g, id)| {
                Ok(Goal {
                    id: id.clone(),
                    text: g.text.clone(),
                    before: store.require(&g.text, chain_before)?.to_vec(),
                    after: store.require(&g.text, EncodingMode::AFTER)?.to_vec(),
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()?,
    )?;
    let x = sample.x();
    let g_d = sample.goal_distance;
    match method {
        LtpMethod::Iec => Ok(order_outcome(&rank_orders_iec(&goals, 3)?, &ids)),
        LtpMethod::IecCu => {
            let slots = [
                history_vectors(sample, store, x, speaker_mode)?,
                history_vectors(sample, store, x + g_d, speaker_mode)?,
                history_vectors(sample, store, x + 2 * g_d, speaker_mode)?,
            ];
            let ranked = rank_orders_curving(&goals, [&slots[0], &slots[1], &slots[2]], weights)?;
            Ok(order_outcome(&ranked, &ids))
        }
        LtpMethod::Gc => {
            let history = history_vectors(sample, store, x, speaker_mode)?;
            let ranked = rank_goals_by_curving(&goals, &history)?;
            Ok(LtpOutcome {
                total_rank: super::position_of(&ranked, |(id, _)| *id == ids[0]),
                partial_rank: None,
                beats_reverse: None,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtpSummary {
    pub n: usize,
    /// Partial-order panel for ordering methods, goal ranking for greedy
    /// curving.
    pub hits_at: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverse_hits_at_1: Option<f64>,
    pub average_rank: f64,
}

impl LtpSummary {
    pub fn from_outcomes(outcomes: &[LtpOutcome], method: LtpMethod) -> Self {
        let n = outcomes.len();
        let ratio = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        let panel_rank = |o: &LtpOutcome| o.partial_rank.unwrap_or(o.total_rank);
        let hits_at = method
            .hits_at()
            .iter()
            .map(|&k| (k, ratio(outcomes.iter().filter(|o| panel_rank(o) <= k).count())))
            .collect();
        let reverse_hits_at_1 = (method != LtpMethod::Gc)
            .then(|| ratio(outcomes.iter().filter(|o| o.beats_reverse == Some(true)).count()));
        let average_rank = if n == 0 {
            0.0
        } else {
            outcomes.iter().map(|o| o.total_rank).sum::<usize>() as f64 / n as f64
        };
        LtpSummary {
            n,
            hits_at,
            reverse_hits_at_1,
            average_rank,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtpReport {
    pub protocol_version: String,
    pub method: LtpMethod,
    pub speaker_mode: bool,
    pub overall: LtpSummary,
    pub breakdown: BTreeMap<String, LtpSummary>,
}

pub fn ltp_outcomes(
    samples: &[LtpSample],
    store: &EmbeddingStore,
    method: LtpMethod,
    speaker_mode: bool,
    weights: CurvingWeights,
) -> Result<Vec<LtpOutcome>, EvalError> {
    samples
        .par_iter()
        .map(|s| ltp_sample_outcome(s, store, method, speaker_mode, weights))
        .collect()
}

pub fn eval_ltp(
    samples: &[LtpSample],
    store: &EmbeddingStore,
    method: LtpMethod,
    speaker_mode: bool,
    weights: CurvingWeights,
) -> Result<LtpReport, EvalError> {
    let outcomes = ltp_outcomes(samples, store, method, speaker_mode, weights)?;
    let mut cells: BTreeMap<String, Vec<LtpOutcome>> = BTreeMap::new();
    for (s, o) in samples.iter().zip(&outcomes) {
        cells.entry(s.cell()).or_default().push(*o);
    }
    Ok(LtpReport {
        protocol_version: PROTOCOL_VERSION.to_string(),
        method,
        speaker_mode,
        overall: LtpSummary::from_outcomes(&outcomes, method),
        breakdown: cells
            .into_iter()
            .map(|(k, os)| (k, LtpSummary::from_outcomes(&os, method)))
            .collect(),
    })
}
