//! Evaluation protocols: short-term planning (STP), long-term planning
//! (LTP), next-utterance selection, the BM25 baseline and encoding-cost
//! accounting.

pub mod bm25;
pub mod candidates;
pub mod cost;
pub mod ltp;
pub mod next;
pub mod requests;
pub mod stp;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvedspace::ScoreError;
use crate::embedstore::StoreError;

pub use bm25::{bm25_rank, Bm25Params};
pub use candidates::{load_candidates, parse_candidates, CandidateIndex};
pub use cost::{encoding_cost_report, EncodingCost};
pub use ltp::{build_ltp_samples, eval_ltp, LtpEligibility, LtpMethod, LtpReport, LtpSample};
pub use next::{build_next_samples, eval_next, eval_next_bm25, NextCell, NextSet, NextVariant};
pub use requests::{emit_embed_requests, EvalPlan};
pub use stp::{build_stp_samples, eval_stp, StpReport, StpSample};

/// Recorded in every report so downstream tooling can tell panel
/// arithmetic versions apart.
pub const PROTOCOL_VERSION: &str = "lstpe-1";

/// Hits@K cut-offs for STP reports.
pub const STP_HITS_AT: [usize; 4] = [5, 10, 25, 50];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("candidate file not found: {0}")]
    CandidateFileMissing(PathBuf),
    #[error("candidate file line {line}: {reason}")]
    Candidates { line: usize, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EvalError {
    pub fn is_missing_embedding(&self) -> bool {
        matches!(self, EvalError::Store(StoreError::MissingEmbedding(_)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Odd,
    Even,
    All,
}

impl Parity {
    pub fn of(distance: usize) -> Self {
        if distance.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Odd => "odd",
            Parity::Even => "even",
            Parity::All => "all",
        })
    }
}

/// Hits@K ratios and mean rank over a set of 1-based ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub n: usize,
    pub hits_at: BTreeMap<usize, f64>,
    pub average_rank: f64,
    pub parity: Parity,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub breakdown: BTreeMap<String, RankingReport>,
}

impl RankingReport {
    /// An empty rank list yields `n = 0` with all ratios and the average at 0.
    pub fn from_ranks(ranks: &[usize], ks: &[usize], parity: Parity) -> Self {
        let n = ranks.len();
        let ratio = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
        let hits_at = ks
            .iter()
            .map(|&k| (k, ratio(ranks.iter().filter(|&&r| r <= k).count())))
            .collect();
        let average_rank = if n == 0 {
            0.0
        } else {
            ranks.iter().sum::<usize>() as f64 / n as f64
        };
        RankingReport {
            n,
            hits_at,
            average_rank,
            parity,
            breakdown: BTreeMap::new(),
        }
    }
}

/// 1-based rank of `target` in a list sorted best-first.
pub(crate) fn position_of<T, F: Fn(&T) -> bool>(ranked: &[T], is_target: F) -> usize {
    ranked
        .iter()
        .position(is_target)
        .map(|p| p + 1)
        .expect("target is part of the ranked list")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_arithmetic() {
        let r = RankingReport::from_ranks(&[1, 3, 7, 60], &STP_HITS_AT, Parity::All);
        assert_eq!(r.n, 4);
        assert_eq!(r.hits_at[&5], 0.5);
        assert_eq!(r.hits_at[&10], 0.75);
        assert_eq!(r.hits_at[&50], 0.75);
        assert_eq!(r.average_rank, 71.0 / 4.0);
        let json = serde_json::to_string(&r).unwrap();
        let back: RankingReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn empty_report() {
        let r = RankingReport::from_ranks(&[], &[1, 2], Parity::Odd);
        assert_eq!(r.n, 0);
        assert_eq!(r.average_rank, 0.0);
        assert_eq!(r.hits_at[&1], 0.0);
    }
}
