//! The embedding work order: every `(text, mode)` key a set of evaluations
//! will look up.

use std::collections::HashSet;

use super::ltp::{LtpMethod, LtpSample};
use super::next::{NextSet, NextVariant};
use super::stp::StpSample;
use crate::embedstore::EmbeddingKey;

/// Built evaluation samples plus the methods they will be run with.
#[derive(Debug, Clone, Default)]
pub struct EvalPlan {
    pub speaker_mode: bool,
    pub stp: Vec<StpSample>,
    pub ltp: Vec<LtpSample>,
    pub ltp_methods: Vec<LtpMethod>,
    pub next: Vec<NextSet>,
    pub next_variants: Vec<NextVariant>,
}

impl EvalPlan {
    pub fn is_empty(&self) -> bool {
        self.stp.is_empty()
            && (self.ltp.is_empty() || self.ltp_methods.is_empty())
            && (self.next.is_empty() || self.next_variants.is_empty())
    }
}

/// Deduplicated keys in first-seen order.
pub fn emit_embed_requests(plan: &EvalPlan) -> Vec<EmbeddingKey> {
    let mut all = Vec::new();
    for s in &plan.stp {
        s.required_keys(plan.speaker_mode, &mut all);
    }
    for &m in &plan.ltp_methods {
        for s in &plan.ltp {
            s.required_keys(m, plan.speaker_mode, &mut all);
        }
    }
    for &v in &plan.next_variants {
        for set in &plan.next {
            set.required_keys(v, plan.speaker_mode, &mut all);
        }
    }
    let mut seen = HashSet::with_capacity(all.len());
    all.retain(|k| seen.insert(k.clone()));
    all
}
