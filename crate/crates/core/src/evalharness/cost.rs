//! Encoding cost of next-utterance evaluation: a context encoder re-reads
//! the whole history for every sample, while relativistic embeddings encode
//! each utterance once and sum cached scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingCost {
    pub max_h_l: usize,
    /// Next-utterance samples per history length.
    pub samples_by_h_l: BTreeMap<usize, usize>,
    /// One context representation per sample.
    pub context_representations: usize,
    /// Utterances a context encoder reads: the sum of `h_l` over samples.
    pub utterances_encoded_context_mode: usize,
    /// Utterances a relativistic encoder reads: one new turn per sample.
    pub utterances_encoded_relativistic: usize,
    pub factor: f64,
}

pub fn encoding_cost_report(c: &Corpus, max_h_l: usize) -> EncodingCost {
    let samples_by_h_l: BTreeMap<usize, usize> = (1..=max_h_l)
        .map(|h| (h, c.dialogues.iter().filter(|d| d.len() > h).count()))
        .collect();
    let samples: usize = samples_by_h_l.values().sum();
    let context: usize = samples_by_h_l.iter().map(|(h, n)| h * n).sum();
    EncodingCost {
        max_h_l,
        samples_by_h_l,
        context_representations: samples,
        utterances_encoded_context_mode: context,
        utterances_encoded_relativistic: samples,
        factor: if samples == 0 {
            0.0
        } else {
            context as f64 / samples as f64
        },
    }
}
