//! Okapi BM25 baseline for next-utterance ranking.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::curvedspace::rank_order;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.5, b: 0.75 }
    }
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_lowercase)
}

/// Score every `(id, text)` pool document against the concatenated history.
/// Query terms are counted once each; idf is floored at 0.
pub fn bm25_rank<S: AsRef<str>>(
    history: &[S],
    pool: &[(&str, &str)],
    params: Bm25Params,
) -> Vec<(String, f64)> {
    let docs: Vec<HashMap<String, usize>> = pool
        .iter()
        .map(|(_, text)| {
            let mut tf = HashMap::new();
            for t in tokens(text) {
                *tf.entry(t).or_insert(0) += 1;
            }
            tf
        })
        .collect();
    let lengths: Vec<usize> = pool.iter().map(|(_, t)| tokens(t).count()).collect();
    let n = pool.len() as f64;
    let avgdl = if pool.is_empty() {
        0.0
    } else {
        lengths.iter().sum::<usize>() as f64 / n
    };
    let query: HashSet<String> = history.iter().flat_map(|h| tokens(h.as_ref()).collect::<Vec<_>>()).collect();
    let idf: Vec<(&String, f64)> = query
        .iter()
        .map(|q| {
            let df = docs.iter().filter(|d| d.contains_key(q)).count() as f64;
            (q, ((n - df + 0.5) / (df + 0.5)).ln().max(0.0))
        })
        .collect();
    let mut ranked: Vec<(String, f64)> = pool
        .iter()
        .zip(docs.iter().zip(&lengths))
        .map(|((id, _), (tf, &len))| {
            let norm = if avgdl > 0.0 { len as f64 / avgdl } else { 0.0 };
            let score = idf
                .iter()
                .map(|(q, w)| {
                    let f = *tf.get(*q).unwrap_or(&0) as f64;
                    w * f * (params.k1 + 1.0) / (f + params.k1 * (1.0 - params.b + params.b * norm))
                })
                .sum();
            (id.to_string(), score)
        })
        .collect();
    ranked.sort_by(rank_order);
    ranked
}
