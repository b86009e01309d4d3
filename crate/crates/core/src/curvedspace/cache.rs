use std::collections::HashSet;
use std::sync::Arc;

use super::{dot, rank_order, ScoreError};

#[derive(Debug)]
struct Candidates {
    ids: Vec<String>,
    dim: usize,
    /// Row-major `[AFTER]` vectors.
    data: Vec<f32>,
}

/// Running entailment strength of a fixed candidate set against a growing
/// history.
///
/// Each push costs one dot product per candidate; the previously accumulated
/// scores are reused, so a new turn never re-scores the older history.
/// Pushes take `&mut self`, so readers can never see a half-applied push.
#[derive(Debug, Clone)]
pub struct ContextCache {
    candidates: Arc<Candidates>,
    history: Vec<Vec<f32>>,
    cum_scores: Vec<f64>,
}

impl ContextCache {
    /// Cache over `candidates` (`[AFTER]` vectors) with an empty history.
    pub fn new<S: AsRef<str>, V: AsRef<[f32]>>(candidates: &[(S, V)]) -> Result<Self, ScoreError> {
        let dim = candidates.first().map_or(0, |(_, v)| v.as_ref().len());
        let mut seen = HashSet::with_capacity(candidates.len());
        let mut ids = Vec::with_capacity(candidates.len());
        let mut data = Vec::with_capacity(candidates.len() * dim);
        for (id, v) in candidates {
            let (id, v) = (id.as_ref(), v.as_ref());
            if !seen.insert(id) {
                return Err(ScoreError::DuplicateCandidate(id.to_string()));
            }
            if v.len() != dim {
                return Err(ScoreError::DimMismatch {
                    left: dim,
                    right: v.len(),
                });
            }
            ids.push(id.to_string());
            data.extend_from_slice(v);
        }
        let n = ids.len();
        Ok(ContextCache {
            candidates: Arc::new(Candidates { ids, dim, data }),
            history: Vec::new(),
            cum_scores: vec![0.0; n],
        })
    }

    /// A cache over the same candidates with an empty history. The candidate
    /// matrix is shared, not copied.
    pub fn fresh(&self) -> Self {
        ContextCache {
            candidates: Arc::clone(&self.candidates),
            history: Vec::new(),
            cum_scores: vec![0.0; self.candidates.ids.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.ids.is_empty()
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn history(&self) -> &[Vec<f32>] {
        &self.history
    }

    pub fn ids(&self) -> &[String] {
        &self.candidates.ids
    }

    pub fn candidate_vector(&self, i: usize) -> &[f32] {
        let d = self.candidates.dim;
        &self.candidates.data[i * d..(i + 1) * d]
    }

    /// Accumulated score per candidate, in candidate order.
    pub fn scores(&self) -> &[f64] {
        &self.cum_scores
    }

    /// Add one `[BEFORE]` history vector.
    pub fn push(&mut self, utterance_before: &[f32]) -> Result<(), ScoreError> {
        let dim = self.candidates.dim;
        if !self.is_empty() && utterance_before.len() != dim {
            return Err(ScoreError::DimMismatch {
                left: dim,
                right: utterance_before.len(),
            });
        }
        if dim > 0 {
            for (score, row) in self
                .cum_scores
                .iter_mut()
                .zip(self.candidates.data.chunks_exact(dim))
            {
                *score += dot(utterance_before, row);
            }
        }
        self.history.push(utterance_before.to_vec());
        Ok(())
    }

    /// Top `k` candidates by accumulated score; id order on ties.
    pub fn top(&self, k: usize) -> Vec<(String, f64)> {
        let mut ranked: Vec<(String, f64)> = self
            .candidates
            .ids
            .iter()
            .cloned()
            .zip(self.cum_scores.iter().copied())
            .collect();
        ranked.sort_by(rank_order);
        ranked.truncate(k);
        ranked
    }

    /// 1-based rank of candidate `i` under [`top`](Self::top)'s ordering.
    pub fn rank_of(&self, i: usize) -> usize {
        let ids = &self.candidates.ids;
        let s = self.cum_scores[i];
        1 + self
            .cum_scores
            .iter()
            .zip(ids)
            .filter(|(&o, id)| o > s || (o == s && *id < &ids[i]))
            .count()
    }
}
