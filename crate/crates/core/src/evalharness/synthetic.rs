//! Synthetic fixtures: corpora with unique texts and a store whose
//! geometry is built to match the curved training targets exactly.
//!
//! For each dialogue of `n` turns a `2n x 2n` target Gram matrix is laid
//! out over its `[BEFORE]` rows `b_0..b_n` and `[AFTER]` rows `a_0..a_n`:
//! unit diagonal, `<b_i, a_j> = (l - d) / l` for `d = j - i` in `1..=l`
//! and `0` for every backward or out-of-window pair. `<b_i, a_i>`, and the
//! before-before and after-after blocks, are left free. A positive
//! semidefinite matrix matching the fixed entries is found by alternating
//! projections (clip eigenvalues, re-impose fixed entries), then factored
//! into row vectors. Each dialogue gets its own block of coordinates, so
//! cross-dialogue cosines are exactly 0.

use std::collections::{HashMap, HashSet};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::EvalError;
use crate::corpus::{Corpus, Dialogue};
use crate::embedstore::{EmbeddingKey, EmbeddingStore, EncodingMode, SpeakerToken, StoreBuilder};
use crate::io::derive_seed;

const EIGEN_FLOOR: f64 = 1e-3;
const MAX_ITERATIONS: usize = 20_000;
const CONVERGED: f64 = 1e-9;

/// Dialogues `syn{k}` with lengths uniform in `min_len..=max_len` and
/// globally unique turn texts.
pub fn synthetic_corpus(n_dialogues: usize, min_len: usize, max_len: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha20Rng::from_seed(derive_seed(seed, "synthetic-corpus"));
    Corpus::new(
        "synthetic",
        (0..n_dialogues)
            .map(|k| {
                let len = rng.random_range(min_len..=max_len);
                Dialogue::from_turns(
                    format!("syn{k}"),
                    (0..len).map(|i| ((i % 2) as u8, format!("syn{k} turn{i}"))),
                )
            })
            .collect(),
    )
}

/// Target `<b_i, a_j>` for a window of `window`, or `None` when free.
pub fn curved_target(i: usize, j: usize, window: usize) -> Option<f64> {
    if j == i {
        None
    } else if j < i || j - i >= window {
        Some(0.0)
    } else {
        Some((window - (j - i)) as f64 / window as f64)
    }
}

#[derive(Debug, Clone)]
struct Block {
    /// `2n` unit rows: befores then afters.
    rows: DMatrix<f64>,
    max_error: f64,
}

fn fixed_entries(n: usize, window: usize) -> Vec<(usize, usize, f64)> {
    let mut fixed: Vec<(usize, usize, f64)> = (0..2 * n).map(|k| (k, k, 1.0)).collect();
    for i in 0..n {
        for j in 0..n {
            if let Some(t) = curved_target(i, j, window) {
                fixed.push((i, n + j, t));
                fixed.push((n + j, i, t));
            }
        }
    }
    fixed
}

fn solve_block(n: usize, window: usize) -> Block {
    let m = 2 * n;
    let fixed = fixed_entries(n, window);
    let mut g = DMatrix::<f64>::zeros(m, m);
    for &(r, c, t) in &fixed {
        g[(r, c)] = t;
    }
    let mut eig = SymmetricEigen::new(g.clone());
    for _ in 0..MAX_ITERATIONS {
        let clipped = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
        let projected = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        let err = fixed
            .iter()
            .map(|&(r, c, t)| (projected[(r, c)] - t).abs())
            .fold(0.0, f64::max);
        if err < CONVERGED {
            break;
        }
        g = projected;
        for &(r, c, t) in &fixed {
            g[(r, c)] = t;
        }
        eig = SymmetricEigen::new(g.clone());
    }
    let roots = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR).sqrt());
    let mut rows = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    for mut r in rows.row_iter_mut() {
        let norm = r.norm();
        r /= norm;
    }
    let gram = &rows * rows.transpose();
    let max_error = fixed
        .iter()
        .map(|&(r, c, t)| (gram[(r, c)] - t).abs())
        .fold(0.0, f64::max);
    Block { rows, max_error }
}

#[derive(Debug, Clone)]
pub struct GramFixture {
    pub store: EmbeddingStore,
    pub window: usize,
    /// Largest deviation of a stored cosine from its target.
    pub max_error: f64,
}

/// Store with `[BEFORE]` and `[AFTER]` rows for every turn. With
/// `speaker_keys`, `[E]`/`[O]` before rows are copies of the plain one.
pub fn gram_store(c: &Corpus, window: usize, speaker_keys: bool) -> Result<GramFixture, EvalError> {
    if window < 1 {
        return Err(EvalError::InvalidConfig("window must be at least 1".into()));
    }
    let mut texts = HashSet::new();
    for d in &c.dialogues {
        for u in &d.turns {
            if !texts.insert(u.text.as_str()) {
                return Err(EvalError::InvalidConfig(format!(
                    "synthetic store needs unique texts, {:?} repeats",
                    u.text
                )));
            }
        }
    }
    let mut blocks: HashMap<usize, Block> = HashMap::new();
    for d in &c.dialogues {
        blocks.entry(d.len()).or_insert_with(|| solve_block(d.len(), window));
    }
    let dim: usize = c.dialogues.iter().map(|d| 2 * d.len()).sum();
    let mut builder = StoreBuilder::new(dim.max(1), format!("synthetic-gram-l{window}"));
    let mut offset = 0;
    let mut max_error: f64 = 0.0;
    for d in &c.dialogues {
        let n = d.len();
        let block = &blocks[&n];
        max_error = max_error.max(block.max_error);
        let embed = |row: usize| {
            let mut v = vec![0f32; dim];
            for (k, x) in block.rows.row(row).iter().enumerate() {
                v[offset + k] = *x as f32;
            }
            v
        };
        for (i, u) in d.turns.iter().enumerate() {
            let before = embed(i);
            let mut modes = vec![EncodingMode::BEFORE];
            if speaker_keys {
                modes.extend([SpeakerToken::E, SpeakerToken::O].map(EncodingMode::before));
            }
            for mode in modes {
                builder.push(EmbeddingKey::new(u.text.clone(), mode), before.clone())?;
            }
            builder.push(EmbeddingKey::new(u.text.clone(), EncodingMode::AFTER), embed(n + i))?;
        }
        offset += 2 * n;
    }
    Ok(GramFixture {
        store: builder.build(),
        window,
        max_error,
    })
}
