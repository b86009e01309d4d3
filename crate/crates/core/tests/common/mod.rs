//! Independent reference implementations used by the property and
//! acceptance suites. Nothing here calls into the code under test except for
//! seed derivation, which fixes the random-negative stream.

#![allow(dead_code)]

use ccl_core::corpus::{Corpus, Dialogue};
use ccl_core::io::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub a: String,
    pub b: String,
    pub score: f64,
    pub kind: &'static str,
}

/// Literal enumeration of the curved training rows for one dialogue.
///
/// `mode` is one of `curved`, `speaker`, `ab5`, `ab2`.
pub fn brute_force_pairs(
    dialogue_id: &str,
    turns: &[&str],
    window: usize,
    mode: &str,
    seed: u64,
    negatives: usize,
    pool: &[&str],
) -> Vec<Row> {
    let speaker = mode == "speaker";
    let binary = mode == "ab5" || mode == "ab2";
    let max_i = if mode == "ab2" { 1 } else { window };
    let mut rng = ChaCha20Rng::from_seed(derive_seed(seed, dialogue_id));
    let mut rows = Vec::new();
    let n = turns.len();
    for a in 0..n {
        for i in 1..=max_i {
            if a + i >= n {
                break;
            }
            let before = match (speaker, i % 2) {
                (false, _) => "[BEFORE] ",
                (true, 0) => "[E] [BEFORE] ",
                (true, _) => "[O] [BEFORE] ",
            };
            let score = if binary { 1.0 } else { (window - i) as f64 / window as f64 };
            let (u, v) = (turns[a], turns[a + i]);
            rows.push(Row {
                a: format!("{before}{u}"),
                b: format!("[AFTER] {v}"),
                score,
                kind: "positive",
            });
            rows.push(Row {
                a: format!("{before}{v}"),
                b: format!("[AFTER] {u}"),
                score: 0.0,
                kind: "swap_negative",
            });
            for slot in 0..negatives {
                let (x, y) = if speaker {
                    let combo = rng.random_range(0..4u8);
                    let r = pool[rng.random_range(0..pool.len())];
                    let tok = if combo % 2 == 0 { "[O] [BEFORE] " } else { "[E] [BEFORE] " };
                    if combo < 2 {
                        (format!("{tok}{v}"), format!("[AFTER] {r}"))
                    } else {
                        (format!("{tok}{r}"), format!("[AFTER] {v}"))
                    }
                } else {
                    let r = pool[rng.random_range(0..pool.len())];
                    if slot % 2 == 0 {
                        (format!("{before}{u}"), format!("[AFTER] {r}"))
                    } else {
                        (format!("{before}{r}"), format!("[AFTER] {u}"))
                    }
                };
                rows.push(Row {
                    a: x,
                    b: y,
                    score: 0.0,
                    kind: "random_negative",
                });
            }
        }
    }
    rows
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] as f64 * b[k] as f64;
    }
    s
}

pub fn cos_explicit(a: &[f32], b: &[f32]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

pub fn strength(history: &[Vec<f32>], after: &[f32]) -> f64 {
    let mut s = 0.0;
    for h in history {
        s += dot(h, after);
    }
    s
}

/// `before[k]` / `after[k]` belong to goal `order[k]`.
pub fn chain(before: &[&[f32]], after: &[&[f32]]) -> f64 {
    let mut s = 0.0;
    for k in 0..before.len() - 1 {
        s += dot(before[k], after[k + 1]);
    }
    s
}

/// Chain plus `P(g1) - P(g2)/2 - P(g3)`.
pub fn chain_curving(before: [&[f32]; 3], after: [&[f32]; 3], history: &[Vec<f32>]) -> f64 {
    chain(&before, &after) + strength(history, after[0]) - 0.5 * strength(history, after[1])
        - strength(history, after[2])
}

pub fn unit(rng: &mut ChaCha20Rng, dim: usize) -> Vec<f32> {
    let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| (x / n) as f32).collect()
}

pub fn dialogue(id: &str, n: usize) -> Dialogue {
    Dialogue::from_turns(id, (0..n).map(|i| ((i % 2) as u8, format!("{id} says {i}"))))
}

/// Dialogue lengths reconstructed from the published per-split sample
/// counts of the 1000-dialogue DailyDialog test set: `survival[k]` is the
/// number of dialogues with at least `k + 2` turns, for 2..=13 turns.
pub const SURVIVAL_2_TO_13: [usize; 12] = [1000, 958, 918, 741, 651, 534, 479, 385, 323, 230, 183, 102];

pub fn survival_profile_corpus() -> Corpus {
    let mut lengths = Vec::new();
    for (k, w) in SURVIVAL_2_TO_13.windows(2).enumerate() {
        lengths.extend(std::iter::repeat_n(k + 2, w[0] - w[1]));
    }
    lengths.extend(std::iter::repeat_n(15, *SURVIVAL_2_TO_13.last().unwrap()));
    Corpus::new(
        "survival-profile",
        lengths
            .iter()
            .enumerate()
            .map(|(k, &n)| dialogue(&format!("p{k}"), n))
            .collect(),
    )
}
