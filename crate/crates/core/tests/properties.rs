mod common;

use std::collections::HashSet;

use ccl_core::corpus::{merge_consecutive_turns, Corpus, Dialogue};
use ccl_core::curvedspace::{
    chain_curving_score, chain_score, entailment_strength, rank_orders_iec, stp_rank, stp_rank_with,
    ContextCache, Goal, GoalSet, Similarity,
};
use ccl_core::embedstore::{read_store, write_store, EmbeddingKey, EncodingMode, SpeakerToken, StoreBuilder};
use ccl_core::evalharness::{Parity, RankingReport};
use ccl_core::pairgen::{
    binary_pairs, corpus_pairs, curved_pairs, speaker_pairs, PairGenConfig, PairKind, PairMode, TrainingPair,
};
use common::{brute_force_pairs, unit, Row};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn kind_str(k: PairKind) -> &'static str {
    match k {
        PairKind::Positive => "positive",
        PairKind::SwapNegative => "swap_negative",
        PairKind::RandomNegative => "random_negative",
    }
}

fn as_rows(pairs: &[TrainingPair]) -> Vec<Row> {
    pairs
        .iter()
        .map(|p| Row {
            a: p.sentence_a.clone(),
            b: p.sentence_b.clone(),
            score: p.score,
            kind: kind_str(p.kind),
        })
        .collect()
}

fn vectors(seed: u64, n: usize, dim: usize) -> Vec<Vec<f32>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n).map(|_| unit(&mut rng, dim)).collect()
}

fn goals_from(vs: &[Vec<f32>]) -> GoalSet {
    GoalSet::new(
        vs.chunks(2)
            .enumerate()
            .map(|(k, pair)| Goal {
                id: format!("g{k}"),
                text: format!("g{k}"),
                before: pair[0].clone(),
                after: pair[1].clone(),
            })
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn merge_is_idempotent_and_alternates(speakers in prop::collection::vec(0u8..2, 0..20)) {
        let d = Dialogue::from_turns("d", speakers.iter().enumerate().map(|(i, &s)| (s, format!("t{i}"))));
        let once = merge_consecutive_turns(&d);
        prop_assert_eq!(&merge_consecutive_turns(&once), &once);
        for w in once.turns.windows(2) {
            prop_assert_ne!(w[0].speaker, w[1].speaker);
        }
        for (i, u) in once.turns.iter().enumerate() {
            prop_assert_eq!(u.index, i);
        }
        let tokens = |d: &Dialogue| d.turns.iter().map(|u| u.text.split(' ').count()).sum::<usize>();
        prop_assert_eq!(tokens(&once), tokens(&d));
    }

    #[test]
    fn pairs_match_brute_force(
        n in 1usize..=8,
        window in 1usize..=6,
        mode_ix in 0usize..4,
        seed in any::<u64>(),
        negatives in 0usize..=3,
    ) {
        let mode = [PairMode::Curved, PairMode::CurvedSpeaker, PairMode::BinaryWindow, PairMode::BinaryAdjacent][mode_ix];
        let d = common::dialogue("dlg", n);
        let pool = ["p zero", "p one", "p two"];
        let cfg = PairGenConfig { window, mode, seed, random_negatives: negatives, dedup: false };
        let got = match mode {
            PairMode::Curved => curved_pairs(&d, &cfg, &pool),
            PairMode::CurvedSpeaker => speaker_pairs(&d, &cfg, &pool),
            _ => binary_pairs(&d, &cfg, &pool),
        }.unwrap();
        let turns: Vec<&str> = d.turns.iter().map(|u| u.text.as_str()).collect();
        let want = brute_force_pairs("dlg", &turns, window, mode.as_str(), seed, negatives, &pool);
        prop_assert_eq!(as_rows(&got), want);
    }

    #[test]
    fn cache_matches_batch_under_interleaving(
        seed in any::<u64>(),
        n_cand in 0usize..40,
        n_hist in 1usize..=10,
        dim in 2usize..24,
    ) {
        let cands = vectors(seed, n_cand, dim);
        let hist = vectors(seed ^ 0x9e37, n_hist, dim);
        let rows: Vec<(String, &Vec<f32>)> = cands.iter().enumerate().map(|(i, v)| (format!("c{i}"), v)).collect();
        let mut cache = ContextCache::new(&rows).unwrap();
        for (k, h) in hist.iter().enumerate() {
            cache.push(h).unwrap();
            prop_assert_eq!(cache.history_len(), k + 1);
            for (i, c) in cands.iter().enumerate() {
                let batch = entailment_strength(&hist[..=k], c).unwrap();
                prop_assert!((cache.scores()[i] - batch).abs() <= 1e-6);
            }
        }
        let top = cache.top(n_cand.max(1));
        for w in top.windows(2) {
            prop_assert!(w[0].1 >= w[1].1);
        }
        for (pos, (id, _)) in top.iter().enumerate() {
            let i: usize = id[1..].parse().unwrap();
            prop_assert_eq!(cache.rank_of(i), pos + 1);
        }
    }

    #[test]
    fn strength_ignores_history_order(seed in any::<u64>(), n in 1usize..12, shift in 0usize..12) {
        let hist = vectors(seed, n, 16);
        let cand = &vectors(seed + 1, 1, 16)[0];
        let mut rotated = hist.clone();
        rotated.rotate_left(shift % n);
        rotated.reverse();
        let a = entailment_strength(&hist, cand).unwrap();
        let b = entailment_strength(&rotated, cand).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn every_order_scored_once(n in 2usize..=6, seed in any::<u64>()) {
        let goals = goals_from(&vectors(seed, 2 * n, 8));
        let ranked = rank_orders_iec(&goals, 8).unwrap();
        let expected: usize = (1..=n).product();
        prop_assert_eq!(ranked.len(), expected);
        let distinct: HashSet<_> = ranked.iter().map(|o| o.order.clone()).collect();
        prop_assert_eq!(distinct.len(), expected);
        for o in &ranked {
            prop_assert!((chain_score(&o.order, &goals).unwrap() - o.score).abs() < 1e-12);
        }
    }

    #[test]
    fn rankings_are_scale_free(seed in any::<u64>(), n in 1usize..30, scale in 0.01f32..100.0) {
        let cands = vectors(seed, n, 12);
        let goal = &vectors(seed + 7, 1, 12)[0];
        let ids: Vec<(String, Vec<f32>)> = cands.iter().enumerate().map(|(i, v)| (format!("c{i:02}"), v.clone())).collect();
        let scaled: Vec<(String, Vec<f32>)> =
            ids.iter().map(|(id, v)| (id.clone(), v.iter().map(|x| x * scale).collect())).collect();
        let goal_scaled: Vec<f32> = goal.iter().map(|x| x * scale).collect();
        let plain: Vec<String> = stp_rank(&ids, goal).unwrap().into_iter().map(|r| r.0).collect();
        let explicit: Vec<String> =
            stp_rank_with(&scaled, &goal_scaled, Similarity::Explicit).unwrap().into_iter().map(|r| r.0).collect();
        prop_assert_eq!(plain, explicit);
    }

    #[test]
    fn hits_non_decreasing(ranks in prop::collection::vec(1usize..=101, 0..60)) {
        let r = RankingReport::from_ranks(&ranks, &[1, 5, 10, 25, 50, 101], Parity::All);
        let hits: Vec<f64> = r.hits_at.values().copied().collect();
        for w in hits.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        if !ranks.is_empty() {
            prop_assert!(r.average_rank >= 1.0 && r.average_rank <= 101.0);
            prop_assert_eq!(hits[hits.len() - 1], 1.0);
        }
    }

    #[test]
    fn store_round_trip(texts in prop::collection::hash_set("[a-z ]{1,12}", 1..20), seed in any::<u64>()) {
        let mut b = StoreBuilder::new(6, "prop");
        let modes = [EncodingMode::BEFORE, EncodingMode::AFTER, EncodingMode::before(SpeakerToken::E)];
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for t in &texts {
            for m in modes {
                b.push(EmbeddingKey::new(t.clone(), m), unit(&mut rng, 6)).unwrap();
            }
        }
        let store = b.build();
        let dir = tempfile::tempdir().unwrap();
        write_store(&store, dir.path().join("s")).unwrap();
        let (back, stats) = read_store(dir.path().join("s")).unwrap();
        prop_assert_eq!(stats.renormalized, 0);
        prop_assert_eq!(back, store);
    }
}

#[test]
fn single_candidate_always_first() {
    let r = stp_rank(&[("only", vec![-1.0f32, 0.0])], &[1.0, 0.0]).unwrap();
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].0, "only");
}

#[test]
fn chain_curving_matches_formula() {
    let vs = vectors(3, 6, 10);
    let goals = goals_from(&vs);
    let hist = vectors(4, 3, 10);
    let got = chain_curving_score(["g2", "g0", "g1"], &goals, &hist).unwrap();
    let want = common::chain_curving([&vs[4], &vs[0], &vs[2]], [&vs[5], &vs[1], &vs[3]], &hist);
    assert!((got - want).abs() < 1e-12);
}

fn corpus_for_counts(n: usize) -> Corpus {
    Corpus::new("c", (0..n).map(|k| common::dialogue(&format!("d{k}"), 10)).collect())
}

/// Each random slot of the speaker objective picks one of four
/// token/side combinations with equal probability.
#[test]
fn speaker_combinations_uniform() {
    let c = corpus_for_counts(14_300);
    let cfg = PairGenConfig {
        mode: PairMode::CurvedSpeaker,
        seed: 11,
        ..PairGenConfig::default()
    };
    let pairs = corpus_pairs(&c, &cfg).unwrap();
    let mut counts = [0usize; 4];
    let dialogue_of = |s: &str| s.split(" says ").next().unwrap().rsplit(' ').next().unwrap().to_string();
    let mut owner = String::new();
    for p in &pairs {
        if p.kind == PairKind::Positive {
            owner = dialogue_of(&p.sentence_a);
        }
        if p.kind != PairKind::RandomNegative {
            continue;
        }
        let odd = p.sentence_a.starts_with("[O] ");
        let own_after = dialogue_of(&p.sentence_b) == owner;
        // combo 0: O, own before; 1: E, own before; 2: O, own after; 3: E, own after
        let combo = usize::from(!odd) + 2 * usize::from(own_after);
        counts[combo] += 1;
    }
    let total: usize = counts.iter().sum();
    assert!(total >= 1_000_000, "only {total} draws");
    for c in counts {
        let f = c as f64 / total as f64;
        assert!((f - 0.25).abs() < 0.01, "frequency {f}");
    }
}

#[test]
fn output_independent_of_worker_count() {
    let c = corpus_for_counts(300);
    let cfg = PairGenConfig {
        mode: PairMode::CurvedSpeaker,
        seed: 5,
        ..PairGenConfig::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| corpus_pairs(&c, &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}
