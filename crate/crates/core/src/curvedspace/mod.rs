//! Scoring in the curved embedding space.
//!
//! All inputs are unit vectors stored as `f32`; every reduction is carried
//! out in `f64`. `[BEFORE]`-mode vectors always sit on the left of a cosine
//! and `[AFTER]`-mode vectors on the right.

mod cache;

use std::cmp::Ordering;
use std::collections::HashMap;

use itertools::Itertools;
use thiserror::Error;

pub use cache::ContextCache;

/// Default upper bound on goal-set size for exhaustive order ranking.
pub const DEFAULT_MAX_GOALS: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("history is empty")]
    EmptyHistory,
    #[error("order is not a permutation of the goal ids: {0}")]
    NotAPermutation(String),
    #[error("{n} goals exceeds the cap of {cap}")]
    TooManyGoals { n: usize, cap: usize },
    #[error("need at least {min} goals, got {n}")]
    TooFewGoals { n: usize, min: usize },
    #[error("duplicate candidate id {0:?}")]
    DuplicateCandidate(String),
}

/// How a cosine is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Similarity {
    /// Plain dot product; inputs are trusted to be unit norm.
    #[default]
    Dot,
    /// Divides by both norms. Used to validate store hygiene.
    Explicit,
}

impl Similarity {
    pub fn eval(self, a: &[f32], b: &[f32]) -> Result<f64, ScoreError> {
        match self {
            Similarity::Dot => cosine(a, b),
            Similarity::Explicit => cosine_explicit(a, b),
        }
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

fn same_dim(a: &[f32], b: &[f32]) -> Result<(), ScoreError> {
    if a.len() != b.len() {
        return Err(ScoreError::DimMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Cosine of two unit vectors.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, ScoreError> {
    same_dim(a, b)?;
    Ok(dot(a, b))
}

/// Cosine with explicit normalization. Zero vectors score 0.
pub fn cosine_explicit(a: &[f32], b: &[f32]) -> Result<f64, ScoreError> {
    same_dim(a, b)?;
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot(a, b) / (na * nb))
}

/// Entailment strength of `candidate` given `history`: the unnormalized sum
/// of `cos([B] h, [A] candidate)` over the history.
pub fn entailment_strength<V: AsRef<[f32]>>(
    history: &[V],
    candidate: &[f32],
) -> Result<f64, ScoreError> {
    entailment_strength_with(history, candidate, Similarity::Dot)
}

pub fn entailment_strength_with<V: AsRef<[f32]>>(
    history: &[V],
    candidate: &[f32],
    sim: Similarity,
) -> Result<f64, ScoreError> {
    if history.is_empty() {
        return Err(ScoreError::EmptyHistory);
    }
    history
        .iter()
        .map(|h| sim.eval(h.as_ref(), candidate))
        .sum()
}

/// History-length-normalized variant of [`entailment_strength`].
pub fn entailment_strength_mean<V: AsRef<[f32]>>(
    history: &[V],
    candidate: &[f32],
) -> Result<f64, ScoreError> {
    Ok(entailment_strength(history, candidate)? / history.len() as f64)
}

/// Descending by score, ascending by id on ties.
pub(crate) fn rank_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

/// Rank `[BEFORE]` candidates by their cosine to a goal's `[AFTER]` vector.
pub fn stp_rank<S: AsRef<str>, V: AsRef<[f32]>>(
    candidates: &[(S, V)],
    goal_after: &[f32],
) -> Result<Vec<(String, f64)>, ScoreError> {
    stp_rank_with(candidates, goal_after, Similarity::Dot)
}

pub fn stp_rank_with<S: AsRef<str>, V: AsRef<[f32]>>(
    candidates: &[(S, V)],
    goal_after: &[f32],
    sim: Similarity,
) -> Result<Vec<(String, f64)>, ScoreError> {
    let mut ranked = candidates
        .iter()
        .map(|(id, v)| Ok((id.as_ref().to_string(), sim.eval(v.as_ref(), goal_after)?)))
        .collect::<Result<Vec<_>, ScoreError>>()?;
    ranked.sort_by(rank_order);
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    pub id: String,
    pub text: String,
    pub before: Vec<f32>,
    pub after: Vec<f32>,
}

/// Goals with both of their mode vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GoalSet {
    goals: Vec<Goal>,
    by_id: HashMap<String, usize>,
}

impl GoalSet {
    pub fn new(goals: Vec<Goal>) -> Result<Self, ScoreError> {
        let mut by_id = HashMap::with_capacity(goals.len());
        for (i, g) in goals.iter().enumerate() {
            if by_id.insert(g.id.clone(), i).is_some() {
                return Err(ScoreError::NotAPermutation(format!("duplicate goal id {:?}", g.id)));
            }
            same_dim(&g.before, &g.after)?;
        }
        Ok(GoalSet { goals, by_id })
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn goals(&self) -> &[Goal] {
        &self.goals
    }

    pub fn get(&self, id: &str) -> Option<&Goal> {
        self.by_id.get(id).map(|&i| &self.goals[i])
    }

    /// Resolve `order` to goal indices, requiring a full permutation.
    fn resolve<S: AsRef<str>>(&self, order: &[S]) -> Result<Vec<usize>, ScoreError> {
        if order.len() != self.goals.len() {
            return Err(ScoreError::NotAPermutation(format!(
                "order has {} ids, goal set has {}",
                order.len(),
                self.goals.len()
            )));
        }
        let mut used = vec![false; self.goals.len()];
        order
            .iter()
            .map(|id| {
                let id = id.as_ref();
                let &i = self
                    .by_id
                    .get(id)
                    .ok_or_else(|| ScoreError::NotAPermutation(format!("unknown id {id:?}")))?;
                if std::mem::replace(&mut used[i], true) {
                    return Err(ScoreError::NotAPermutation(format!("repeated id {id:?}")));
                }
                Ok(i)
            })
            .collect()
    }

    fn chain_by_index(&self, order: &[usize]) -> Result<f64, ScoreError> {
        order
            .windows(2)
            .map(|w| cosine(&self.goals[w[0]].before, &self.goals[w[1]].after))
            .sum()
    }
}

/// Chain score of an ordering: the sum of `cos([B] g_i, [A] g_{i+1})` over
/// adjacent goals.
pub fn chain_score<S: AsRef<str>>(order: &[S], goals: &GoalSet) -> Result<f64, ScoreError> {
    if order.len() < 2 {
        return Err(ScoreError::TooFewGoals {
            n: order.len(),
            min: 2,
        });
    }
    let idx = goals.resolve(order)?;
    goals.chain_by_index(&idx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredOrder {
    pub order: Vec<String>,
    pub score: f64,
}

fn sort_orders(scored: &mut [ScoredOrder]) {
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.order.cmp(&b.order)));
}

fn all_orders(goals: &GoalSet, cap: usize) -> Result<Vec<Vec<usize>>, ScoreError> {
    let n = goals.len();
    if n < 2 {
        return Err(ScoreError::TooFewGoals { n, min: 2 });
    }
    if n > cap {
        return Err(ScoreError::TooManyGoals { n, cap });
    }
    Ok((0..n).permutations(n).collect())
}

/// Score every ordering of the goal set by [`chain_score`], best first.
/// Ties are broken by the lexicographic order of the id sequence.
pub fn rank_orders_iec(goals: &GoalSet, cap: usize) -> Result<Vec<ScoredOrder>, ScoreError> {
    let mut scored = all_orders(goals, cap)?
        .into_iter()
        .map(|idx| {
            Ok(ScoredOrder {
                score: goals.chain_by_index(&idx)?,
                order: idx.iter().map(|&i| goals.goals[i].id.clone()).collect(),
            })
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;
    sort_orders(&mut scored);
    Ok(scored)
}

/// Weights applied to the entailment strength of the goals in first, second
/// and third position of a candidate ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvingWeights(pub [f64; 3]);

impl Default for CurvingWeights {
    fn default() -> Self {
        CurvingWeights([1.0, -0.5, -1.0])
    }
}

/// Chain score of `(g1, g2, g3)` plus the weighted entailment strength of each
/// goal against the history: `s(o) + P(g1) - P(g2)/2 - P(g3)`.
pub fn chain_curving_score<V: AsRef<[f32]>>(
    order: [&str; 3],
    goals: &GoalSet,
    history: &[V],
) -> Result<f64, ScoreError> {
    chain_curving_score_slotted(order, goals, [history, history, history], CurvingWeights::default())
}

/// [`chain_curving_score`] with a separate history view per position, for
/// speaker-token embeddings where the history token depends on the turn gap
/// to the goal's hypothesized position.
pub fn chain_curving_score_slotted<V: AsRef<[f32]>>(
    order: [&str; 3],
    goals: &GoalSet,
    histories: [&[V]; 3],
    weights: CurvingWeights,
) -> Result<f64, ScoreError> {
    let idx = goals.resolve(&order)?;
    let mut score = goals.chain_by_index(&idx)?;
    for ((&g, history), w) in idx.iter().zip(histories).zip(weights.0) {
        score += w * entailment_strength(history, &goals.goals[g].after)?;
    }
    Ok(score)
}

/// All six orderings of a three-goal set under [`chain_curving_score_slotted`],
/// best first.
pub fn rank_orders_curving<V: AsRef<[f32]>>(
    goals: &GoalSet,
    histories: [&[V]; 3],
    weights: CurvingWeights,
) -> Result<Vec<ScoredOrder>, ScoreError> {
    if goals.len() != 3 {
        return Err(ScoreError::NotAPermutation(format!(
            "history curving is defined for exactly 3 goals, got {}",
            goals.len()
        )));
    }
    let mut scored = all_orders(goals, 3)?
        .into_iter()
        .map(|idx| {
            let ids: Vec<&str> = idx.iter().map(|&i| goals.goals[i].id.as_str()).collect();
            Ok(ScoredOrder {
                score: chain_curving_score_slotted([ids[0], ids[1], ids[2]], goals, histories, weights)?,
                order: ids.into_iter().map(str::to_string).collect(),
            })
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;
    sort_orders(&mut scored);
    Ok(scored)
}

/// Goals ranked by entailment strength against the history, best first.
pub fn rank_goals_by_curving<V: AsRef<[f32]>>(
    goals: &GoalSet,
    history: &[V],
) -> Result<Vec<(String, f64)>, ScoreError> {
    if history.is_empty() {
        return Err(ScoreError::EmptyHistory);
    }
    let mut ranked = goals
        .goals
        .iter()
        .map(|g| Ok((g.id.clone(), entailment_strength(history, &g.after)?)))
        .collect::<Result<Vec<_>, ScoreError>>()?;
    ranked.sort_by(rank_order);
    Ok(ranked)
}

/// The goal with the highest entailment strength; smaller id on ties.
pub fn greedy_curving<V: AsRef<[f32]>>(goals: &GoalSet, history: &[V]) -> Result<String, ScoreError> {
    if goals.is_empty() {
        return Err(ScoreError::TooFewGoals { n: 0, min: 1 });
    }
    Ok(rank_goals_by_curving(goals, history)?.swap_remove(0).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: f32 = std::f32::consts::FRAC_1_SQRT_2;

    fn goal(id: &str, before: [f32; 2], after: [f32; 2]) -> Goal {
        Goal {
            id: id.into(),
            text: id.into(),
            before: before.to_vec(),
            after: after.to_vec(),
        }
    }

    #[test]
    fn cosine_basics() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]), Ok(1.0));
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), Ok(0.0));
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]), Ok(-1.0));
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(ScoreError::DimMismatch { .. })));
        assert!((cosine_explicit(&[3.0, 0.0], &[2.0, 2.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn entailment_strength_sums() {
        let h = [[1.0f32, 0.0], [0.0, 1.0]];
        let v = entailment_strength(&h, &[S, S]).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-5);
        let single = entailment_strength(&[[S, S]], &[1.0, 0.0]).unwrap();
        assert_eq!(single, f64::from(S));
        let empty: [[f32; 2]; 0] = [];
        assert_eq!(entailment_strength(&empty, &[1.0, 0.0]), Err(ScoreError::EmptyHistory));
        assert!((entailment_strength_mean(&h, &[S, S]).unwrap() - 2f64.sqrt() / 2.0).abs() < 1e-5);
    }

    fn chain_fixture() -> GoalSet {
        GoalSet::new(vec![
            goal("g1", [1.0, 0.0], [0.0, 1.0]),
            goal("g2", [0.0, 1.0], [1.0, 0.0]),
            goal("g3", [0.0, 1.0], [0.0, 1.0]),
        ])
        .unwrap()
    }

    #[test]
    fn chain_score_direct() {
        let goals = chain_fixture();
        assert_eq!(chain_score(&["g1", "g2", "g3"], &goals), Ok(2.0));
        assert_eq!(chain_score(&["g3", "g2", "g1"], &goals), Ok(1.0));
        assert!(matches!(
            chain_score(&["g1", "g1", "g3"], &goals),
            Err(ScoreError::NotAPermutation(_))
        ));
        assert!(matches!(chain_score(&["g1", "g2"], &goals), Err(ScoreError::NotAPermutation(_))));
    }

    #[test]
    fn iec_ranking_and_ties() {
        let ranked = rank_orders_iec(&chain_fixture(), DEFAULT_MAX_GOALS).unwrap();
        assert_eq!(ranked.len(), 6);
        assert_eq!(ranked[0].order, ["g1", "g2", "g3"]);

        let same = GoalSet::new(
            ["b", "a", "c"].iter().map(|id| goal(id, [1.0, 0.0], [1.0, 0.0])).collect(),
        )
        .unwrap();
        let ranked = rank_orders_iec(&same, DEFAULT_MAX_GOALS).unwrap();
        assert!(ranked.iter().all(|o| o.score == 2.0));
        let orders: Vec<String> = ranked.iter().map(|o| o.order.concat()).collect();
        assert_eq!(orders, ["abc", "acb", "bac", "bca", "cab", "cba"]);

        let nine = GoalSet::new((0..9).map(|i| goal(&i.to_string(), [1.0, 0.0], [1.0, 0.0])).collect())
            .unwrap();
        assert_eq!(
            rank_orders_iec(&nine, DEFAULT_MAX_GOALS).unwrap_err(),
            ScoreError::TooManyGoals { n: 9, cap: 8 }
        );
    }

    #[test]
    fn curving_weights_follow_goal_order() {
        let goals = chain_fixture();
        let history = [[0.0f32, 1.0]];
        // after vectors: g1 (0,1), g2 (1,0), g3 (0,1) -> P = 1, 0, 1
        let a = chain_curving_score(["g1", "g2", "g3"], &goals, &history).unwrap();
        assert_eq!(a, 2.0 + 1.0 - 0.0 - 1.0);
        let b = chain_curving_score(["g2", "g1", "g3"], &goals, &history).unwrap();
        let chain = chain_score(&["g2", "g1", "g3"], &goals).unwrap();
        assert_eq!(b, chain + 0.0 - 0.5 - 1.0);

        let orth = [[1.0f32, 0.0]];
        let only_g2 = GoalSet::new(vec![
            goal("g1", [1.0, 0.0], [0.0, 1.0]),
            goal("g2", [0.0, 1.0], [0.0, 1.0]),
            goal("g3", [0.0, 1.0], [0.0, 1.0]),
        ])
        .unwrap();
        assert_eq!(
            chain_curving_score(["g1", "g2", "g3"], &only_g2, &orth).unwrap(),
            chain_score(&["g1", "g2", "g3"], &only_g2).unwrap()
        );
        let empty: [[f32; 2]; 0] = [];
        assert_eq!(
            chain_curving_score(["g1", "g2", "g3"], &goals, &empty),
            Err(ScoreError::EmptyHistory)
        );
    }

    #[test]
    fn greedy_curving_cases() {
        let one = GoalSet::new(vec![goal("x", [1.0, 0.0], [-1.0, 0.0])]).unwrap();
        assert_eq!(greedy_curving(&one, &[[1.0f32, 0.0]]).unwrap(), "x");

        let goals = GoalSet::new(vec![
            goal("a", [1.0, 0.0], [0.0, 1.0]),
            goal("b", [1.0, 0.0], [1.0, 0.0]),
        ])
        .unwrap();
        assert_eq!(greedy_curving(&goals, &[[1.0f32, 0.0]]).unwrap(), "b");

        let tied = GoalSet::new(vec![
            goal("z", [1.0, 0.0], [1.0, 0.0]),
            goal("y", [1.0, 0.0], [1.0, 0.0]),
        ])
        .unwrap();
        assert_eq!(greedy_curving(&tied, &[[1.0f32, 0.0]]).unwrap(), "y");
    }

    #[test]
    fn stp_rank_cases() {
        let goal = [1.0f32, 0.0];
        let cands = vec![("c", vec![0.0f32, 1.0]), ("t", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])];
        let ranked = stp_rank(&cands, &goal).unwrap();
        assert_eq!(ranked[0], ("t".to_string(), 1.0));
        assert_eq!(ranked[1].0, "b");
        let mut reversed = cands.clone();
        reversed.reverse();
        assert_eq!(stp_rank(&reversed, &goal).unwrap(), ranked);

        let lone = [("only", vec![-1.0f32, 0.0])];
        assert_eq!(stp_rank(&lone, &goal).unwrap()[0].0, "only");
    }
}
