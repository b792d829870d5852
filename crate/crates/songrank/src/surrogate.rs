//! Scalar machinery of the NDCG surrogate: the squared-hinge rank surrogate,
//! exact ranks, the outer compositional function f, the top-K selector psi,
//! and exact NDCG metrics.
//!
//! | quantity        | definition                                              |
//! |-----------------|---------------------------------------------------------|
//! | rank r(i)       | count of items scoring >= score(i), self included       |
//! | hinge l(x)      | max(0, x + c)^2, so l >= the rank indicator when c >= 1 |
//! | g (full)        | (1/N_q) sum_j l(h_j - h_i), self term included          |
//! | f(u)            | (1/Z) (1 - 2^y) / log2(N_q u + 1)                       |
//! | NDCG@k          | discounted gain of the top k positions over Z_q^k       |

use serde::{Deserialize, Serialize};

use crate::data::{ideal_dcg, Dataset, IdealDcgTable, QueryGroup};
use crate::scorer::ScorerState;
use crate::Result;

/// Shape of the top-K selector psi.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PsiKind {
    /// max(0, s)^2: exact zero (and zero derivative) on s <= 0.
    SquaredRelu,
    /// A smoothed step sigma(a (s - scale/2)) with a = 8/scale: nonnegative,
    /// bounded by 1, derivative negligible for s < 0 and s >> scale.
    SigmoidLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// Squared-hinge margin c; must be >= 1 for the lower-bound lemmas.
    pub margin: f64,
    pub psi: PsiKind,
    pub psi_scale: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            margin: 1.0,
            psi: PsiKind::SquaredRelu,
            psi_scale: 1.0,
        }
    }
}

/// Squared hinge l(x) = max(0, x + c)^2 and its derivative 2 max(0, x + c).
pub fn squared_hinge(x: f64, c: f64) -> (f64, f64) {
    let t = x + c;
    if t > 0.0 {
        (t * t, 2.0 * t)
    } else {
        (0.0, 0.0)
    }
}

/// Exact rank of item `i`: the number of scores at least as large as its own
/// (self included, so the result is always >= 1; ties inflate the rank).
pub fn exact_rank(scores: &[f64], i: usize) -> usize {
    assert!(!scores.is_empty(), "exact_rank: empty score vector");
    scores.iter().filter(|&&s| s >= scores[i]).count()
}

/// Rank surrogate over an explicit score vector:
/// g = (1/N) sum_j l(h_j - h_i), including the self term l(0) = c^2.
pub fn g_full_scores(scores: &[f64], i: usize, c: f64) -> f64 {
    let n = scores.len() as f64;
    scores
        .iter()
        .map(|&hj| squared_hinge(hj - scores[i], c).0)
        .sum::<f64>()
        / n
}

/// Rank surrogate g for item `i` of a group under the given scorer.
pub fn g_full(
    state: &ScorerState,
    group: &QueryGroup,
    i: usize,
    cfg: &SurrogateConfig,
) -> Result<f64> {
    let scores = score_group(state, group)?;
    Ok(g_full_scores(&scores, i, cfg.margin))
}

/// Mini-batch estimate of g from an anchor score and the batch scores:
/// (1/|B|) sum_{j in B} l(h_j - h_i). Unbiased for g when the batch is drawn
/// uniformly without replacement from the full item set.
pub fn g_minibatch_scores(anchor_score: f64, batch_scores: &[f64], c: f64) -> f64 {
    assert!(!batch_scores.is_empty(), "g_minibatch: empty batch");
    batch_scores
        .iter()
        .map(|&hj| squared_hinge(hj - anchor_score, c).0)
        .sum::<f64>()
        / batch_scores.len() as f64
}

pub fn g_minibatch(
    state: &ScorerState,
    group: &QueryGroup,
    i: usize,
    batch_indices: &[usize],
    cfg: &SurrogateConfig,
) -> Result<f64> {
    let anchor = state.score(group.feature_row(i))?;
    let mut batch = Vec::with_capacity(batch_indices.len());
    for &j in batch_indices {
        batch.push(state.score(group.feature_row(j))?);
    }
    Ok(g_minibatch_scores(anchor, &batch, cfg.margin))
}

/// Clamp floor for the inner estimate: the guaranteed self-term contribution
/// c^2 / N_q, below which f and f' are evaluated at the floor instead.
pub fn u_floor(c: f64, n_q: usize) -> f64 {
    c * c / n_q as f64
}

/// Result of evaluating the outer function f at (possibly clamped) u.
#[derive(Debug, Clone, Copy)]
pub struct FEval {
    pub value: f64,
    pub deriv: f64,
    /// True when u fell below the clamp floor and the floor was used.
    pub clamped: bool,
}

/// Outer compositional function
/// f(u) = (1/Z) (1 - 2^y) / log2(N_q u + 1) and its derivative
/// f'(u) = -(1 - 2^y) N_q log2(e) / (Z (N_q u + 1) log2^2(N_q u + 1)).
/// `u` is clamped to `u_min` from below; the flag reports when that happened.
pub fn f_eval(u: f64, y: u32, z: f64, n_q: usize, u_min: f64) -> FEval {
    debug_assert!(z > 0.0, "f_eval: Z must be positive");
    debug_assert!(u_min > 0.0, "f_eval: clamp floor must be positive");
    let clamped = u < u_min;
    let u = if clamped { u_min } else { u };
    let n = n_q as f64;
    let a = (1.0 - (y as f64).exp2()) / z;
    let log_term = (n * u + 1.0).log2();
    let value = a / log_term;
    let deriv = -a * n * std::f64::consts::LOG2_E / ((n * u + 1.0) * log_term * log_term);
    FEval {
        value,
        deriv,
        clamped,
    }
}

/// Top-K selector psi and its derivative.
pub fn psi_eval(s: f64, cfg: &SurrogateConfig) -> (f64, f64) {
    match cfg.psi {
        PsiKind::SquaredRelu => {
            let t = s.max(0.0);
            (t * t, 2.0 * t)
        }
        PsiKind::SigmoidLike => {
            let a = 8.0 / cfg.psi_scale;
            let z = a * (s - cfg.psi_scale / 2.0);
            let sig = 1.0 / (1.0 + (-z).exp());
            (sig, a * sig * (1.0 - sig))
        }
    }
}

/// Item indices sorted by descending score, ties broken by ascending index.
pub fn ranked_indices(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx
}

/// NDCG@k of the given scores against the group's gains. Returns `None` when
/// the group's ideal top-k DCG is zero (no relevant items), which callers
/// skip in means.
pub fn ndcg_at_k(scores: &[f64], group: &QueryGroup, k: usize) -> Option<f64> {
    let n = group.n_items();
    assert!(k >= 1 && k <= n, "ndcg_at_k: k={k} out of range 1..={n}");
    assert_eq!(scores.len(), n, "ndcg_at_k: score/items length mismatch");
    let z = ideal_dcg(group, Some(k));
    if z == 0.0 {
        return None;
    }
    let order = ranked_indices(scores);
    let dcg: f64 = order
        .iter()
        .take(k)
        .enumerate()
        .map(|(pos, &item)| group.gains[item] / ((pos + 2) as f64).log2())
        .sum();
    Some(dcg / z)
}

/// Scores every item of a group under the scorer.
pub fn score_group(state: &ScorerState, group: &QueryGroup) -> Result<Vec<f64>> {
    (0..group.n_items())
        .map(|i| state.score(group.feature_row(i)))
        .collect()
}

/// Mean NDCG@k over all queries where it is defined (cutoff clamped to each
/// query's size). `None` when no query has a relevant item.
pub fn mean_ndcg_at_k(state: &ScorerState, dataset: &Dataset, k: usize) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for g in &dataset.groups {
        let scores = score_group(state, g)?;
        let kk = k.min(g.n_items()).max(1);
        if let Some(v) = ndcg_at_k(&scores, g, kk) {
            sum += v;
            count += 1;
        }
    }
    Ok(if count == 0 {
        None
    } else {
        Some(sum / count as f64)
    })
}

/// Mean full-list NDCG (k = N_q per query), skipping queries without
/// relevant items. This is the right-hand side of the Lemma-1 bound.
pub fn mean_full_ndcg(state: &ScorerState, dataset: &Dataset) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for g in &dataset.groups {
        let scores = score_group(state, g)?;
        if let Some(v) = ndcg_at_k(&scores, g, g.n_items()) {
            sum += v;
            count += 1;
        }
    }
    Ok(if count == 0 {
        None
    } else {
        Some(sum / count as f64)
    })
}

/// The surrogate objective in its bound form:
/// L(w) = (1/|S|) sum_{(q,i) in S} (2^y - 1) / (Z_q log2(N_q g + 1)).
/// With c >= 1 this lower-bounds the mean NDCG (Lemma-1 regime); it equals
/// the negated minimization objective F(w).
pub fn surrogate_objective(
    state: &ScorerState,
    dataset: &Dataset,
    table: &IdealDcgTable,
    cfg: &SurrogateConfig,
) -> Result<f64> {
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for g in &dataset.groups {
        if !g.has_relevant() {
            continue;
        }
        let scores = score_group(state, g)?;
        let n = g.n_items() as f64;
        let z = table.z(g.query_id).expect("table covers every query");
        for &i in &g.relevant {
            let gbar = n * g_full_scores(&scores, i, cfg.margin);
            sum += (g.gains[i]) / (z * (gbar + 1.0).log2());
            pairs += 1;
        }
    }
    Ok(if pairs == 0 { 0.0 } else { sum / pairs as f64 })
}
