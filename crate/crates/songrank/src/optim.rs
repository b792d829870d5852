//! Training-step state machines: SONG, K-SONG (theoretical and practical),
//! and the SOLC listwise warm-up, sharing one estimator bank, one batch
//! sampler, and one momentum/Adam update path.
//!
//! Every step touches only the bank slots of sampled pairs and queries, and
//! the per-step cost scales with the batch sizes, not with list length.
//! Gradient reduction runs in ascending (query id, item index) order so that
//! identical configs and seeds give bit-identical trajectories.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, IdealDcgTable, QueryGroup};
use crate::scorer::{Arch, GradBuffer, ScorerState};
use crate::surrogate::{
    f_eval, ndcg_at_k, psi_eval, score_group, squared_hinge, u_floor, PsiKind, SurrogateConfig,
};
use crate::topk::{lower_grad, lower_hess, mixed_grad_accumulate, LowerLevelConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Song,
    KsongTheoretical,
    KsongPractical,
    Solc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    FlatPairs,
    PerQueryStratified,
}

/// Update-rule constants are innovation weights: a new gradient enters the
/// moving averages with weight b1 (or beta1), the old value keeps 1 - b1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    Momentum,
    Adam { eps: f64, b1: f64, b2: f64 },
}

impl UpdateRule {
    pub fn adam_default() -> Self {
        UpdateRule::Adam {
            eps: 1e-8,
            b1: 0.1,
            b2: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub arch: Arch,
    /// Innovation weight of the inner-estimate moving average u (and of the
    /// SOLC mean-exp estimate).
    pub beta0: f64,
    /// Innovation weight of the parameter-momentum average m.
    pub beta1: f64,
    /// Innovation weight of the lower-level averages v and s.
    pub beta2: f64,
    pub eta: f64,
    /// Step size of the per-query threshold update.
    pub eta2: f64,
    pub margin: f64,
    pub psi: PsiKind,
    pub psi_scale: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub k: usize,
    pub pairs_per_step: usize,
    /// Per-query mini-batch size |B_q|.
    pub items_per_query: usize,
    /// Relevant items drawn per sampled query in stratified mode.
    pub relevant_per_query: usize,
    /// When set, the anchor items of each sampled pair are merged into their
    /// query's B_q, guaranteeing the self term of the rank estimate.
    pub include_self: bool,
    pub sampling: SamplingMode,
    pub update_rule: UpdateRule,
    pub epochs: usize,
    pub warmup_epochs: usize,
    /// Fraction of queries held out for evaluation; 0 evaluates on the
    /// training queries.
    pub eval_fraction: f64,
    pub eval_ks: Vec<usize>,
    pub solver_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::Song,
            arch: Arch::Linear,
            beta0: 0.1,
            beta1: 0.1,
            beta2: 0.1,
            eta: 0.1,
            eta2: 0.1,
            margin: 1.0,
            psi: PsiKind::SquaredRelu,
            psi_scale: 1.0,
            tau1: 1e-2,
            tau2: 1e-2,
            k: 10,
            pairs_per_step: 32,
            items_per_query: 10,
            relevant_per_query: 10,
            include_self: false,
            sampling: SamplingMode::FlatPairs,
            update_rule: UpdateRule::Momentum,
            epochs: 10,
            warmup_epochs: 0,
            eval_fraction: 0.2,
            eval_ks: vec![10],
            solver_tol: 1e-10,
            max_iter: 200,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be in (0, 1], got {v}")))
            }
        };
        in_unit("beta0", self.beta0)?;
        in_unit("beta1", self.beta1)?;
        in_unit("beta2", self.beta2)?;
        for (name, v) in [
            ("eta", self.eta),
            ("eta2", self.eta2),
            ("margin", self.margin),
            ("psi_scale", self.psi_scale),
            ("tau1", self.tau1),
            ("tau2", self.tau2),
            ("solver_tol", self.solver_tol),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("k", self.k),
            ("pairs_per_step", self.pairs_per_step),
            ("items_per_query", self.items_per_query),
            ("relevant_per_query", self.relevant_per_query),
            ("max_iter", self.max_iter),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return Err(Error::Config(format!(
                "eval_fraction must be in [0, 1), got {}",
                self.eval_fraction
            )));
        }
        if let UpdateRule::Adam { eps, b1, b2 } = self.update_rule {
            if eps <= 0.0 || !eps.is_finite() {
                return Err(Error::Config(format!(
                    "adam eps must be positive, got {eps}"
                )));
            }
            in_unit("adam b1", b1)?;
            in_unit("adam b2", b2)?;
        }
        if self.eval_ks.is_empty() {
            return Err(Error::Config("eval_ks must not be empty".into()));
        }
        Ok(())
    }

    pub fn surrogate(&self) -> SurrogateConfig {
        SurrogateConfig {
            margin: self.margin,
            psi: self.psi,
            psi_scale: self.psi_scale,
        }
    }

    pub fn lower_level(&self) -> LowerLevelConfig {
        LowerLevelConfig {
            tau1: self.tau1,
            tau2: self.tau2,
            k: self.k,
            solver_tol: self.solver_tol,
            max_iter: self.max_iter,
        }
    }
}

mod pair_map {
    use std::collections::BTreeMap;

    use serde::de::Deserializer;
    use serde::ser::Serializer;
    use serde::{Deserialize, Serialize};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(u64, usize), f64>,
        ser: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<(u64, usize, f64)> = map.iter().map(|(&(q, i), &v)| (q, i, v)).collect();
        rows.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> std::result::Result<BTreeMap<(u64, usize), f64>, D::Error> {
        let rows: Vec<(u64, usize, f64)> = Vec::deserialize(de)?;
        Ok(rows.into_iter().map(|(q, i, v)| ((q, i), v)).collect())
    }
}

/// Per-pair and per-query moving-average state shared by all algorithms,
/// plus the parameter-space momentum buffers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorBank {
    /// Inner-estimate average u_{q,i}, one slot per relevant pair; absent
    /// slots read as 0.
    #[serde(with = "pair_map")]
    pub u: BTreeMap<(u64, usize), f64>,
    /// Per-query threshold lambda_q; absent slots read as 0.
    pub lambda: BTreeMap<u64, f64>,
    /// Per-query lower-level gradient average; first touch adopts the
    /// mini-batch value.
    pub v: BTreeMap<u64, f64>,
    /// Per-query lower-level Hessian average, clamped to tau2 or more.
    pub s: BTreeMap<u64, f64>,
    pub m: Vec<f64>,
    pub adam_v: Vec<f64>,
    /// Count of f evaluations that hit the u floor.
    pub u_clamps: u64,
    /// Count of SOLC exponent arguments clamped at 30.
    pub exp_clamps: u64,
}

impl EstimatorBank {
    pub fn new(dim: usize) -> Self {
        EstimatorBank {
            u: BTreeMap::new(),
            lambda: BTreeMap::new(),
            v: BTreeMap::new(),
            s: BTreeMap::new(),
            m: vec![0.0; dim],
            adam_v: vec![0.0; dim],
            u_clamps: 0,
            exp_clamps: 0,
        }
    }
}

/// One sampled mini-batch: anchor pairs plus a per-query item set B_q shared
/// by all anchors of that query.
#[derive(Debug, Clone, PartialEq)]
pub struct StepBatch {
    /// (query id, relevant item index), ascending.
    pub pairs: Vec<(u64, usize)>,
    pub per_query_items: BTreeMap<u64, Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// Mini-batch estimate of the objective the step descends.
    pub objective: f64,
    pub grad_norm: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

pub struct TrainOutput {
    pub state: ScorerState,
    pub bank: EstimatorBank,
    pub records: Vec<MetricsRecord>,
    /// Wall time per epoch; kept out of the records so curve files stay
    /// byte-deterministic.
    pub epoch_seconds: Vec<f64>,
    pub rng: ChaCha8Rng,
}

/// Draws the anchor pairs and per-query item sets for one step from the full
/// dataset. Training restricts the pool to the train split via
/// [`sample_batch_from`].
pub fn sample_batch(dataset: &Dataset, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> StepBatch {
    sample_batch_from(dataset, &dataset.pair_index, cfg, rng)
}

pub fn sample_batch_from(
    dataset: &Dataset,
    pool: &[(u64, usize)],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> StepBatch {
    let mut pairs: Vec<(u64, usize)> = match cfg.sampling {
        SamplingMode::FlatPairs => {
            let amount = cfg.pairs_per_step.min(pool.len());
            index::sample(rng, pool.len(), amount)
                .into_iter()
                .map(|ix| pool[ix])
                .collect()
        }
        SamplingMode::PerQueryStratified => {
            let mut qids: Vec<u64> = pool.iter().map(|&(q, _)| q).collect();
            qids.dedup();
            qids.sort_unstable();
            qids.dedup();
            let wanted = cfg.pairs_per_step.div_ceil(cfg.relevant_per_query);
            let mut drawn: Vec<u64> = index::sample(rng, qids.len(), wanted.min(qids.len()))
                .into_iter()
                .map(|ix| qids[ix])
                .collect();
            drawn.sort_unstable();
            let mut out = Vec::new();
            for q in drawn {
                let group = dataset.group_of(q).expect("pool qid present in dataset");
                let rel = &group.relevant;
                let amount = cfg.relevant_per_query.min(rel.len());
                let mut items: Vec<usize> = index::sample(rng, rel.len(), amount)
                    .into_iter()
                    .map(|ix| rel[ix])
                    .collect();
                items.sort_unstable();
                out.extend(items.into_iter().map(|i| (q, i)));
            }
            out
        }
    };
    pairs.sort_unstable();

    let mut per_query_items = BTreeMap::new();
    let mut anchors_of: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for &(q, i) in &pairs {
        anchors_of.entry(q).or_default().push(i);
    }
    for (&q, anchors) in &anchors_of {
        let n_q = dataset.group_of(q).expect("sampled qid").n_items();
        let amount = cfg.items_per_query.min(n_q);
        let mut items: Vec<usize> = index::sample(rng, n_q, amount).into_iter().collect();
        if cfg.include_self {
            items.extend_from_slice(anchors);
        }
        items.sort_unstable();
        items.dedup();
        per_query_items.insert(q, items);
    }
    StepBatch {
        pairs,
        per_query_items,
    }
}

/// Scores for the items of one query's B_q plus any anchors outside it,
/// computed once per step and query.
struct QueryScores {
    batch_scores: Vec<f64>,
    by_item: BTreeMap<usize, f64>,
}

impl QueryScores {
    fn compute(
        state: &ScorerState,
        group: &QueryGroup,
        items: &[usize],
        anchors: &[usize],
    ) -> Result<Self> {
        let mut by_item = BTreeMap::new();
        let mut batch_scores = Vec::with_capacity(items.len());
        for &j in items {
            let h = state.score(group.feature_row(j))?;
            by_item.insert(j, h);
            batch_scores.push(h);
        }
        for &i in anchors {
            if let std::collections::btree_map::Entry::Vacant(slot) = by_item.entry(i) {
                slot.insert(state.score(group.feature_row(i))?);
            }
        }
        Ok(QueryScores {
            batch_scores,
            by_item,
        })
    }

    fn score_of(&self, item: usize) -> f64 {
        self.by_item[&item]
    }
}

fn batch_by_query(batch: &StepBatch) -> BTreeMap<u64, Vec<usize>> {
    let mut anchors_of: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for &(q, i) in &batch.pairs {
        anchors_of.entry(q).or_default().push(i);
    }
    anchors_of
}

/// Flushes one query's item-coefficient map into the gradient buffer in
/// ascending item order.
fn flush_coefficients(
    state: &ScorerState,
    group: &QueryGroup,
    coeffs: &BTreeMap<usize, f64>,
    buffer: &mut GradBuffer,
) -> Result<()> {
    for (&item, &c) in coeffs {
        state.accumulate_score_grad(group.feature_row(item), c, buffer)?;
    }
    Ok(())
}

/// One SONG step: update the u averages of the sampled pairs, assemble the
/// stochastic gradient with the pre-update u values, and apply the momentum
/// or Adam rule.
pub fn song_step(
    dataset: &Dataset,
    table: &IdealDcgTable,
    state: &mut ScorerState,
    bank: &mut EstimatorBank,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepDiagnostics> {
    let batch = sample_batch(dataset, cfg, rng);
    song_step_batch(dataset, table, state, bank, cfg, &batch)
}

pub fn song_step_batch(
    dataset: &Dataset,
    table: &IdealDcgTable,
    state: &mut ScorerState,
    bank: &mut EstimatorBank,
    cfg: &TrainConfig,
    batch: &StepBatch,
) -> Result<StepDiagnostics> {
    if batch.pairs.is_empty() {
        return Ok(StepDiagnostics {
            objective: 0.0,
            grad_norm: 0.0,
            pairs: 0,
        });
    }
    let n_pairs = batch.pairs.len() as f64;
    let mut grad = GradBuffer::new(state.params().len());
    let mut objective = 0.0;

    for (&q, anchors) in &batch_by_query(batch) {
        let group = dataset.group_of(q).expect("sampled qid");
        let items = &batch.per_query_items[&q];
        let scores = QueryScores::compute(state, group, items, anchors)?;
        let b_q = items.len() as f64;
        let floor = u_floor(cfg.margin, group.n_items());
        let z = table.z(q).expect("table covers dataset");

        let mut coeffs: BTreeMap<usize, f64> = BTreeMap::new();
        for &i in anchors {
            let h_i = scores.score_of(i);
            let g_hat = items
                .iter()
                .map(|&j| squared_hinge(scores.score_of(j) - h_i, cfg.margin).0)
                .sum::<f64>()
                / b_q;
            let u_prev = bank.u.get(&(q, i)).copied().unwrap_or(0.0);
            bank.u
                .insert((q, i), cfg.beta0 * g_hat + (1.0 - cfg.beta0) * u_prev);

            let f = f_eval(u_prev, group.relevances[i], z, group.n_items(), floor);
            if f.clamped {
                bank.u_clamps += 1;
            }
            objective += f.value / n_pairs;

            let w_i = f.deriv / (n_pairs * b_q);
            let mut row_sum = 0.0;
            for &j in items {
                let d = squared_hinge(scores.score_of(j) - h_i, cfg.margin).1;
                if d != 0.0 {
                    *coeffs.entry(j).or_insert(0.0) += w_i * d;
                    row_sum += d;
                }
            }
            if row_sum != 0.0 {
                *coeffs.entry(i).or_insert(0.0) -= w_i * row_sum;
            }
        }
        flush_coefficients(state, group, &coeffs, &mut grad)?;
    }

    let grad_norm = grad.l2_norm();
    apply_update(state, bank, &grad.grad, cfg)?;
    Ok(StepDiagnostics {
        objective,
        grad_norm,
        pairs: batch.pairs.len(),
    })
}

/// One K-SONG step. The selector weight psi, the gradient weight p, and the
/// lower-level derivatives all use the pre-update lambda; the implicit term
/// of the theoretical variant divides by the post-update clamped s.
pub fn ksong_step(
    dataset: &Dataset,
    table: &IdealDcgTable,
    state: &mut ScorerState,
    bank: &mut EstimatorBank,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepDiagnostics> {
    let batch = sample_batch(dataset, cfg, rng);
    ksong_step_batch(dataset, table, state, bank, cfg, &batch)
}

pub fn ksong_step_batch(
    dataset: &Dataset,
    table: &IdealDcgTable,
    state: &mut ScorerState,
    bank: &mut EstimatorBank,
    cfg: &TrainConfig,
    batch: &StepBatch,
) -> Result<StepDiagnostics> {
    if batch.pairs.is_empty() {
        return Ok(StepDiagnostics {
            objective: 0.0,
            grad_norm: 0.0,
            pairs: 0,
        });
    }
    let theoretical = match cfg.algorithm {
        Algorithm::KsongTheoretical => true,
        Algorithm::KsongPractical => false,
        _ => {
            return Err(Error::Config(
                "ksong_step requires a ksong algorithm variant".into(),
            ))
        }
    };
    let n_pairs = batch.pairs.len() as f64;
    let ll = cfg.lower_level();
    let mut grad = GradBuffer::new(state.params().len());
    let mut objective = 0.0;

    for (&q, anchors) in &batch_by_query(batch) {
        let group = dataset.group_of(q).expect("sampled qid");
        if cfg.k > group.n_items() {
            return Err(Error::Config(format!(
                "K={} exceeds the {} items of query {q}",
                cfg.k,
                group.n_items()
            )));
        }
        let items = &batch.per_query_items[&q];
        let scores = QueryScores::compute(state, group, items, anchors)?;
        let b_q = items.len() as f64;
        let floor = u_floor(cfg.margin, group.n_items());
        let z = table
            .z_at_k(q, cfg.k)
            .expect("table built with the configured K");

        let lambda_prev = bank.lambda.get(&q).copied().unwrap_or(0.0);
        let batch_grad = lower_grad(lambda_prev, &scores.batch_scores, group.n_items(), &ll);
        let batch_hess = lower_hess(lambda_prev, &scores.batch_scores, group.n_items(), &ll);
        let s_new = match bank.s.get(&q) {
            Some(&s) => ((1.0 - cfg.beta2) * s + cfg.beta2 * batch_hess).max(cfg.tau2),
            None => batch_hess.max(cfg.tau2),
        };
        let v_new = match bank.v.get(&q) {
            Some(&v) => (1.0 - cfg.beta2) * v + cfg.beta2 * batch_grad,
            None => batch_grad,
        };
        bank.s.insert(q, s_new);
        bank.v.insert(q, v_new);
        bank.lambda.insert(q, lambda_prev - cfg.eta2 * v_new);

        let mut coeffs: BTreeMap<usize, f64> = BTreeMap::new();
        let mut mixed_coefficient = 0.0;
        for &i in anchors {
            let h_i = scores.score_of(i);
            let g_hat = items
                .iter()
                .map(|&j| squared_hinge(scores.score_of(j) - h_i, cfg.margin).0)
                .sum::<f64>()
                / b_q;
            let u_prev = bank.u.get(&(q, i)).copied().unwrap_or(0.0);
            bank.u
                .insert((q, i), cfg.beta0 * g_hat + (1.0 - cfg.beta0) * u_prev);

            let f = f_eval(u_prev, group.relevances[i], z, group.n_items(), floor);
            if f.clamped {
                bank.u_clamps += 1;
            }
            let (psi, psi_deriv) = psi_eval(h_i - lambda_prev, &cfg.surrogate());
            objective += psi * f.value / n_pairs;

            let w_i = psi * f.deriv / (n_pairs * b_q);
            let mut row_sum = 0.0;
            for &j in items {
                let d = squared_hinge(scores.score_of(j) - h_i, cfg.margin).1;
                if d != 0.0 {
                    *coeffs.entry(j).or_insert(0.0) += w_i * d;
                    row_sum += d;
                }
            }
            if row_sum != 0.0 {
                *coeffs.entry(i).or_insert(0.0) -= w_i * row_sum;
            }

            if theoretical && psi_deriv != 0.0 {
                // The selector term psi' f (grad h_i - grad lambda_hat) with
                // grad lambda_hat = -mixed / s: the direct part lands on the
                // anchor, the implicit part accumulates +mixed / s.
                let c2 = psi_deriv * f.value / n_pairs;
                *coeffs.entry(i).or_insert(0.0) += c2;
                mixed_coefficient += c2 / s_new;
            }
        }
        flush_coefficients(state, group, &coeffs, &mut grad)?;
        if mixed_coefficient != 0.0 {
            mixed_grad_accumulate(
                state,
                lambda_prev,
                group,
                items,
                mixed_coefficient,
                &ll,
                &mut grad,
            )?;
        }
    }

    let grad_norm = grad.l2_norm();
    apply_update(state, bank, &grad.grad, cfg)?;
    Ok(StepDiagnostics {
        objective,
        grad_norm,
        pairs: batch.pairs.len(),
    })
}

/// Exponent cap for the SOLC mean-exp estimate.
const SOLC_EXP_CAP: f64 = 30.0;

/// One SOLC warm-up step on the listwise softmax objective. The weight
/// 1/u uses the post-update average.
pub fn solc_step(
    dataset: &Dataset,
    state: &mut ScorerState,
    bank: &mut EstimatorBank,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepDiagnostics> {
    let batch = sample_batch(dataset, cfg, rng);
    solc_step_batch(dataset, state, bank, cfg, &batch)
}

pub fn solc_step_batch(
    dataset: &Dataset,
    state: &mut ScorerState,
    bank: &mut EstimatorBank,
    cfg: &TrainConfig,
    batch: &StepBatch,
) -> Result<StepDiagnostics> {
    if batch.pairs.is_empty() {
        return Ok(StepDiagnostics {
            objective: 0.0,
            grad_norm: 0.0,
            pairs: 0,
        });
    }
    let n_pairs = batch.pairs.len() as f64;
    let u_floor = (-SOLC_EXP_CAP).exp();
    let mut grad = GradBuffer::new(state.params().len());
    let mut objective = 0.0;

    for (&q, anchors) in &batch_by_query(batch) {
        let group = dataset.group_of(q).expect("sampled qid");
        let items = &batch.per_query_items[&q];
        let scores = QueryScores::compute(state, group, items, anchors)?;
        let b_q = items.len() as f64;

        let mut coeffs: BTreeMap<usize, f64> = BTreeMap::new();
        for &i in anchors {
            let h_i = scores.score_of(i);
            let exps: Vec<f64> = items
                .iter()
                .map(|&j| {
                    let mut d = scores.score_of(j) - h_i;
                    if d > SOLC_EXP_CAP {
                        d = SOLC_EXP_CAP;
                        bank.exp_clamps += 1;
                    }
                    d.exp()
                })
                .collect();
            let e_hat = exps.iter().sum::<f64>() / b_q;
            let u_prev = bank.u.get(&(q, i)).copied().unwrap_or(0.0);
            let u_new = ((1.0 - cfg.beta0) * u_prev + cfg.beta0 * e_hat).max(u_floor);
            bank.u.insert((q, i), u_new);
            objective += u_new.ln() / n_pairs;

            let w_i = 1.0 / (u_new * n_pairs * b_q);
            let mut row_sum = 0.0;
            for (&j, &e) in items.iter().zip(&exps) {
                *coeffs.entry(j).or_insert(0.0) += w_i * e;
                row_sum += e;
            }
            *coeffs.entry(i).or_insert(0.0) -= w_i * row_sum;
        }
        flush_coefficients(state, group, &coeffs, &mut grad)?;
    }

    let grad_norm = grad.l2_norm();
    apply_update(state, bank, &grad.grad, cfg)?;
    Ok(StepDiagnostics {
        objective,
        grad_norm,
        pairs: batch.pairs.len(),
    })
}

/// Momentum, then parameter update; the Adam variant additionally scales by
/// the running root-mean-square of the gradient.
pub fn apply_update(
    state: &mut ScorerState,
    bank: &mut EstimatorBank,
    gradient: &[f64],
    cfg: &TrainConfig,
) -> Result<()> {
    if gradient.len() != state.params().len() {
        return Err(Error::Dimension {
            expected: state.params().len(),
            got: gradient.len(),
        });
    }
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("step gradient".into()));
    }
    match cfg.update_rule {
        UpdateRule::Momentum => {
            for ((m, w), &g) in bank.m.iter_mut().zip(state.params_mut()).zip(gradient) {
                *m = (1.0 - cfg.beta1) * *m + cfg.beta1 * g;
                *w -= cfg.eta * *m;
            }
        }
        UpdateRule::Adam { eps, b1, b2 } => {
            for (((m, av), w), &g) in bank
                .m
                .iter_mut()
                .zip(bank.adam_v.iter_mut())
                .zip(state.params_mut())
                .zip(gradient)
            {
                *m = (1.0 - b1) * *m + b1 * g;
                *av = (1.0 - b2) * *av + b2 * g * g;
                *w -= cfg.eta * *m / (av.sqrt() + eps);
            }
        }
    }
    Ok(())
}

/// Seed salts keeping the split, sampler, and re-init streams independent.
const SPLIT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const SAMPLER_SALT: u64 = 0x243f_6a88_85a3_08d3;
const REINIT_SALT: u64 = 0xb7e1_5162_8aed_2a6b;

fn salted_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

/// Splits query ids into (train, eval) by the seed-derived shuffle;
/// eval_fraction 0 means both splits are the full query set.
pub fn split_queries(dataset: &Dataset, cfg: &TrainConfig) -> (Vec<u64>, Vec<u64>) {
    let qids: Vec<u64> = dataset.groups.iter().map(|g| g.query_id).collect();
    let n_eval = (cfg.eval_fraction * qids.len() as f64).floor() as usize;
    if n_eval == 0 {
        return (qids.clone(), qids);
    }
    let mut rng = salted_rng(cfg.seed, SPLIT_SALT);
    let mut eval: Vec<u64> = index::sample(&mut rng, qids.len(), n_eval)
        .into_iter()
        .map(|ix| qids[ix])
        .collect();
    eval.sort_unstable();
    let train: Vec<u64> = qids.iter().copied().filter(|q| !eval.contains(q)).collect();
    (train, eval)
}

fn mean_ndcg_over(state: &ScorerState, dataset: &Dataset, qids: &[u64], k: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for &q in qids {
        let group = dataset.group_of(q)?;
        let scores = score_group(state, group).ok()?;
        if let Some(v) = ndcg_at_k(&scores, group, k.min(group.n_items())) {
            sum += v;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

#[allow(clippy::too_many_arguments)]
fn run_step(
    dataset: &Dataset,
    table: &IdealDcgTable,
    algorithm: Algorithm,
    pool: &[(u64, usize)],
    state: &mut ScorerState,
    bank: &mut EstimatorBank,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepDiagnostics> {
    let batch = sample_batch_from(dataset, pool, cfg, rng);
    match algorithm {
        Algorithm::Song => song_step_batch(dataset, table, state, bank, cfg, &batch),
        Algorithm::KsongTheoretical | Algorithm::KsongPractical => {
            ksong_step_batch(dataset, table, state, bank, cfg, &batch)
        }
        Algorithm::Solc => solc_step_batch(dataset, state, bank, cfg, &batch),
    }
}

/// Full training loop: optional SOLC warm-up (followed by a bank reset and,
/// for MLPs, a final-layer re-init), then the configured algorithm, with
/// per-epoch metrics on the train and eval splits.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if dataset.d_feat() == 0 {
        return Err(Error::Config("dataset has no features".into()));
    }
    let (train_q, eval_q) = split_queries(dataset, cfg);
    let pool: Vec<(u64, usize)> = dataset
        .pair_index
        .iter()
        .copied()
        .filter(|(q, _)| train_q.binary_search(q).is_ok())
        .collect();
    if pool.is_empty() {
        return Err(Error::Config(
            "training split contains no relevant pairs".into(),
        ));
    }
    if matches!(
        cfg.algorithm,
        Algorithm::KsongTheoretical | Algorithm::KsongPractical
    ) {
        if let Some(g) = dataset.groups.iter().find(|g| g.n_items() < cfg.k) {
            return Err(Error::Config(format!(
                "K={} exceeds the {} items of query {}",
                cfg.k,
                g.n_items(),
                g.query_id
            )));
        }
    }

    let table = IdealDcgTable::build(dataset, &[cfg.k]);
    let mut rng = salted_rng(cfg.seed, SAMPLER_SALT);
    let mut state = ScorerState::init(cfg.arch.clone(), dataset.d_feat(), cfg.seed);
    let mut bank = EstimatorBank::new(state.params().len());
    let steps_per_epoch = pool.len().div_ceil(cfg.pairs_per_step).max(1);

    let mut records = Vec::new();
    let mut epoch_seconds = Vec::new();

    for warm_epoch in 0..cfg.warmup_epochs {
        let t0 = Instant::now();
        for _ in 0..steps_per_epoch {
            run_step(
                dataset,
                &table,
                Algorithm::Solc,
                &pool,
                &mut state,
                &mut bank,
                cfg,
                &mut rng,
            )?;
        }
        epoch_seconds.push(t0.elapsed().as_secs_f64());
        push_ndcg_records(
            &mut records,
            &state,
            dataset,
            &train_q,
            &eval_q,
            cfg,
            warm_epoch,
        );
    }
    if cfg.warmup_epochs > 0 {
        bank = EstimatorBank::new(state.params().len());
        state.reinit_final_layer(cfg.seed ^ REINIT_SALT);
    }

    for epoch in cfg.warmup_epochs..cfg.warmup_epochs + cfg.epochs {
        let t0 = Instant::now();
        let mut obj_sum = 0.0;
        let mut norm_sum = 0.0;
        for _ in 0..steps_per_epoch {
            let diag = run_step(
                dataset,
                &table,
                cfg.algorithm,
                &pool,
                &mut state,
                &mut bank,
                cfg,
                &mut rng,
            )?;
            obj_sum += diag.objective;
            norm_sum += diag.grad_norm;
        }
        epoch_seconds.push(t0.elapsed().as_secs_f64());
        records.push(MetricsRecord {
            epoch,
            split: "train".into(),
            metric: "objective".into(),
            value: obj_sum / steps_per_epoch as f64,
        });
        records.push(MetricsRecord {
            epoch,
            split: "train".into(),
            metric: "grad_norm".into(),
            value: norm_sum / steps_per_epoch as f64,
        });
        push_ndcg_records(&mut records, &state, dataset, &train_q, &eval_q, cfg, epoch);
    }

    Ok(TrainOutput {
        state,
        bank,
        records,
        epoch_seconds,
        rng,
    })
}

fn push_ndcg_records(
    records: &mut Vec<MetricsRecord>,
    state: &ScorerState,
    dataset: &Dataset,
    train_q: &[u64],
    eval_q: &[u64],
    cfg: &TrainConfig,
    epoch: usize,
) {
    for &k in &cfg.eval_ks {
        for (split, qids) in [("train", train_q), ("eval", eval_q)] {
            if let Some(v) = mean_ndcg_over(state, dataset, qids, k) {
                records.push(MetricsRecord {
                    epoch,
                    split: split.into(),
                    metric: format!("ndcg@{k}"),
                    value: v,
                });
            }
        }
    }
}

/// Serialized training state: scorer, estimator bank, and the exact RNG
/// position, sufficient to resume a run bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub state: ScorerState,
    pub bank: EstimatorBank,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: (u64, u64),
}

impl Checkpoint {
    pub fn capture(state: &ScorerState, bank: &EstimatorBank, rng: &ChaCha8Rng) -> Self {
        let pos = rng.get_word_pos();
        Checkpoint {
            state: state.clone(),
            bank: bank.clone(),
            rng_seed: rng.get_seed(),
            rng_word_pos: ((pos >> 64) as u64, pos as u64),
        }
    }

    pub fn restore_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.rng_seed);
        rng.set_word_pos(((self.rng_word_pos.0 as u128) << 64) | self.rng_word_pos.1 as u128);
        rng
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;
    use crate::surrogate::g_minibatch;
    use rand::Rng;
    use std::collections::HashMap;

    fn small_dataset() -> Dataset {
        synth_generate(6, 12, 3, 3, 7).unwrap()
    }

    fn full_batch_cfg(dataset: &Dataset) -> TrainConfig {
        TrainConfig {
            beta0: 1.0,
            beta1: 1.0,
            pairs_per_step: dataset.n_pairs(),
            items_per_query: dataset.groups.iter().map(|g| g.n_items()).max().unwrap(),
            k: 3,
            ..Default::default()
        }
    }

    #[test]
    fn sample_full_item_budget_returns_whole_lists() {
        let ds = small_dataset();
        let cfg = full_batch_cfg(&ds);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_batch(&ds, &cfg, &mut rng);
        assert_eq!(batch.pairs, ds.pair_index);
        for (q, items) in &batch.per_query_items {
            let n = ds.group_of(*q).unwrap().n_items();
            assert_eq!(items, &(0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn sample_single_query_flat_takes_only_that_query() {
        let ds = synth_generate(1, 10, 2, 2, 3).unwrap();
        let cfg = TrainConfig {
            pairs_per_step: 2,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batch = sample_batch(&ds, &cfg, &mut rng);
        assert_eq!(batch.pairs.len(), 2);
        assert!(batch.pairs.iter().all(|&(q, _)| q == 1));
    }

    #[test]
    fn sample_flat_frequencies_are_uniform() {
        let ds = small_dataset();
        let cfg = TrainConfig {
            pairs_per_step: 4,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts: HashMap<(u64, usize), u64> = HashMap::new();
        let draws = 100_000;
        for _ in 0..draws {
            for p in sample_batch(&ds, &cfg, &mut rng).pairs {
                *counts.entry(p).or_insert(0) += 1;
            }
        }
        // Each draw picks 4 of n pairs without replacement: per-pair count is
        // Binomial(draws, 4/n). The bound is 4 sigma because roughly two
        // dozen pairs are checked simultaneously.
        let n = ds.n_pairs() as f64;
        let p = 4.0 / n;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for pair in &ds.pair_index {
            let c = counts.get(pair).copied().unwrap_or(0) as f64;
            assert!(
                (c - mean).abs() < 4.0 * sigma,
                "pair {pair:?}: {c} vs mean {mean}"
            );
        }
    }

    #[test]
    fn sample_stratified_counts() {
        let ds = small_dataset();
        let cfg = TrainConfig {
            sampling: SamplingMode::PerQueryStratified,
            pairs_per_step: 6,
            relevant_per_query: 2,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = sample_batch(&ds, &cfg, &mut rng);
        let queries: std::collections::BTreeSet<u64> =
            batch.pairs.iter().map(|&(q, _)| q).collect();
        assert_eq!(queries.len(), 3);
        for q in queries {
            let n = batch.pairs.iter().filter(|&&(pq, _)| pq == q).count();
            assert_eq!(n, 2);
        }
    }

    #[test]
    fn include_self_adds_anchors_to_item_sets() {
        let ds = small_dataset();
        let cfg = TrainConfig {
            include_self: true,
            items_per_query: 3,
            pairs_per_step: 8,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = sample_batch(&ds, &cfg, &mut rng);
        for &(q, i) in &batch.pairs {
            assert!(batch.per_query_items[&q].contains(&i));
        }
    }

    #[test]
    fn song_u_update_follows_moving_average() {
        // Single query, single item: the anchor's mini-batch rank estimate is
        // the self term c^2 alone. With c^2 = 0.6, beta0 = 0.3 and a seeded
        // slot of 0.2 the updated slot is 0.3*0.6 + 0.7*0.2.
        let group = QueryGroup::new(1, vec![vec![1.0]], vec![1]).unwrap();
        let ds = Dataset::new(vec![group]).unwrap();
        let table = IdealDcgTable::build(&ds, &[1]);
        let cfg = TrainConfig {
            beta0: 0.3,
            margin: 0.6f64.sqrt(),
            pairs_per_step: 1,
            items_per_query: 1,
            k: 1,
            ..Default::default()
        };
        let mut state = ScorerState::zeros(Arch::Linear, 1);
        let mut bank = EstimatorBank::new(1);
        bank.u.insert((1, 0), 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        song_step(&ds, &table, &mut state, &mut bank, &cfg, &mut rng).unwrap();
        assert!((bank.u[&(1, 0)] - 0.32).abs() < 1e-15);
    }

    #[test]
    fn momentum_equals_gradient_when_beta1_is_one() {
        let ds = small_dataset();
        let table = IdealDcgTable::build(&ds, &[3]);
        let cfg = TrainConfig {
            beta1: 1.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut state = ScorerState::init(Arch::Linear, ds.d_feat(), 4);
        let before = state.params().to_vec();
        let mut bank = EstimatorBank::new(ds.d_feat());
        song_step(&ds, &table, &mut state, &mut bank, &cfg, &mut rng).unwrap();
        for ((w0, w1), m) in before.iter().zip(state.params()).zip(&bank.m) {
            assert!(((w0 - w1) / cfg.eta - m).abs() < 1e-12);
        }
    }

    #[test]
    fn song_matches_direct_minibatch_estimates() {
        // Cross-check the fused inner loop against the standalone rank
        // estimator on every sampled pair.
        let ds = small_dataset();
        let table = IdealDcgTable::build(&ds, &[3]);
        let cfg = TrainConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut state = ScorerState::init(Arch::Linear, ds.d_feat(), 12);
        let batch = sample_batch(&ds, &cfg, &mut rng.clone());
        let mut expected = BTreeMap::new();
        for &(q, i) in &batch.pairs {
            let group = ds.group_of(q).unwrap();
            let g = g_minibatch(
                &state,
                group,
                i,
                &batch.per_query_items[&q],
                &cfg.surrogate(),
            )
            .unwrap();
            expected.insert((q, i), cfg.beta0 * g);
        }
        let mut bank = EstimatorBank::new(ds.d_feat());
        song_step(&ds, &table, &mut state, &mut bank, &cfg, &mut rng).unwrap();
        for (key, want) in expected {
            assert!((bank.u[&key] - want).abs() < 1e-14, "slot {key:?}");
        }
    }

    #[test]
    fn step_touches_only_sampled_slots() {
        let ds = small_dataset();
        let table = IdealDcgTable::build(&ds, &[3]);
        let cfg = TrainConfig {
            algorithm: Algorithm::KsongPractical,
            pairs_per_step: 3,
            k: 3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut state = ScorerState::init(Arch::Linear, ds.d_feat(), 6);
        let upcoming = sample_batch(&ds, &cfg, &mut rng.clone());

        let mut bank = EstimatorBank::new(ds.d_feat());
        for (ix, &(q, i)) in ds.pair_index.iter().enumerate() {
            bank.u.insert((q, i), 100.0 + ix as f64);
        }
        for g in &ds.groups {
            bank.lambda.insert(g.query_id, -7.0);
        }
        let u_before = bank.u.clone();
        ksong_step(&ds, &table, &mut state, &mut bank, &cfg, &mut rng).unwrap();

        for &(q, i) in &ds.pair_index {
            let touched = upcoming.pairs.contains(&(q, i));
            assert_eq!(
                bank.u[&(q, i)] != u_before[&(q, i)],
                touched,
                "u slot ({q}, {i})"
            );
        }
        for g in &ds.groups {
            let touched = upcoming.per_query_items.contains_key(&g.query_id);
            assert_eq!(bank.lambda[&g.query_id] != -7.0, touched);
            assert_eq!(bank.s.contains_key(&g.query_id), touched);
        }
    }

    #[test]
    fn ksong_variants_coincide_when_selector_saturates_low() {
        // Positive features with a negative weight vector force every score
        // below the initial threshold of 0, where squared-relu psi and psi'
        // both vanish: the implicit term is exactly zero and the two variants
        // take the same (here: null) parameter step, while the lower-level
        // averages still move.
        let mut groups = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for q in 1..=2u64 {
            let rows: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..2).map(|_| rng.gen_range(0.5..1.5)).collect())
                .collect();
            groups.push(QueryGroup::new(q, rows, vec![2, 1, 0, 1, 0, 0]).unwrap());
        }
        let ds = Dataset::new(groups).unwrap();
        let table = IdealDcgTable::build(&ds, &[2]);
        let run = |variant: Algorithm| {
            let cfg = TrainConfig {
                algorithm: variant,
                k: 2,
                ..Default::default()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let mut state = ScorerState::zeros(Arch::Linear, 2);
            state.params_mut().copy_from_slice(&[-1.0, -0.7]);
            let mut bank = EstimatorBank::new(2);
            ksong_step(&ds, &table, &mut state, &mut bank, &cfg, &mut rng).unwrap();
            (state.params().to_vec(), bank)
        };
        let (w_th, bank_th) = run(Algorithm::KsongTheoretical);
        let (w_pr, bank_pr) = run(Algorithm::KsongPractical);
        assert_eq!(w_th, w_pr);
        assert_eq!(w_th, vec![-1.0, -0.7]);
        assert_eq!(bank_th, bank_pr);
        assert!(bank_th.lambda.values().all(|&l| l != 0.0));
    }

    #[test]
    fn ksong_beta2_one_adopts_batch_hessian() {
        let ds = small_dataset();
        let table = IdealDcgTable::build(&ds, &[3]);
        let cfg = TrainConfig {
            algorithm: Algorithm::KsongPractical,
            beta2: 1.0,
            k: 3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut state = ScorerState::init(Arch::Linear, ds.d_feat(), 10);
        let batch = sample_batch(&ds, &cfg, &mut rng.clone());
        let mut expected = BTreeMap::new();
        for (&q, items) in &batch.per_query_items {
            let group = ds.group_of(q).unwrap();
            let scores: Vec<f64> = items
                .iter()
                .map(|&j| state.score(group.feature_row(j)).unwrap())
                .collect();
            let h = lower_hess(0.0, &scores, group.n_items(), &cfg.lower_level());
            expected.insert(q, h.max(cfg.tau2));
        }
        // Seed s so the first-touch path is not taken.
        let mut bank = EstimatorBank::new(ds.d_feat());
        for g in &ds.groups {
            bank.s.insert(g.query_id, 5.0);
        }
        ksong_step(&ds, &table, &mut state, &mut bank, &cfg, &mut rng).unwrap();
        for (q, want) in expected {
            assert!((bank.s[&q] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn ksong_rejects_oversized_k() {
        let ds = small_dataset();
        let cfg = TrainConfig {
            algorithm: Algorithm::KsongPractical,
            k: 13,
            epochs: 1,
            ..Default::default()
        };
        assert!(matches!(train(&ds, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn solc_identical_items_give_zero_gradient() {
        let rows = vec![vec![0.4, -0.2]; 5];
        let group = QueryGroup::new(1, rows, vec![1, 1, 0, 0, 0]).unwrap();
        let ds = Dataset::new(vec![group]).unwrap();
        let cfg = TrainConfig {
            algorithm: Algorithm::Solc,
            pairs_per_step: 2,
            items_per_query: 5,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = ScorerState::init(Arch::Linear, 2, 3);
        let before = state.params().to_vec();
        let mut bank = EstimatorBank::new(2);
        let diag = solc_step(&ds, &mut state, &mut bank, &cfg, &mut rng).unwrap();
        // The gradient cancels item against anchor; only rounding residue of
        // order 1e-16 survives the coefficient sums.
        assert!(diag.grad_norm < 1e-12);
        for (w0, w1) in before.iter().zip(state.params()) {
            assert!((w0 - w1).abs() < 1e-12);
        }
    }

    #[test]
    fn solc_estimates_stay_positive_and_convex() {
        let ds = small_dataset();
        let cfg = TrainConfig {
            algorithm: Algorithm::Solc,
            beta0: 0.4,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut state = ScorerState::init(Arch::Linear, ds.d_feat(), 13);
        let mut bank = EstimatorBank::new(ds.d_feat());
        for _ in 0..20 {
            solc_step(&ds, &mut state, &mut bank, &cfg, &mut rng).unwrap();
        }
        assert!(bank.u.values().all(|&u| u > 0.0 && u.is_finite()));
    }

    #[test]
    fn apply_update_contracts() {
        let mut state = ScorerState::zeros(Arch::Linear, 2);
        state.params_mut().copy_from_slice(&[1.0, -2.0]);
        let mut bank = EstimatorBank::new(2);
        let cfg = TrainConfig {
            beta1: 1.0,
            eta: 0.5,
            ..Default::default()
        };
        apply_update(&mut state, &mut bank, &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(state.params(), &[1.0, -2.0]);
        apply_update(&mut state, &mut bank, &[2.0, -4.0], &cfg).unwrap();
        assert_eq!(state.params(), &[0.0, 0.0]);
        assert!(matches!(
            apply_update(&mut state, &mut bank, &[f64::NAN, 0.0], &cfg),
            Err(Error::NonFinite(_))
        ));
        assert!(apply_update(&mut state, &mut bank, &[1.0], &cfg).is_err());
    }

    #[test]
    fn adam_update_scales_by_running_rms() {
        let mut state = ScorerState::zeros(Arch::Linear, 1);
        let mut bank = EstimatorBank::new(1);
        let cfg = TrainConfig {
            eta: 0.1,
            update_rule: UpdateRule::Adam {
                eps: 1e-8,
                b1: 1.0,
                b2: 1.0,
            },
            ..Default::default()
        };
        apply_update(&mut state, &mut bank, &[4.0], &cfg).unwrap();
        // m = 4, adam_v = 16: step is eta * 4 / (4 + eps).
        assert!((state.params()[0] + 0.1 * 4.0 / (4.0 + 1e-8)).abs() < 1e-12);
    }

    #[test]
    fn train_zero_epochs_returns_initial_state() {
        let ds = small_dataset();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let out = train(&ds, &cfg).unwrap();
        let fresh = ScorerState::init(Arch::Linear, ds.d_feat(), cfg.seed);
        assert_eq!(out.state.params(), fresh.params());
        assert!(out.records.is_empty());
    }

    #[test]
    fn train_is_deterministic_across_runs() {
        let ds = small_dataset();
        for algorithm in [
            Algorithm::Song,
            Algorithm::KsongTheoretical,
            Algorithm::KsongPractical,
            Algorithm::Solc,
        ] {
            let cfg = TrainConfig {
                algorithm,
                epochs: 2,
                warmup_epochs: 1,
                k: 3,
                arch: Arch::Mlp { hidden: vec![4] },
                ..Default::default()
            };
            let a = train(&ds, &cfg).unwrap();
            let b = train(&ds, &cfg).unwrap();
            assert_eq!(a.state.params(), b.state.params());
            assert_eq!(a.records, b.records);
        }
    }

    #[test]
    fn train_split_is_disjoint_and_metrics_cover_both() {
        let ds = small_dataset();
        let cfg = TrainConfig {
            epochs: 1,
            eval_fraction: 0.34,
            ..Default::default()
        };
        let (train_q, eval_q) = split_queries(&ds, &cfg);
        assert_eq!(train_q.len(), 4);
        assert_eq!(eval_q.len(), 2);
        assert!(train_q.iter().all(|q| !eval_q.contains(q)));
        let out = train(&ds, &cfg).unwrap();
        assert!(out
            .records
            .iter()
            .any(|r| r.split == "eval" && r.metric == "ndcg@10"));
        assert!(out
            .records
            .iter()
            .any(|r| r.split == "train" && r.metric == "objective"));
    }

    #[test]
    fn checkpoint_roundtrip_resumes_bit_identically() {
        let ds = small_dataset();
        let table = IdealDcgTable::build(&ds, &[3]);
        let cfg = TrainConfig {
            algorithm: Algorithm::KsongTheoretical,
            k: 3,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut state = ScorerState::init(Arch::Mlp { hidden: vec![3] }, ds.d_feat(), 99);
        let mut bank = EstimatorBank::new(state.params().len());
        ksong_step(&ds, &table, &mut state, &mut bank, &cfg, &mut rng).unwrap();

        let json = Checkpoint::capture(&state, &bank, &rng).to_json().unwrap();
        ksong_step(&ds, &table, &mut state, &mut bank, &cfg, &mut rng).unwrap();
        let reference = state.params().to_vec();

        let loaded = Checkpoint::from_json(&json).unwrap();
        let mut rng2 = loaded.restore_rng();
        let mut state2 = loaded.state;
        let mut bank2 = loaded.bank;
        ksong_step(&ds, &table, &mut state2, &mut bank2, &cfg, &mut rng2).unwrap();
        assert_eq!(state2.params(), &reference[..]);
        assert_eq!(bank2, bank);
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let ok = TrainConfig::default();
        ok.validate().unwrap();
        for bad in [
            TrainConfig {
                beta0: 0.0,
                ..ok.clone()
            },
            TrainConfig {
                beta1: 1.5,
                ..ok.clone()
            },
            TrainConfig {
                eta: -1.0,
                ..ok.clone()
            },
            TrainConfig {
                eval_fraction: 1.0,
                ..ok.clone()
            },
            TrainConfig {
                pairs_per_step: 0,
                ..ok.clone()
            },
            TrainConfig {
                eval_ks: vec![],
                ..ok.clone()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
