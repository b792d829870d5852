//! Verification oracles and desk-scale test batteries.
//!
//! Every oracle recomputes its quantity from its own inline formula over full
//! lists; none calls the estimator, solver, or assembly code it is used to
//! check. Batteries compare production outputs against oracle values or
//! central differences and aggregate the worst case into one report row, so
//! a report stays readable while still covering hundreds of instances.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::data::{Dataset, QueryGroup};
use crate::optim::{
    ksong_step_batch, solc_step_batch, song_step_batch, Algorithm, EstimatorBank, StepBatch,
    TrainConfig,
};
use crate::scorer::{Arch, GradBuffer, ScorerState};
use crate::surrogate::{psi_eval, PsiKind, SurrogateConfig};
use crate::topk::{
    exact_lambda, implicit_lambda_grad_accumulate, lower_grad, lower_hess, lower_value,
    solve_lambda_hat, LowerLevelConfig,
};
use crate::{Error, Result};

/// Deliberate defect injections for exercising the harness itself: a
/// verification run with a fault active must fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyFault {
    None,
    /// Flips the sign of the lower-level gradient as seen by its battery.
    LowerGradSign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub battery: String,
    pub case: String,
    pub passed: bool,
    /// Worst observed error or margin for the case.
    pub observed: f64,
    pub bound: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub rows: Vec<CaseRow>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn push(
        &mut self,
        battery: &str,
        case: &str,
        observed: f64,
        bound: f64,
        detail: impl Into<String>,
    ) {
        self.rows.push(CaseRow {
            battery: battery.into(),
            case: case.into(),
            passed: observed <= bound,
            observed,
            bound,
            detail: detail.into(),
        });
    }

    pub fn merge(&mut self, other: OracleReport) {
        self.rows.extend(other.rows);
    }

    /// One JSON object per line, one line per row.
    pub fn to_json_lines(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("row serializes"))
            .map(|s| s + "\n")
            .collect()
    }

    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<14} {:<34} {:<6} {:>12} {:>10}  detail\n",
            "battery", "case", "status", "observed", "bound"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<14} {:<34} {:<6} {:>12.3e} {:>10.1e}  {}\n",
                r.battery,
                r.case,
                if r.passed { "pass" } else { "FAIL" },
                r.observed,
                r.bound,
                r.detail
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Finite-difference harness.

pub fn central_diff<F: Fn(f64) -> f64>(f: F, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// Central-difference gradient of a scalar function of the parameters.
pub fn fd_grad_params<F: Fn(&ScorerState) -> Result<f64>>(
    f: F,
    state: &ScorerState,
    step: f64,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; state.params().len()];
    let mut probe = state.clone();
    for (j, slot) in grad.iter_mut().enumerate() {
        let w0 = probe.params()[j];
        probe.params_mut()[j] = w0 + step;
        let plus = f(&probe)?;
        probe.params_mut()[j] = w0 - step;
        let minus = f(&probe)?;
        probe.params_mut()[j] = w0;
        *slot = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// Relative L2 deviation ||a - b|| / max(||b||, floor).
pub fn rel_err_vec(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "rel_err_vec: length mismatch");
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-12)
}

/// Scalar deviation |a - b| / max(1, |b|).
pub fn rel_err_scalar(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

// ---------------------------------------------------------------------------
// Inline oracle formulas. These deliberately restate every definition.

fn o_hinge(d: f64, c: f64) -> f64 {
    let t = d + c;
    if t > 0.0 {
        t * t
    } else {
        0.0
    }
}

/// Full-list rank estimate g(w; x_i) = (1/N) sum_j hinge(h_j - h_i)^2,
/// self term included.
fn o_rank_estimate(scores: &[f64], i: usize, c: f64) -> f64 {
    scores
        .iter()
        .map(|&h| o_hinge(h - scores[i], c))
        .sum::<f64>()
        / scores.len() as f64
}

/// f(u) = (1/Z) (1 - 2^y) / log2(N u + 1).
fn o_f(u: f64, y: u32, z: f64, n: f64) -> f64 {
    (1.0 - (y as f64).exp2()) / (z * (n * u + 1.0).log2())
}

fn o_f_deriv(u: f64, y: u32, z: f64, n: f64) -> f64 {
    let a = (1.0 - (y as f64).exp2()) / z;
    let log_term = (n * u + 1.0).log2();
    -a * n * std::f64::consts::LOG2_E / ((n * u + 1.0) * log_term * log_term)
}

/// Ideal DCG over the top `k` positions (all when `k` is None).
fn o_ideal_dcg(group: &QueryGroup, k: Option<usize>) -> f64 {
    let mut gains: Vec<f64> = group
        .relevances
        .iter()
        .map(|&y| (y as f64).exp2() - 1.0)
        .collect();
    gains.sort_by(|a, b| b.partial_cmp(a).unwrap());
    gains
        .iter()
        .take(k.unwrap_or(gains.len()))
        .enumerate()
        .map(|(p, g)| g / ((p + 2) as f64).log2())
        .sum()
}

fn o_sigma(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn o_psi(s: f64, cfg: &SurrogateConfig) -> (f64, f64) {
    match cfg.psi {
        PsiKind::SquaredRelu => {
            if s > 0.0 {
                (s * s, 2.0 * s)
            } else {
                (0.0, 0.0)
            }
        }
        PsiKind::SigmoidLike => {
            let a = 8.0 / cfg.psi_scale;
            let sig = o_sigma(a * (s - cfg.psi_scale / 2.0));
            (sig, a * sig * (1.0 - sig))
        }
    }
}

/// Full lower-level gradient K/N + tau2 lambda - (1/N) sum sigma((h-l)/tau1).
fn o_lower_grad(lambda: f64, scores: &[f64], ll: &LowerLevelConfig) -> f64 {
    let n = scores.len() as f64;
    let mean_sigma = scores
        .iter()
        .map(|&h| o_sigma((h - lambda) / ll.tau1))
        .sum::<f64>()
        / n;
    ll.k as f64 / n + ll.tau2 * lambda - mean_sigma
}

fn o_lower_hess(lambda: f64, scores: &[f64], ll: &LowerLevelConfig) -> f64 {
    let n = scores.len() as f64;
    let data = scores
        .iter()
        .map(|&h| {
            let s = o_sigma((h - lambda) / ll.tau1);
            s * (1.0 - s)
        })
        .sum::<f64>();
    ll.tau2 + data / (ll.tau1 * n)
}

/// Bisection minimizer of the smoothed lower level over the full list,
/// independent of the production Newton solver.
pub fn oracle_lambda_hat(scores: &[f64], ll: &LowerLevelConfig) -> f64 {
    let mut lo = scores.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let mut span = hi - lo;
    while o_lower_grad(lo, scores, ll) > 0.0 {
        lo -= span;
        span *= 2.0;
    }
    span = hi - lo;
    while o_lower_grad(hi, scores, ll) < 0.0 {
        hi += span;
        span *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if o_lower_grad(mid, scores, ll) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn group_scores(state: &ScorerState, group: &QueryGroup) -> Result<Vec<f64>> {
    (0..group.n_items())
        .map(|i| state.score(group.feature_row(i)))
        .collect()
}

/// Exact full-batch objective F(w) = (1/|S|) sum over relevant pairs of
/// f(g(w; pair)), no clamping (g >= c^2/N > 0 holds by the self term).
pub fn oracle_objective_f(
    state: &ScorerState,
    dataset: &Dataset,
    scfg: &SurrogateConfig,
) -> Result<f64> {
    if dataset.n_pairs() == 0 {
        return Err(Error::Config(
            "objective needs at least one relevant pair".into(),
        ));
    }
    let mut total = 0.0;
    for &(q, i) in &dataset.pair_index {
        let group = dataset.group_of(q).expect("pair qid");
        let scores = group_scores(state, group)?;
        let u = o_rank_estimate(&scores, i, scfg.margin);
        let z = o_ideal_dcg(group, None);
        total += o_f(u, group.relevances[i], z, group.n_items() as f64);
    }
    Ok(total / dataset.n_pairs() as f64)
}

/// Exact full-batch gradient of F.
pub fn oracle_grad_f(
    state: &ScorerState,
    dataset: &Dataset,
    scfg: &SurrogateConfig,
) -> Result<Vec<f64>> {
    if dataset.n_pairs() == 0 {
        return Err(Error::Config(
            "objective needs at least one relevant pair".into(),
        ));
    }
    let mut buffer = GradBuffer::new(state.params().len());
    let n_pairs = dataset.n_pairs() as f64;
    for g in &dataset.groups {
        let scores = group_scores(state, g)?;
        let n = g.n_items() as f64;
        let z = o_ideal_dcg(g, None);
        let mut coeffs: BTreeMap<usize, f64> = BTreeMap::new();
        for &i in &g.relevant {
            let u = o_rank_estimate(&scores, i, scfg.margin);
            let w = o_f_deriv(u, g.relevances[i], z, n) / (n_pairs * n);
            let mut row_sum = 0.0;
            for (j, &h_j) in scores.iter().enumerate() {
                let t = h_j - scores[i] + scfg.margin;
                let d = if t > 0.0 { 2.0 * t } else { 0.0 };
                if d != 0.0 {
                    *coeffs.entry(j).or_insert(0.0) += w * d;
                    row_sum += d;
                }
            }
            if row_sum != 0.0 {
                *coeffs.entry(i).or_insert(0.0) -= w * row_sum;
            }
        }
        for (&item, &c) in &coeffs {
            state.accumulate_score_grad(g.feature_row(item), c, &mut buffer)?;
        }
    }
    Ok(buffer.grad)
}

/// Exact top-K objective F_K(w) = (1/|S|) sum psi(h_i - lambda_hat_q) f(g),
/// with lambda_hat solved over the full list by the oracle bisection.
pub fn oracle_objective_fk(
    state: &ScorerState,
    dataset: &Dataset,
    scfg: &SurrogateConfig,
    ll: &LowerLevelConfig,
) -> Result<f64> {
    if dataset.n_pairs() == 0 {
        return Err(Error::Config(
            "objective needs at least one relevant pair".into(),
        ));
    }
    let mut total = 0.0;
    for g in &dataset.groups {
        if g.relevant.is_empty() {
            continue;
        }
        let scores = group_scores(state, g)?;
        let lambda = oracle_lambda_hat(&scores, ll);
        let z_k = o_ideal_dcg(g, Some(ll.k.min(g.n_items())));
        for &i in &g.relevant {
            let u = o_rank_estimate(&scores, i, scfg.margin);
            let (psi, _) = o_psi(scores[i] - lambda, scfg);
            total += psi * o_f(u, g.relevances[i], z_k, g.n_items() as f64);
        }
    }
    Ok(total / dataset.n_pairs() as f64)
}

/// Exact gradient of F_K including the implicit threshold term
/// psi' f (grad h_i - grad lambda_hat), grad lambda_hat = -mixed / hess.
pub fn oracle_grad_fk(
    state: &ScorerState,
    dataset: &Dataset,
    scfg: &SurrogateConfig,
    ll: &LowerLevelConfig,
) -> Result<Vec<f64>> {
    if dataset.n_pairs() == 0 {
        return Err(Error::Config(
            "objective needs at least one relevant pair".into(),
        ));
    }
    let mut buffer = GradBuffer::new(state.params().len());
    let n_pairs = dataset.n_pairs() as f64;
    for g in &dataset.groups {
        if g.relevant.is_empty() {
            continue;
        }
        let scores = group_scores(state, g)?;
        let n = g.n_items() as f64;
        let lambda = oracle_lambda_hat(&scores, ll);
        let hess = o_lower_hess(lambda, &scores, ll);
        let z_k = o_ideal_dcg(g, Some(ll.k.min(g.n_items())));

        let mut coeffs: BTreeMap<usize, f64> = BTreeMap::new();
        let mut mixed_total = 0.0;
        for &i in &g.relevant {
            let u = o_rank_estimate(&scores, i, scfg.margin);
            let (psi, psi_deriv) = o_psi(scores[i] - lambda, scfg);
            let f_val = o_f(u, g.relevances[i], z_k, n);
            let f_der = o_f_deriv(u, g.relevances[i], z_k, n);

            let w = psi * f_der / (n_pairs * n);
            let mut row_sum = 0.0;
            for (j, &h_j) in scores.iter().enumerate() {
                let t = h_j - scores[i] + scfg.margin;
                let d = if t > 0.0 { 2.0 * t } else { 0.0 };
                if d != 0.0 {
                    *coeffs.entry(j).or_insert(0.0) += w * d;
                    row_sum += d;
                }
            }
            if row_sum != 0.0 {
                *coeffs.entry(i).or_insert(0.0) -= w * row_sum;
            }

            if psi_deriv != 0.0 {
                let c2 = psi_deriv * f_val / n_pairs;
                *coeffs.entry(i).or_insert(0.0) += c2;
                mixed_total += c2 / hess;
            }
        }
        for (&item, &c) in &coeffs {
            state.accumulate_score_grad(g.feature_row(item), c, &mut buffer)?;
        }
        // -grad lambda_hat = mixed / hess, with
        // mixed = -(1/(tau1 N)) sum sigma (1 - sigma) grad h_j.
        if mixed_total != 0.0 {
            for (j, &h_j) in scores.iter().enumerate() {
                let s = o_sigma((h_j - lambda) / ll.tau1);
                let c = -mixed_total * s * (1.0 - s) / (ll.tau1 * n);
                state.accumulate_score_grad(g.feature_row(j), c, &mut buffer)?;
            }
        }
    }
    Ok(buffer.grad)
}

/// Warm-up objective (1/|S|) sum over pairs of ln((1/N) sum_j e^{h_j - h_i}).
pub fn oracle_warmup_objective(state: &ScorerState, dataset: &Dataset) -> Result<f64> {
    if dataset.n_pairs() == 0 {
        return Err(Error::Config(
            "objective needs at least one relevant pair".into(),
        ));
    }
    let mut total = 0.0;
    for &(q, i) in &dataset.pair_index {
        let group = dataset.group_of(q).expect("pair qid");
        let scores = group_scores(state, group)?;
        let mean_exp =
            scores.iter().map(|&h| (h - scores[i]).exp()).sum::<f64>() / scores.len() as f64;
        total += mean_exp.ln();
    }
    Ok(total / dataset.n_pairs() as f64)
}

/// Exact gradient of the warm-up objective: per pair, softmax weights over
/// the list minus a unit weight on the anchor.
pub fn oracle_warmup_grad(state: &ScorerState, dataset: &Dataset) -> Result<Vec<f64>> {
    if dataset.n_pairs() == 0 {
        return Err(Error::Config(
            "objective needs at least one relevant pair".into(),
        ));
    }
    let mut buffer = GradBuffer::new(state.params().len());
    let n_pairs = dataset.n_pairs() as f64;
    for g in &dataset.groups {
        let scores = group_scores(state, g)?;
        let mut coeffs: BTreeMap<usize, f64> = BTreeMap::new();
        for &i in &g.relevant {
            let exps: Vec<f64> = scores.iter().map(|&h| (h - scores[i]).exp()).collect();
            let denom: f64 = exps.iter().sum();
            for (j, &e) in exps.iter().enumerate() {
                *coeffs.entry(j).or_insert(0.0) += e / (denom * n_pairs);
            }
            *coeffs.entry(i).or_insert(0.0) -= 1.0 / n_pairs;
        }
        for (&item, &c) in &coeffs {
            state.accumulate_score_grad(g.feature_row(item), c, &mut buffer)?;
        }
    }
    Ok(buffer.grad)
}

/// Reference trainer: plain full-batch gradient descent on F from the same
/// seeded initialization the stochastic trainer uses.
pub fn oracle_train_full(
    dataset: &Dataset,
    cfg: &TrainConfig,
    steps: usize,
) -> Result<ScorerState> {
    let mut state = ScorerState::init(cfg.arch.clone(), dataset.d_feat(), cfg.seed);
    let scfg = cfg.surrogate();
    for _ in 0..steps {
        let grad = oracle_grad_f(&state, dataset, &scfg)?;
        for (w, g) in state.params_mut().iter_mut().zip(&grad) {
            *w -= cfg.eta * g;
        }
    }
    Ok(state)
}

/// Seeds an estimator bank with converged values: u at the exact full-list
/// rank estimate, lambda at the oracle threshold, s at the exact Hessian
/// there. With a full batch this makes one stochastic step reproduce the
/// exact gradient.
pub fn prime_bank_full(
    state: &ScorerState,
    dataset: &Dataset,
    cfg: &TrainConfig,
) -> Result<EstimatorBank> {
    let mut bank = EstimatorBank::new(state.params().len());
    let ll = cfg.lower_level();
    for g in &dataset.groups {
        if g.relevant.is_empty() {
            continue;
        }
        let scores = group_scores(state, g)?;
        for &i in &g.relevant {
            bank.u
                .insert((g.query_id, i), o_rank_estimate(&scores, i, cfg.margin));
        }
        let lambda = oracle_lambda_hat(&scores, &ll);
        bank.lambda.insert(g.query_id, lambda);
        bank.s
            .insert(g.query_id, o_lower_hess(lambda, &scores, &ll));
    }
    Ok(bank)
}

/// The full batch: every relevant pair, every item of every sampled query.
pub fn full_batch(dataset: &Dataset) -> StepBatch {
    let mut pairs = dataset.pair_index.clone();
    pairs.sort_unstable();
    let mut per_query_items = BTreeMap::new();
    for &(q, _) in &pairs {
        let n = dataset.group_of(q).expect("pair qid").n_items();
        per_query_items.entry(q).or_insert_with(|| (0..n).collect());
    }
    StepBatch {
        pairs,
        per_query_items,
    }
}

// ---------------------------------------------------------------------------
// Batteries.

fn synth(n_q: usize, n_items: usize, d: usize, seed: u64) -> Dataset {
    crate::data::synth_generate(n_q, n_items, d, 3, seed).expect("synthetic dataset")
}

fn random_scores(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Scorer backprop against central differences, linear and MLP.
pub fn battery_scorer_grad(seed: u64, _fault: VerifyFault) -> OracleReport {
    let mut report = OracleReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, arch, bound) in [
        ("linear-fd", Arch::Linear, 1e-9),
        ("mlp-fd", Arch::Mlp { hidden: vec![5, 3] }, 1e-6),
    ] {
        let mut worst = 0.0f64;
        for trial in 0..10 {
            let state = ScorerState::init(arch.clone(), 4, seed.wrapping_add(trial));
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut analytic = GradBuffer::new(state.params().len());
            state
                .accumulate_score_grad(&x, 1.0, &mut analytic)
                .expect("backprop");
            let fd = fd_grad_params(|s| s.score(&x), &state, 1e-6).expect("fd");
            worst = worst.max(rel_err_vec(&analytic.grad, &fd));
        }
        report.push("scorer-grad", name, worst, bound, "10 random points");
    }
    report
}

/// Scalar derivative formulas (hinge, f, psi) against central differences at
/// smooth points.
pub fn battery_scalar_derivs(seed: u64, _fault: VerifyFault) -> OracleReport {
    let mut report = OracleReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scfg = SurrogateConfig::default();

    let mut worst = 0.0f64;
    for _ in 0..50 {
        let c: f64 = rng.gen_range(0.2..2.0);
        let mut x: f64 = rng.gen_range(-3.0..3.0);
        if (x + c).abs() < 0.1 {
            x += 0.2;
        }
        let analytic = crate::surrogate::squared_hinge(x, c).1;
        let fd = central_diff(|t| crate::surrogate::squared_hinge(t, c).0, x, 1e-6);
        worst = worst.max(rel_err_scalar(analytic, fd));
    }
    report.push(
        "scalar-derivs",
        "hinge",
        worst,
        1e-8,
        "50 points off the kink",
    );

    let mut worst = 0.0f64;
    for _ in 0..50 {
        let u = rng.gen_range(0.05..5.0);
        let y = rng.gen_range(1..4u32);
        let z = rng.gen_range(0.5..4.0);
        let n = rng.gen_range(3..40usize);
        let floor = 1e-6;
        let analytic = crate::surrogate::f_eval(u, y, z, n, floor).deriv;
        let fd = central_diff(
            |t| crate::surrogate::f_eval(t, y, z, n, floor).value,
            u,
            1e-6,
        );
        worst = worst.max(rel_err_scalar(analytic, fd));
    }
    report.push(
        "scalar-derivs",
        "f",
        worst,
        1e-8,
        "50 points above the floor",
    );

    for (name, psi) in [
        ("psi-squared-relu", PsiKind::SquaredRelu),
        ("psi-sigmoid-like", PsiKind::SigmoidLike),
    ] {
        let cfg = SurrogateConfig {
            psi,
            ..scfg.clone()
        };
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let mut s: f64 = rng.gen_range(-2.0..2.0);
            if matches!(psi, PsiKind::SquaredRelu) && s.abs() < 0.1 {
                s += 0.2;
            }
            let analytic = psi_eval(s, &cfg).1;
            let fd = central_diff(|t| psi_eval(t, &cfg).0, s, 1e-6);
            worst = worst.max(rel_err_scalar(analytic, fd));
        }
        report.push("scalar-derivs", name, worst, 1e-8, "50 points");
    }
    report
}

/// Lower-level value, gradient, and Hessian consistency. The fault hook
/// flips the production gradient's sign, which this battery must catch.
pub fn battery_lower_derivs(seed: u64, fault: VerifyFault) -> OracleReport {
    let mut report = OracleReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prod_grad = |lambda: f64, scores: &[f64], n_q: usize, ll: &LowerLevelConfig| -> f64 {
        let g = lower_grad(lambda, scores, n_q, ll);
        match fault {
            VerifyFault::LowerGradSign => -g,
            VerifyFault::None => g,
        }
    };

    let mut worst_g = 0.0f64;
    let mut worst_h = 0.0f64;
    for _ in 0..50 {
        let n = rng.gen_range(3..25usize);
        let scores = random_scores(&mut rng, n, -2.0, 2.0);
        let ll = LowerLevelConfig {
            k: rng.gen_range(1..=n),
            tau1: rng.gen_range(0.005..0.2),
            tau2: rng.gen_range(0.005..0.2),
            ..Default::default()
        };
        let lambda = rng.gen_range(-2.5..2.5);
        let g = prod_grad(lambda, &scores, n, &ll);
        let g_fd = central_diff(|l| lower_value(l, &scores, n, &ll), lambda, 1e-6);
        worst_g = worst_g.max(rel_err_scalar(g, g_fd));
        let h = lower_hess(lambda, &scores, n, &ll);
        let h_fd = central_diff(|l| prod_grad(l, &scores, n, &ll), lambda, 1e-6);
        worst_h = worst_h.max(rel_err_scalar(h, h_fd));
    }
    report.push(
        "lower-derivs",
        "grad-vs-value-fd",
        worst_g,
        1e-6,
        "50 instances",
    );
    report.push(
        "lower-derivs",
        "hess-vs-grad-fd",
        worst_h,
        1e-6,
        "50 instances",
    );
    report
}

/// Analytic objective gradients against central differences of the oracle
/// objectives themselves, for F, F_K, and the warm-up objective.
pub fn battery_objective_fd(seed: u64, _fault: VerifyFault) -> OracleReport {
    let mut report = OracleReport::default();
    let ds = synth(3, 6, 3, seed);
    let scfg = SurrogateConfig::default();
    let ll = LowerLevelConfig {
        k: 2,
        solver_tol: 1e-13,
        ..Default::default()
    };

    for (name, arch, bound) in [
        ("f-linear", Arch::Linear, 1e-6),
        ("f-mlp", Arch::Mlp { hidden: vec![4] }, 1e-5),
    ] {
        let state = ScorerState::init(arch, ds.d_feat(), seed ^ 1);
        let analytic = oracle_grad_f(&state, &ds, &scfg).expect("grad");
        let fd = fd_grad_params(|s| oracle_objective_f(s, &ds, &scfg), &state, 1e-5).expect("fd");
        report.push("objective-fd", name, rel_err_vec(&analytic, &fd), bound, "");
    }

    for (name, psi) in [
        ("fk-squared-relu", PsiKind::SquaredRelu),
        ("fk-sigmoid-like", PsiKind::SigmoidLike),
    ] {
        let cfg = SurrogateConfig {
            psi,
            ..scfg.clone()
        };
        let state = ScorerState::init(Arch::Linear, ds.d_feat(), seed ^ 2);
        let analytic = oracle_grad_fk(&state, &ds, &cfg, &ll).expect("grad");
        let fd =
            fd_grad_params(|s| oracle_objective_fk(s, &ds, &cfg, &ll), &state, 1e-5).expect("fd");
        report.push("objective-fd", name, rel_err_vec(&analytic, &fd), 1e-3, "");
    }

    let state = ScorerState::init(Arch::Linear, ds.d_feat(), seed ^ 3);
    let analytic = oracle_warmup_grad(&state, &ds).expect("grad");
    let fd = fd_grad_params(|s| oracle_warmup_objective(s, &ds), &state, 1e-5).expect("fd");
    report.push(
        "objective-fd",
        "warmup",
        rel_err_vec(&analytic, &fd),
        1e-6,
        "",
    );
    report
}

/// Surrogate domination: with margin 1 the rank estimate dominates the true
/// tie-inflated rank, so NDCG >= -F_q on every instance.
pub fn battery_lemma1(seed: u64, _fault: VerifyFault) -> OracleReport {
    let mut report = OracleReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let instances = 100;
    for t in 0..instances {
        let n = rng.gen_range(2..30usize);
        let mut scores = random_scores(&mut rng, n, -2.0, 2.0);
        // Every third instance gets duplicated scores so ties are covered.
        if t % 3 == 0 && n >= 2 {
            scores[1] = scores[0];
        }
        let mut relevances: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        if relevances.iter().all(|&y| y == 0) {
            relevances[0] = 1;
        }
        let gains: Vec<f64> = relevances
            .iter()
            .map(|&y| (y as f64).exp2() - 1.0)
            .collect();
        let mut sorted = gains.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let z: f64 = sorted
            .iter()
            .enumerate()
            .map(|(p, g)| g / ((p + 2) as f64).log2())
            .sum();

        let mut ndcg = 0.0;
        let mut bound = 0.0;
        for i in 0..n {
            if gains[i] == 0.0 {
                continue;
            }
            // Tie-inflated rank, the quantity the estimate dominates.
            let rank = scores.iter().filter(|&&h| h >= scores[i]).count();
            ndcg += gains[i] / (z * (1.0 + rank as f64).log2());
            let g = crate::surrogate::g_full_scores(&scores, i, 1.0);
            bound += gains[i] / (z * (n as f64 * g + 1.0).log2());
        }
        // bound == -F_q; the violation must stay at rounding level.
        worst = worst.max(bound - ndcg);
    }
    report.push(
        "lemma1",
        "ndcg-dominates-neg-f",
        worst.max(0.0),
        1e-12,
        format!("{instances} instances, margin 1"),
    );
    report
}

/// The K-th largest score minimizes K lambda + sum (h - lambda)_+: checked
/// against a refined grid, together with top-K set recovery.
pub fn battery_lemma2(seed: u64, _fault: VerifyFault) -> OracleReport {
    let mut report = OracleReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hinge_obj = |lambda: f64, scores: &[f64], k: usize| -> f64 {
        k as f64 * lambda + scores.iter().map(|&h| (h - lambda).max(0.0)).sum::<f64>()
    };
    let instances = 1000;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut recovery_failures = 0usize;
    for t in 0..instances {
        let n = rng.gen_range(1..25usize);
        let mut scores = random_scores(&mut rng, n, -3.0, 3.0);
        if t % 4 == 0 && n >= 2 {
            scores[1] = scores[0];
        }
        let k = rng.gen_range(1..=n);
        let lambda = exact_lambda(&scores, k);
        let at_lambda = hinge_obj(lambda, &scores, k);

        // Three-level grid refinement around the global bracket.
        let (mut lo, mut hi) = (
            scores.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0,
            scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0,
        );
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let mut best_x = lo;
            for s in 0..=400 {
                let x = lo + (hi - lo) * s as f64 / 400.0;
                let v = hinge_obj(x, &scores, k);
                if v < best {
                    best = v;
                    best_x = x;
                }
            }
            let w = (hi - lo) / 400.0;
            lo = best_x - w;
            hi = best_x + w;
        }
        worst_excess = worst_excess.max(at_lambda - best);

        // At least K items score at or above the threshold, fewer than K
        // strictly above.
        let at_or_above = scores.iter().filter(|&&h| h >= lambda).count();
        let above = scores.iter().filter(|&&h| h > lambda).count();
        if at_or_above < k || above > k - 1 {
            recovery_failures += 1;
        }
    }
    report.push(
        "lemma2",
        "hinge-min-at-kth-score",
        worst_excess,
        1e-9,
        format!("{instances} instances vs refined grid"),
    );
    report.push(
        "lemma2",
        "topk-set-recovery",
        recovery_failures as f64,
        0.0,
        format!("{instances} instances"),
    );
    report
}

/// Selector domination: for scores in [0, B] and the exact threshold,
/// psi(h - lambda) <= B^2 * indicator(h >= lambda) for the squared-relu psi.
pub fn battery_lemma3(seed: u64, _fault: VerifyFault) -> OracleReport {
    let mut report = OracleReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scfg = SurrogateConfig {
        psi: PsiKind::SquaredRelu,
        ..Default::default()
    };
    let instances = 100;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..instances {
        let n = rng.gen_range(2..30usize);
        let b = rng.gen_range(0.5..3.0);
        let scores = random_scores(&mut rng, n, 0.0, b);
        let k = rng.gen_range(1..=n);
        let lambda = exact_lambda(&scores, k);
        for &h in &scores {
            let (psi, _) = psi_eval(h - lambda, &scfg);
            let rhs = if h >= lambda { b * b } else { 0.0 };
            worst = worst.max(psi - rhs);
        }
    }
    report.push(
        "lemma3",
        "psi-below-scaled-indicator",
        worst.max(0.0),
        1e-12,
        format!("{instances} instances, scores in [0, B], C = B^2"),
    );
    report
}

/// Smoothed-solution convergence: on strictly negative score vectors the
/// minimizer of the smoothed lower level approaches the K-th largest score
/// as tau1 = tau2 = eps shrinks. The instance-set constant C is calibrated
/// at eps = 0.1 and the error must stay below C * eps at the smaller values.
pub fn battery_lemma4(seed: u64, _fault: VerifyFault) -> OracleReport {
    let mut report = OracleReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = 100;
    let mut cases: Vec<(Vec<f64>, usize)> = Vec::with_capacity(instances);
    for _ in 0..instances {
        let n = rng.gen_range(5..=30usize);
        let scores = random_scores(&mut rng, n, -3.0, -0.3);
        let k = rng.gen_range(1..=n);
        cases.push((scores, k));
    }

    let err_at = |eps: f64, scores: &[f64], k: usize| -> f64 {
        let ll = LowerLevelConfig::with_epsilon(k, eps);
        let hat = solve_lambda_hat(scores, &ll).expect("solver converges");
        (hat - exact_lambda(scores, k)).abs()
    };

    let c = cases
        .iter()
        .map(|(s, k)| err_at(0.1, s, *k) / 0.1)
        .fold(f64::NEG_INFINITY, f64::max);
    for eps in [1e-2, 1e-3] {
        let worst = cases
            .iter()
            .map(|(s, k)| err_at(eps, s, *k))
            .fold(f64::NEG_INFINITY, f64::max);
        report.push(
            "lemma4",
            &format!("envelope-eps-{eps}"),
            worst,
            c * eps,
            format!("{instances} instances, C = {c:.3} from eps = 0.1"),
        );
    }
    report
}

/// Full-batch reduction identities: one stochastic step with a primed bank,
/// beta0 = beta1 = 1 and the full batch must reproduce the exact gradient of
/// the corresponding objective to near machine precision.
pub fn battery_reduction(seed: u64, _fault: VerifyFault) -> OracleReport {
    let mut report = OracleReport::default();
    let ds = synth(4, 8, 3, seed);
    let batch = full_batch(&ds);
    let base = TrainConfig {
        beta0: 1.0,
        beta1: 1.0,
        k: 2,
        pairs_per_step: ds.n_pairs(),
        items_per_query: 8,
        ..Default::default()
    };
    let table = crate::data::IdealDcgTable::build(&ds, &[base.k]);
    let state0 = ScorerState::init(Arch::Linear, ds.d_feat(), seed ^ 7);

    // SONG against the exact gradient of F.
    {
        let cfg = TrainConfig {
            algorithm: Algorithm::Song,
            ..base.clone()
        };
        let mut state = state0.clone();
        let mut bank = prime_bank_full(&state, &ds, &cfg).expect("prime");
        song_step_batch(&ds, &table, &mut state, &mut bank, &cfg, &batch).expect("step");
        let oracle = oracle_grad_f(&state0, &ds, &cfg.surrogate()).expect("oracle");
        report.push(
            "reduction",
            "song-full-batch",
            rel_err_vec(&bank.m, &oracle),
            1e-10,
            "",
        );
    }

    // K-SONG theoretical against the exact gradient of F_K, both psi kinds.
    for (name, psi) in [
        ("ksong-full-batch-squared-relu", PsiKind::SquaredRelu),
        ("ksong-full-batch-sigmoid-like", PsiKind::SigmoidLike),
    ] {
        let cfg = TrainConfig {
            algorithm: Algorithm::KsongTheoretical,
            psi,
            ..base.clone()
        };
        let mut state = state0.clone();
        let mut bank = prime_bank_full(&state, &ds, &cfg).expect("prime");
        ksong_step_batch(&ds, &table, &mut state, &mut bank, &cfg, &batch).expect("step");
        let oracle =
            oracle_grad_fk(&state0, &ds, &cfg.surrogate(), &cfg.lower_level()).expect("oracle");
        report.push("reduction", name, rel_err_vec(&bank.m, &oracle), 1e-10, "");
    }

    // SOLC against the exact warm-up gradient; beta0 = 1 makes the
    // post-update average equal the full-list mean-exp, so no priming.
    {
        let cfg = TrainConfig {
            algorithm: Algorithm::Solc,
            ..base.clone()
        };
        let mut state = state0.clone();
        let mut bank = EstimatorBank::new(ds.d_feat());
        solc_step_batch(&ds, &mut state, &mut bank, &cfg, &batch).expect("step");
        let oracle = oracle_warmup_grad(&state0, &ds).expect("oracle");
        report.push(
            "reduction",
            "solc-full-batch",
            rel_err_vec(&bank.m, &oracle),
            1e-10,
            "",
        );
    }
    report
}

/// Implicit threshold gradient against re-solving at perturbed weights.
pub fn battery_implicit(seed: u64, _fault: VerifyFault) -> OracleReport {
    let mut report = OracleReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..5 {
        let n = 6;
        let d = 3;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let group = QueryGroup::new(1, rows, vec![1; n]).expect("group");
        let mut state = ScorerState::init(Arch::Linear, d, seed ^ trial);
        let ll = LowerLevelConfig {
            k: 2,
            tau1: 0.05,
            tau2: 0.05,
            solver_tol: 1e-13,
            ..Default::default()
        };
        let items: Vec<usize> = (0..n).collect();
        let scores = group_scores(&state, &group).expect("scores");
        let lambda = solve_lambda_hat(&scores, &ll).expect("solve");
        let hess = lower_hess(lambda, &scores, n, &ll);
        let mut analytic = GradBuffer::new(d);
        implicit_lambda_grad_accumulate(
            &state,
            lambda,
            &group,
            &items,
            hess,
            1.0,
            &ll,
            &mut analytic,
        )
        .expect("implicit");

        let mut fd = vec![0.0; d];
        let step = 1e-6;
        for (j, slot) in fd.iter_mut().enumerate() {
            let w0 = state.params()[j];
            let solve_at = |w: f64, state: &mut ScorerState| -> f64 {
                state.params_mut()[j] = w;
                let s = group_scores(state, &group).expect("scores");
                solve_lambda_hat(&s, &ll).expect("solve")
            };
            let plus = solve_at(w0 + step, &mut state);
            let minus = solve_at(w0 - step, &mut state);
            state.params_mut()[j] = w0;
            *slot = (plus - minus) / (2.0 * step);
        }
        worst = worst.max(rel_err_vec(&analytic.grad, &fd));
    }
    report.push("implicit", "grad-vs-resolve-fd", worst, 1e-3, "5 instances");
    report
}

/// Monte Carlo unbiasedness of the mini-batch estimators: the sample mean of
/// the batched estimate must sit within 3 standard errors of the full-list
/// value.
pub fn battery_minibatch(seed: u64, _fault: VerifyFault) -> OracleReport {
    let mut report = OracleReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 40;
    let scores = random_scores(&mut rng, n, -2.0, 2.0);
    let trials = 4000;
    let batch_size = 8;

    // Rank estimate around anchor 0.
    let full = crate::surrogate::g_full_scores(&scores, 0, 1.0);
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let batch: Vec<f64> = index::sample(&mut rng, n, batch_size)
            .into_iter()
            .map(|j| scores[j])
            .collect();
        samples.push(crate::surrogate::g_minibatch_scores(scores[0], &batch, 1.0));
    }
    let mean: f64 = samples.iter().sum::<f64>() / trials as f64;
    let var: f64 =
        samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (trials - 1) as f64;
    let se = (var / trials as f64).sqrt();
    report.push(
        "minibatch",
        "rank-estimate-unbiased",
        (mean - full).abs(),
        3.0 * se.max(1e-12),
        format!("{trials} batches of {batch_size}"),
    );

    // Lower-level gradient at a fixed threshold.
    let ll = LowerLevelConfig {
        k: 5,
        ..Default::default()
    };
    let lambda = 0.3;
    let full_g = lower_grad(lambda, &scores, n, &ll);
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let batch: Vec<f64> = index::sample(&mut rng, n, batch_size)
            .into_iter()
            .map(|j| scores[j])
            .collect();
        samples.push(lower_grad(lambda, &batch, n, &ll));
    }
    let mean: f64 = samples.iter().sum::<f64>() / trials as f64;
    let var: f64 =
        samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (trials - 1) as f64;
    let se = (var / trials as f64).sqrt();
    report.push(
        "minibatch",
        "lower-grad-unbiased",
        (mean - full_g).abs(),
        3.0 * se.max(1e-12),
        format!("{trials} batches of {batch_size}"),
    );
    report
}

/// Self-test of the finite-difference harness: exact on linear functions,
/// rounding-limited on quadratics, and failing gracefully at a kink.
pub fn battery_fd_selftest(_seed: u64, _fault: VerifyFault) -> OracleReport {
    let mut report = OracleReport::default();
    let lin = central_diff(|x| 3.0 * x - 1.0, 0.7, 1e-5);
    report.push("fd-selftest", "linear-exact", (lin - 3.0).abs(), 1e-10, "");
    let quad = central_diff(|x| x * x, 1.3, 1e-5);
    report.push(
        "fd-selftest",
        "quadratic-rounding",
        (quad - 2.6).abs(),
        1e-9,
        "",
    );
    // |x| at 0: the harness must report the genuine mismatch (fd reads 0,
    // the one-sided slope is 1) without panicking.
    let kink = central_diff(|x: f64| x.abs(), 0.0, 1e-5);
    let mismatch = (kink - 1.0).abs();
    report.rows.push(CaseRow {
        battery: "fd-selftest".into(),
        case: "kink-detected-not-crashed".into(),
        passed: mismatch > 0.5,
        observed: mismatch,
        bound: 0.5,
        detail: "expected mismatch at the kink".into(),
    });
    report
}

type BatteryFn = fn(u64, VerifyFault) -> OracleReport;

pub const BATTERIES: &[(&str, BatteryFn)] = &[
    ("fd-selftest", battery_fd_selftest),
    ("scorer-grad", battery_scorer_grad),
    ("scalar-derivs", battery_scalar_derivs),
    ("lower-derivs", battery_lower_derivs),
    ("objective-fd", battery_objective_fd),
    ("lemma1", battery_lemma1),
    ("lemma2", battery_lemma2),
    ("lemma3", battery_lemma3),
    ("lemma4", battery_lemma4),
    ("reduction", battery_reduction),
    ("implicit", battery_implicit),
    ("minibatch", battery_minibatch),
];

/// Runs the batteries whose name contains `filter` (all when absent).
/// Errors with `Error::Verification` when nothing matches.
pub fn run_batteries(filter: Option<&str>, seed: u64, fault: VerifyFault) -> Result<OracleReport> {
    let mut report = OracleReport::default();
    let mut matched = 0;
    for (name, battery) in BATTERIES {
        if filter.is_none_or(|f| name.contains(f)) {
            report.merge(battery(seed, fault));
            matched += 1;
        }
    }
    if matched == 0 {
        return Err(Error::Verification(format!(
            "no battery matches filter {:?}",
            filter.unwrap_or("")
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;

    #[test]
    fn oracle_objective_single_pair_example() {
        // One query, two tied items at score 0, margin 1/sqrt(2): the rank
        // estimate is c^2 = 1/2, N u + 1 = 2, Z = 1, so F = -1.
        let group = QueryGroup::new(1, vec![vec![0.0], vec![0.0]], vec![1, 0]).unwrap();
        let ds = Dataset::new(vec![group]).unwrap();
        let state = ScorerState::zeros(Arch::Linear, 1);
        let scfg = SurrogateConfig {
            margin: 0.5f64.sqrt(),
            ..Default::default()
        };
        let f = oracle_objective_f(&state, &ds, &scfg).unwrap();
        assert!((f + 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_objective_matches_production_surrogate() {
        // The production surrogate reports the NDCG lower bound, which is
        // the negated minimization objective.
        let ds = synth_generate(3, 7, 3, 3, 21).unwrap();
        let table = crate::data::IdealDcgTable::build(&ds, &[]);
        let state = ScorerState::init(Arch::Linear, 3, 5);
        let scfg = SurrogateConfig::default();
        let oracle = oracle_objective_f(&state, &ds, &scfg).unwrap();
        let prod = crate::surrogate::surrogate_objective(&state, &ds, &table, &scfg).unwrap();
        assert!((oracle + prod).abs() < 1e-12);
    }

    #[test]
    fn oracle_lambda_agrees_with_production_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(3..20usize);
            let scores = random_scores(&mut rng, n, -2.0, 2.0);
            let ll = LowerLevelConfig {
                k: rng.gen_range(1..=n),
                solver_tol: 1e-12,
                ..Default::default()
            };
            let oracle = oracle_lambda_hat(&scores, &ll);
            let prod = solve_lambda_hat(&scores, &ll).unwrap();
            assert!(
                (oracle - prod).abs() < 1e-9,
                "oracle {oracle} vs solver {prod}"
            );
        }
    }

    #[test]
    fn all_batteries_pass_without_fault() {
        let report = run_batteries(None, 1234, VerifyFault::None).unwrap();
        assert!(
            report.passed(),
            "failing rows:\n{}",
            report
                .rows
                .iter()
                .filter(|r| !r.passed)
                .map(|r| format!("{}/{}: {} > {}", r.battery, r.case, r.observed, r.bound))
                .collect::<Vec<_>>()
                .join("\n")
        );
        assert_eq!(report.rows.len(), 29);
    }

    #[test]
    fn injected_sign_fault_is_caught() {
        let report = run_batteries(Some("lower-derivs"), 1234, VerifyFault::LowerGradSign).unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn filter_selects_single_battery() {
        let report = run_batteries(Some("lemma2"), 7, VerifyFault::None).unwrap();
        assert!(report.rows.iter().all(|r| r.battery == "lemma2"));
        assert!(report.passed());
        assert!(run_batteries(Some("nonexistent"), 7, VerifyFault::None).is_err());
    }

    #[test]
    fn report_serializes_to_json_lines_and_table() {
        let report = run_batteries(Some("fd-selftest"), 0, VerifyFault::None).unwrap();
        let lines = report.to_json_lines();
        for line in lines.lines() {
            let row: CaseRow = serde_json::from_str(line).unwrap();
            assert!(row.passed);
        }
        let table = report.render_table();
        assert!(table.contains("fd-selftest"));
        assert!(table.contains("pass"));
    }

    #[test]
    fn oracle_train_full_descends_objective() {
        let ds = synth_generate(4, 8, 3, 3, 11).unwrap();
        let cfg = TrainConfig {
            eta: 0.2,
            ..Default::default()
        };
        let scfg = cfg.surrogate();
        let w0 = ScorerState::init(Arch::Linear, 3, cfg.seed);
        let before = oracle_objective_f(&w0, &ds, &scfg).unwrap();
        let w1 = oracle_train_full(&ds, &cfg, 30).unwrap();
        let after = oracle_objective_f(&w1, &ds, &scfg).unwrap();
        assert!(after < before, "{after} vs {before}");
    }

    #[test]
    fn primed_bank_holds_converged_values() {
        let ds = synth_generate(2, 6, 3, 3, 31).unwrap();
        let cfg = TrainConfig {
            k: 2,
            ..Default::default()
        };
        let state = ScorerState::init(Arch::Linear, 3, 9);
        let bank = prime_bank_full(&state, &ds, &cfg).unwrap();
        assert_eq!(bank.u.len(), ds.n_pairs());
        for g in &ds.groups {
            let lam = bank.lambda[&g.query_id];
            let scores = group_scores(&state, g).unwrap();
            // The primed threshold is stationary for the full lower level.
            assert!(o_lower_grad(lam, &scores, &cfg.lower_level()).abs() < 1e-9);
            assert!(bank.s[&g.query_id] >= cfg.tau2);
        }
    }
}
