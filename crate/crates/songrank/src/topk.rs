//! Lower-level machinery for the top-K threshold: the exact K-th-largest
//! threshold, the smoothed and regularized hinge objective L(lambda; w), its
//! lambda-derivatives and the mixed lambda/w derivative, a safeguarded solver
//! for the smoothed minimizer, and the implicit gradient of that minimizer.
//!
//! The smoothed objective for one query is
//! `L(lambda) = (K/N_q) lambda + (tau2/2) lambda^2
//!            + mean_i tau1 * softplus((h_i - lambda)/tau1)`,
//! where the mean runs over the full item set or a mini-batch; the K/N_q and
//! tau2 terms always use the true N_q.

use serde::{Deserialize, Serialize};

use crate::data::QueryGroup;
use crate::scorer::{GradBuffer, ScorerState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerLevelConfig {
    /// Softplus temperature tau1 > 0.
    pub tau1: f64,
    /// Quadratic regularizer tau2 > 0; also the strong-convexity modulus.
    pub tau2: f64,
    /// Top-K cutoff, 1 <= K <= N_q at every use site.
    pub k: usize,
    /// Stop when |dL/dlambda| falls below this.
    pub solver_tol: f64,
    pub max_iter: usize,
}

impl Default for LowerLevelConfig {
    fn default() -> Self {
        LowerLevelConfig {
            tau1: 1e-2,
            tau2: 1e-2,
            k: 10,
            solver_tol: 1e-10,
            max_iter: 200,
        }
    }
}

impl LowerLevelConfig {
    /// Config with tau1 = tau2 = eps, the smoothing regime of the
    /// approximation guarantee.
    pub fn with_epsilon(k: usize, eps: f64) -> Self {
        LowerLevelConfig {
            tau1: eps,
            tau2: eps,
            k,
            ..Default::default()
        }
    }
}

/// The K-th largest score. Ties are kept as-is, so the selection rule
/// `h >= lambda` can admit more than K items when scores tie at the cut.
pub fn exact_lambda(scores: &[f64], k: usize) -> f64 {
    assert!(
        k >= 1 && k <= scores.len(),
        "exact_lambda: K={k} out of range 1..={}",
        scores.len()
    );
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sorted[k - 1]
}

/// Overflow-safe tau1 * softplus(z / tau1) = max(z, 0) + tau1 ln(1 + e^{-|z|/tau1}).
fn scaled_softplus(z: f64, tau1: f64) -> f64 {
    z.max(0.0) + tau1 * (-z.abs() / tau1).exp().ln_1p()
}

fn sigma(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Smoothed lower-level objective. `scores` may be the full item set or a
/// mini-batch; `n_q` is always the true item count of the query.
pub fn lower_value(lambda: f64, scores: &[f64], n_q: usize, cfg: &LowerLevelConfig) -> f64 {
    let data: f64 = scores
        .iter()
        .map(|&h| scaled_softplus(h - lambda, cfg.tau1))
        .sum::<f64>()
        / scores.len() as f64;
    (cfg.k as f64 / n_q as f64) * lambda + 0.5 * cfg.tau2 * lambda * lambda + data
}

/// dL/dlambda = K/N_q + tau2 lambda - mean_i sigma((h_i - lambda)/tau1).
pub fn lower_grad(lambda: f64, scores: &[f64], n_q: usize, cfg: &LowerLevelConfig) -> f64 {
    let data: f64 = scores
        .iter()
        .map(|&h| sigma((h - lambda) / cfg.tau1))
        .sum::<f64>()
        / scores.len() as f64;
    cfg.k as f64 / n_q as f64 + cfg.tau2 * lambda - data
}

/// d2L/dlambda2 = tau2 + (1/(tau1 |B|)) sum_i sigma_i (1 - sigma_i); always >= tau2.
pub fn lower_hess(lambda: f64, scores: &[f64], _n_q: usize, cfg: &LowerLevelConfig) -> f64 {
    let data: f64 = scores
        .iter()
        .map(|&h| {
            let s = sigma((h - lambda) / cfg.tau1);
            s * (1.0 - s)
        })
        .sum::<f64>();
    cfg.tau2 + data / (cfg.tau1 * scores.len() as f64)
}

/// Accumulates `buffer += coefficient * d2L/(dlambda dw)`, where
/// `d2L/(dlambda dw) = -(1/(tau1 |B|)) sum_i sigma_i (1 - sigma_i) grad_w h(x_i)`.
pub fn mixed_grad_accumulate(
    state: &ScorerState,
    lambda: f64,
    group: &QueryGroup,
    batch_indices: &[usize],
    coefficient: f64,
    cfg: &LowerLevelConfig,
    buffer: &mut GradBuffer,
) -> Result<()> {
    if coefficient == 0.0 {
        return Ok(());
    }
    let scale = -coefficient / (cfg.tau1 * batch_indices.len() as f64);
    for &i in batch_indices {
        let x = group.feature_row(i);
        let s = sigma((state.score(x)? - lambda) / cfg.tau1);
        state.accumulate_score_grad(x, scale * s * (1.0 - s), buffer)?;
    }
    Ok(())
}

/// Minimizes the smoothed objective over the full score set: geometric
/// bracket expansion from [min - 1, max + 1] until the (strictly increasing)
/// gradient changes sign, then safeguarded Newton with bisection fallback.
pub fn solve_lambda_hat(scores: &[f64], cfg: &LowerLevelConfig) -> Result<f64> {
    let n_q = scores.len();
    if cfg.k < 1 || cfg.k > n_q {
        return Err(Error::Config(format!(
            "solve_lambda_hat: K={} out of range 1..={n_q}",
            cfg.k
        )));
    }
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    solve_from(scores, n_q, cfg, lo, hi)
}

fn solve_from(
    scores: &[f64],
    n_q: usize,
    cfg: &LowerLevelConfig,
    mut lo: f64,
    mut hi: f64,
) -> Result<f64> {
    let grad = |l: f64| lower_grad(l, scores, n_q, cfg);

    let mut span = (hi - lo).max(1.0);
    let mut expansions = 0;
    while grad(lo) > 0.0 {
        lo -= span;
        span *= 2.0;
        expansions += 1;
        if expansions > cfg.max_iter {
            return Err(Error::Solver {
                msg: "bracket expansion failed on the low side".into(),
                lo,
                hi,
            });
        }
    }
    let mut span = (hi - lo).max(1.0);
    while grad(hi) < 0.0 {
        hi += span;
        span *= 2.0;
        expansions += 1;
        if expansions > cfg.max_iter {
            return Err(Error::Solver {
                msg: "bracket expansion failed on the high side".into(),
                lo,
                hi,
            });
        }
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..cfg.max_iter {
        let g = grad(x);
        if g.abs() <= cfg.solver_tol {
            return Ok(x);
        }
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let h = lower_hess(x, scores, n_q, cfg);
        let mut next = x - g / h;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        x = next;
    }
    Err(Error::Solver {
        msg: format!(
            "no convergence to |grad| <= {} in {} iterations",
            cfg.solver_tol, cfg.max_iter
        ),
        lo,
        hi,
    })
}

/// Accumulates `buffer += coefficient * grad_w lambda_hat`, using the
/// implicit-function expression grad_w lambda_hat = -mixed / hess with the
/// scalar Hessian estimate supplied by the caller (clamped upstream).
#[allow(clippy::too_many_arguments)]
pub fn implicit_lambda_grad_accumulate(
    state: &ScorerState,
    lambda: f64,
    group: &QueryGroup,
    batch_indices: &[usize],
    hess_estimate: f64,
    coefficient: f64,
    cfg: &LowerLevelConfig,
    buffer: &mut GradBuffer,
) -> Result<()> {
    if hess_estimate <= 0.0 {
        return Err(Error::Config(format!(
            "implicit gradient needs a positive Hessian estimate, got {hess_estimate}"
        )));
    }
    mixed_grad_accumulate(
        state,
        lambda,
        group,
        batch_indices,
        -coefficient / hess_estimate,
        cfg,
        buffer,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::Arch;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
    }

    #[test]
    fn exact_lambda_examples() {
        assert_eq!(exact_lambda(&[3.0, 1.0, 2.0], 2), 2.0);
        assert_eq!(exact_lambda(&[5.0, 5.0, 5.0], 2), 5.0);
    }

    #[test]
    fn lower_value_single_score() {
        let cfg = LowerLevelConfig {
            k: 1,
            tau1: 0.3,
            tau2: 0.7,
            ..Default::default()
        };
        let v = lower_value(0.0, &[0.0], 1, &cfg);
        assert!((v - 0.3 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn lower_value_is_coercive() {
        let cfg = LowerLevelConfig::with_epsilon(1, 1e-2);
        let scores = [0.1, 0.4, -0.3];
        assert!(lower_value(1e6, &scores, 3, &cfg) > lower_value(0.0, &scores, 3, &cfg));
        assert!(lower_value(-1e6, &scores, 3, &cfg) > lower_value(0.0, &scores, 3, &cfg));
    }

    #[test]
    fn lower_grad_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = LowerLevelConfig {
            k: 2,
            tau1: 0.05,
            tau2: 0.01,
            ..Default::default()
        };
        for _ in 0..50 {
            let scores = random_scores(&mut rng, 8);
            let l = rng.gen_range(-2.5..2.5);
            let h = 1e-6;
            let fd = (lower_value(l + h, &scores, 8, &cfg) - lower_value(l - h, &scores, 8, &cfg))
                / (2.0 * h);
            let g = lower_grad(l, &scores, 8, &cfg);
            let denom = g.abs().max(fd.abs()).max(1e-8);
            assert!((g - fd).abs() / denom < 1e-8, "lambda={l}: {g} vs {fd}");
        }
    }

    #[test]
    fn lower_grad_negative_far_below_scores() {
        let cfg = LowerLevelConfig::with_epsilon(1, 1e-2);
        let scores = [0.2, 0.9, -0.4];
        assert!(lower_grad(-100.0, &scores, 3, &cfg) < 0.0);
    }

    #[test]
    fn lower_hess_matches_fd_and_saturates() {
        let cfg = LowerLevelConfig {
            k: 1,
            tau1: 0.1,
            tau2: 0.02,
            ..Default::default()
        };
        let scores = [0.3, -0.6, 1.1];
        let h = 1e-6;
        for l in [-0.9, 0.0, 0.4, 1.3] {
            let fd = (lower_grad(l + h, &scores, 3, &cfg) - lower_grad(l - h, &scores, 3, &cfg))
                / (2.0 * h);
            let hess = lower_hess(l, &scores, 3, &cfg);
            assert!((hess - fd).abs() / hess.abs().max(fd.abs()) < 1e-6);
        }
        assert!((lower_hess(1e9, &scores, 3, &cfg) - cfg.tau2).abs() < 1e-15);
        assert!((lower_hess(-1e9, &scores, 3, &cfg) - cfg.tau2).abs() < 1e-15);
    }

    fn toy_group(scores: &[f64]) -> (ScorerState, QueryGroup) {
        let mut state = ScorerState::zeros(Arch::Linear, 1);
        state.params_mut()[0] = 1.0;
        let rows = scores.iter().map(|&s| vec![s]).collect();
        let rels = vec![1; scores.len()];
        (state, QueryGroup::new(1, rows, rels).unwrap())
    }

    #[test]
    fn mixed_grad_zero_coefficient_noop() {
        let (state, group) = toy_group(&[0.5, -0.5]);
        let cfg = LowerLevelConfig::default();
        let mut buf = GradBuffer::new(1);
        mixed_grad_accumulate(&state, 0.0, &group, &[0, 1], 0.0, &cfg, &mut buf).unwrap();
        assert_eq!(buf.grad, vec![0.0]);
    }

    #[test]
    fn mixed_grad_large_tau_asymptote() {
        // With tau1 huge every logistic factor is ~1/4, so the accumulated
        // vector approaches -(1/(4 tau1 |B|)) sum grad h.
        let (state, group) = toy_group(&[0.5, -0.2, 0.9]);
        let cfg = LowerLevelConfig {
            tau1: 1e6,
            ..Default::default()
        };
        let mut buf = GradBuffer::new(1);
        mixed_grad_accumulate(&state, 0.1, &group, &[0, 1, 2], 1.0, &cfg, &mut buf).unwrap();
        let expected = -(0.5 - 0.2 + 0.9) / (4.0 * 1e6 * 3.0);
        assert!((buf.grad[0] - expected).abs() / expected.abs() < 1e-6);
    }

    #[test]
    fn mixed_grad_matches_fd_over_weights() {
        // Three-parameter linear model; finite differences of lower_grad with
        // respect to each weight coordinate.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut state = ScorerState::zeros(Arch::Linear, 3);
        for p in state.params_mut() {
            *p = rng.gen_range(-1.0..1.0);
        }
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let group = QueryGroup::new(1, rows, vec![1; 5]).unwrap();
        let batch: Vec<usize> = (0..5).collect();
        let cfg = LowerLevelConfig {
            k: 2,
            tau1: 0.1,
            tau2: 0.05,
            ..Default::default()
        };
        let lambda = 0.2;

        let mut buf = GradBuffer::new(3);
        mixed_grad_accumulate(&state, lambda, &group, &batch, 1.0, &cfg, &mut buf).unwrap();

        let step = 1e-5;
        for j in 0..3 {
            let eval = |delta: f64| {
                let mut s = state.clone();
                s.params_mut()[j] += delta;
                let scores: Vec<f64> = batch
                    .iter()
                    .map(|&i| s.score(group.feature_row(i)).unwrap())
                    .collect();
                lower_grad(lambda, &scores, 5, &cfg)
            };
            let fd = (eval(step) - eval(-step)) / (2.0 * step);
            let denom = fd.abs().max(buf.grad[j].abs()).max(1e-8);
            assert!(
                (fd - buf.grad[j]).abs() / denom < 1e-5,
                "coord {j}: {} vs {fd}",
                buf.grad[j]
            );
        }
    }

    #[test]
    fn solver_approaches_exact_threshold() {
        // The unsmoothed hinge objective is flat on the whole interval
        // between the (K+1)-th and K-th largest scores; the tau2 lambda^2
        // term selects the interval end nearest zero. Below zero that end is
        // the exact K-th-largest threshold, so lambda_hat converges to it.
        let cfg = LowerLevelConfig::with_epsilon(1, 1e-3);
        let l = solve_lambda_hat(&[-0.1, -0.5, -0.9], &cfg).unwrap();
        assert!((l - (-0.1)).abs() < 0.05, "lambda_hat={l}");
    }

    #[test]
    fn solver_selects_near_zero_interval_end_above_zero() {
        // With all scores positive the selected end is the (K+1)-th largest:
        // lambda_hat stays inside the flat interval but near its lower edge.
        let cfg = LowerLevelConfig::with_epsilon(1, 1e-3);
        let l = solve_lambda_hat(&[0.9, 0.5, 0.1], &cfg).unwrap();
        assert!(l > 0.5 && l < 0.9, "lambda_hat={l} left the flat interval");
        assert!((l - 0.5).abs() < 0.05, "lambda_hat={l}");
    }

    #[test]
    fn solver_gap_shrinks_with_epsilon() {
        let scores = [-0.1, -0.5, -0.9];
        let exact = exact_lambda(&scores, 1);
        let mut last = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3] {
            let cfg = LowerLevelConfig::with_epsilon(1, eps);
            let gap = (solve_lambda_hat(&scores, &cfg).unwrap() - exact).abs();
            assert!(gap < last, "gap {gap} grew at eps={eps}");
            last = gap;
        }
        assert!(last < 0.01);
    }

    #[test]
    fn solver_monotone_in_k() {
        let scores = [0.4, -0.1, 0.8, 0.2, -0.9, 1.5];
        let mut last = f64::INFINITY;
        for k in 1..=6 {
            let cfg = LowerLevelConfig::with_epsilon(k, 1e-2);
            let l = solve_lambda_hat(&scores, &cfg).unwrap();
            assert!(l <= last + 1e-9, "lambda_hat must weakly decrease in K");
            last = l;
        }
    }

    #[test]
    fn solver_rejects_bad_k() {
        let cfg = LowerLevelConfig::with_epsilon(4, 1e-2);
        assert!(solve_lambda_hat(&[1.0, 2.0], &cfg).is_err());
    }

    #[test]
    fn implicit_grad_contract_checks() {
        let (state, group) = toy_group(&[0.5, -0.5]);
        let cfg = LowerLevelConfig::default();
        let mut buf = GradBuffer::new(1);
        implicit_lambda_grad_accumulate(&state, 0.0, &group, &[0, 1], 1.0, 0.0, &cfg, &mut buf)
            .unwrap();
        assert_eq!(buf.grad, vec![0.0]);
        assert!(implicit_lambda_grad_accumulate(
            &state,
            0.0,
            &group,
            &[0, 1],
            -1.0,
            1.0,
            &cfg,
            &mut buf
        )
        .is_err());
    }

    #[test]
    fn implicit_grad_halves_when_hess_doubles() {
        let (state, group) = toy_group(&[0.5, -0.5, 0.2]);
        let cfg = LowerLevelConfig::default();
        let mut a = GradBuffer::new(1);
        let mut b = GradBuffer::new(1);
        implicit_lambda_grad_accumulate(&state, 0.1, &group, &[0, 1, 2], 0.5, 1.0, &cfg, &mut a)
            .unwrap();
        implicit_lambda_grad_accumulate(&state, 0.1, &group, &[0, 1, 2], 1.0, 1.0, &cfg, &mut b)
            .unwrap();
        assert!((a.grad[0] - 2.0 * b.grad[0]).abs() < 1e-15);
    }

    #[test]
    fn implicit_grad_matches_resolve_fd() {
        // Two-parameter linear model, full batch, exact Hessian at the solved
        // minimizer; compare against re-solving lambda_hat at w +- delta e_j.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut state = ScorerState::zeros(Arch::Linear, 2);
        for p in state.params_mut() {
            *p = rng.gen_range(-1.0..1.0);
        }
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let group = QueryGroup::new(1, rows, vec![1; 6]).unwrap();
        let batch: Vec<usize> = (0..6).collect();
        let cfg = LowerLevelConfig {
            k: 2,
            tau1: 0.05,
            tau2: 0.05,
            solver_tol: 1e-13,
            ..Default::default()
        };
        let solve_at = |s: &ScorerState| {
            let scores: Vec<f64> = (0..6)
                .map(|i| s.score(group.feature_row(i)).unwrap())
                .collect();
            solve_lambda_hat(&scores, &cfg).unwrap()
        };
        let lambda = solve_at(&state);
        let scores: Vec<f64> = (0..6)
            .map(|i| state.score(group.feature_row(i)).unwrap())
            .collect();
        let hess = lower_hess(lambda, &scores, 6, &cfg);
        let mut buf = GradBuffer::new(2);
        implicit_lambda_grad_accumulate(&state, lambda, &group, &batch, hess, 1.0, &cfg, &mut buf)
            .unwrap();

        let step = 1e-5;
        for j in 0..2 {
            let mut plus = state.clone();
            plus.params_mut()[j] += step;
            let mut minus = state.clone();
            minus.params_mut()[j] -= step;
            let fd = (solve_at(&plus) - solve_at(&minus)) / (2.0 * step);
            let denom = fd.abs().max(buf.grad[j].abs()).max(1e-8);
            assert!(
                (fd - buf.grad[j]).abs() / denom < 1e-4,
                "coord {j}: implicit {} vs fd {fd}",
                buf.grad[j]
            );
        }
    }

    proptest! {
        #[test]
        fn prop_hess_at_least_tau2(
            scores in prop::collection::vec(-3.0f64..3.0, 1..12),
            lambda in -4.0f64..4.0
        ) {
            let cfg = LowerLevelConfig::with_epsilon(1, 1e-2);
            let n = scores.len();
            prop_assert!(lower_hess(lambda, &scores, n, &cfg) >= cfg.tau2);
        }

        #[test]
        fn prop_value_dominates_hinge_relaxation(
            scores in prop::collection::vec(-3.0f64..3.0, 1..12),
            lambda in -4.0f64..4.0
        ) {
            let cfg = LowerLevelConfig::with_epsilon(2, 5e-2);
            let n = scores.len();
            let k = cfg.k.min(n);
            let cfg = LowerLevelConfig { k, ..cfg };
            let hinge: f64 = scores.iter().map(|&h| (h - lambda).max(0.0)).sum::<f64>() / n as f64;
            let lower_bound = (k as f64 / n as f64) * lambda
                + 0.5 * cfg.tau2 * lambda * lambda
                + hinge;
            prop_assert!(lower_value(lambda, &scores, n, &cfg) >= lower_bound - 1e-12);
        }

        #[test]
        fn prop_grad_strictly_increasing(
            scores in prop::collection::vec(-3.0f64..3.0, 1..12),
            a in -3.0f64..3.0,
            gap in 0.01f64..2.0
        ) {
            let cfg = LowerLevelConfig::with_epsilon(1, 1e-2);
            let n = scores.len();
            let g1 = lower_grad(a, &scores, n, &cfg);
            let g2 = lower_grad(a + gap, &scores, n, &cfg);
            prop_assert!(g2 - g1 >= cfg.tau2 * gap * 0.999);
        }

        #[test]
        fn prop_solver_meets_tolerance_and_ignores_bracket(
            scores in prop::collection::vec(-3.0f64..3.0, 2..15),
            kraw in 1usize..15
        ) {
            let n = scores.len();
            let k = 1 + kraw % n;
            let cfg = LowerLevelConfig::with_epsilon(k, 1e-2);
            let sol = solve_lambda_hat(&scores, &cfg).unwrap();
            prop_assert!(lower_grad(sol, &scores, n, &cfg).abs() <= cfg.solver_tol);
            let alt = solve_from(&scores, n, &cfg, -17.0, -16.5).unwrap();
            // Strong convexity: |a - b| <= |grad gap| / tau2.
            prop_assert!((sol - alt).abs() <= 2.0 * cfg.solver_tol / cfg.tau2);
        }
    }
}
