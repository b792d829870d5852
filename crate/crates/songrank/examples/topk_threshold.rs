//! The top-K threshold two ways: exact K-th largest score versus the smoothed
//! lower-level minimizer, with the approximation error shrinking linearly in
//! the smoothing parameter.
//!
//! ```sh
//! cargo run --example topk_threshold
//! ```

use songrank::topk::{exact_lambda, lower_hess, solve_lambda_hat, LowerLevelConfig};

fn main() -> songrank::Result<()> {
    let scores = [-0.31, -1.62, -0.94, -2.48, -0.52, -1.17, -2.05, -0.77];
    let k = 3;
    let lambda = exact_lambda(&scores, k);
    println!("scores: {scores:?}");
    println!("exact K-th largest (K = {k}): {lambda:.6}\n");

    println!("  eps      lambda_hat     |error|    error/eps   hessian");
    for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
        let cfg = LowerLevelConfig::with_epsilon(k, eps);
        let hat = solve_lambda_hat(&scores, &cfg)?;
        let err = (hat - lambda).abs();
        let hess = lower_hess(hat, &scores, scores.len(), &cfg);
        println!(
            "{eps:7.0e}  {hat:12.6}  {err:9.2e}  {:9.2}  {hess:8.3}",
            err / eps
        );
    }
    println!("\nthe error falls ~10x per decade of eps — linear convergence up");
    println!("to the slowly growing log factor visible in error/eps — and the");
    println!("Hessian stays above its Tikhonov floor, so the implicit gradient");
    println!("-mixed/hessian is always well defined.");
    Ok(())
}
