//! Sweep the moving-average weight beta0 and expose the bias of plugging raw
//! mini-batch rank estimates into the nonlinear outer function.
//!
//! beta0 = 1 is the biased baseline: every step trusts the current
//! mini-batch; smaller beta0 averages over steps and debiases the
//! composition at the cost of slower tracking.
//!
//! ```sh
//! cargo run --example sweep_beta0
//! ```

use songrank::data::synth_generate;
use songrank::optim::{train, TrainConfig};

fn main() -> songrank::Result<()> {
    let dataset = synth_generate(40, 30, 8, 3, 21)?;
    let base = TrainConfig {
        pairs_per_step: 16,
        items_per_query: 6,
        epochs: 10,
        eval_fraction: 0.2,
        eval_ks: vec![10],
        ..Default::default()
    };

    println!("beta0   median final eval ndcg@10 (5 seeds)");
    for beta0 in [0.05, 0.1, 0.5, 1.0] {
        let mut finals = Vec::new();
        for seed in 50..55 {
            let cfg = TrainConfig {
                beta0,
                seed,
                ..base.clone()
            };
            let output = train(&dataset, &cfg)?;
            let v = output
                .records
                .iter()
                .rev()
                .find(|r| r.split == "eval" && r.metric == "ndcg@10")
                .map(|r| r.value)
                .unwrap();
            finals.push(v);
        }
        finals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!("{beta0:5}   {:.4}", finals[finals.len() / 2]);
    }
    Ok(())
}
