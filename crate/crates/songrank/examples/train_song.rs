//! Train a linear scorer with the moving-average estimator and watch the
//! objective and NDCG curves.
//!
//! ```sh
//! cargo run --example train_song
//! ```

use songrank::data::synth_generate;
use songrank::optim::{train, TrainConfig};

fn main() -> songrank::Result<()> {
    let dataset = synth_generate(30, 25, 8, 3, 7)?;
    let cfg = TrainConfig {
        beta0: 0.1,
        pairs_per_step: 16,
        items_per_query: 8,
        epochs: 20,
        eval_fraction: 0.2,
        eval_ks: vec![5, 10],
        seed: 7,
        ..Default::default()
    };
    let output = train(&dataset, &cfg)?;

    println!("epoch  objective  train ndcg@10  eval ndcg@10");
    for epoch in 0..cfg.epochs {
        let pick = |split: &str, metric: &str| {
            output
                .records
                .iter()
                .find(|r| r.epoch == epoch && r.split == split && r.metric == metric)
                .map(|r| r.value)
                .unwrap_or(f64::NAN)
        };
        if epoch % 4 == 0 || epoch + 1 == cfg.epochs {
            println!(
                "{epoch:5}  {:9.4}  {:13.4}  {:12.4}",
                pick("train", "objective"),
                pick("train", "ndcg@10"),
                pick("eval", "ndcg@10"),
            );
        }
    }
    println!(
        "\nrank-estimate clamps hit: {} (floor protects f' while u warms up)",
        output.bank.u_clamps
    );
    Ok(())
}
