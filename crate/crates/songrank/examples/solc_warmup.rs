//! Warm-start the top-K trainer with the listwise cross-entropy phase and
//! compare against training from scratch.
//!
//! The warm-up runs the same compositional machinery on the cross-entropy
//! objective, then the final layer is re-initialized and the main phase
//! starts from the warmed trunk. On a linear scorer the "trunk" is the whole
//! parameter vector, so the effect shows up as a different main-phase start.
//!
//! ```sh
//! cargo run --example solc_warmup
//! ```

use songrank::data::synth_generate;
use songrank::optim::{train, Algorithm, TrainConfig};
use songrank::surrogate::PsiKind;

fn main() -> songrank::Result<()> {
    let dataset = synth_generate(30, 25, 8, 3, 13)?;
    let base = TrainConfig {
        algorithm: Algorithm::KsongPractical,
        k: 5,
        psi: PsiKind::SigmoidLike,
        pairs_per_step: 16,
        items_per_query: 8,
        epochs: 8,
        eval_fraction: 0.2,
        eval_ks: vec![5],
        seed: 13,
        ..Default::default()
    };

    for warmup_epochs in [0usize, 3] {
        let cfg = TrainConfig {
            warmup_epochs,
            ..base.clone()
        };
        let output = train(&dataset, &cfg)?;
        let series: Vec<String> = (0..warmup_epochs + cfg.epochs)
            .filter_map(|e| {
                output
                    .records
                    .iter()
                    .find(|r| r.epoch == e && r.split == "eval" && r.metric == "ndcg@5")
                    .map(|r| format!("{:.3}", r.value))
            })
            .collect();
        println!(
            "warmup {warmup_epochs} epochs -> eval ndcg@5 per epoch: {}",
            series.join(" ")
        );
    }
    println!("\n(the warm-up epochs are the leading entries of the second row)");
    Ok(())
}
