//! Checkpoint a run mid-training and resume it bit-identically.
//!
//! The checkpoint serializes the scorer, the estimator bank, and the sampler
//! RNG stream position; a resumed step reproduces the uninterrupted
//! trajectory exactly, including the float bytes.
//!
//! ```sh
//! cargo run --example checkpoint_resume
//! ```

use songrank::data::{synth_generate, IdealDcgTable};
use songrank::optim::{song_step, train, Checkpoint, TrainConfig};

fn main() -> songrank::Result<()> {
    let dataset = synth_generate(12, 15, 5, 3, 3)?;
    let cfg = TrainConfig {
        pairs_per_step: 8,
        items_per_query: 5,
        epochs: 2,
        eval_fraction: 0.0,
        seed: 3,
        ..Default::default()
    };
    let table = IdealDcgTable::build(&dataset, &cfg.eval_ks);

    // Train, checkpoint, and keep going in memory.
    let output = train(&dataset, &cfg)?;
    let json = Checkpoint::capture(&output.state, &output.bank, &output.rng).to_json()?;
    println!("checkpoint payload: {} bytes of JSON", json.len());

    let mut live_state = output.state;
    let mut live_bank = output.bank;
    let mut live_rng = output.rng;
    song_step(
        &dataset, &table, &mut live_state, &mut live_bank, &cfg, &mut live_rng,
    )?;

    // Reload from the serialized bytes and take the same step.
    let loaded = Checkpoint::from_json(&json)?;
    let mut rng = loaded.restore_rng();
    let mut state = loaded.state;
    let mut bank = loaded.bank;
    song_step(&dataset, &table, &mut state, &mut bank, &cfg, &mut rng)?;

    let identical = state == live_state && bank.u == live_bank.u && bank.m == live_bank.m;
    println!("resumed step equals uninterrupted step, bit for bit: {identical}");
    assert!(identical);
    Ok(())
}
