//! Generate a synthetic ranking dataset, round-trip it through the LETOR
//! text format, and standardize its features.
//!
//! ```sh
//! cargo run --example generate_dataset
//! ```

use songrank::data::{parse_letor, serialize_letor, synth_generate, zscore};

fn main() -> songrank::Result<()> {
    let dataset = synth_generate(8, 12, 4, 3, 42)?;
    println!(
        "{} queries, {} items each, {} features, {} (query, relevant item) pairs",
        dataset.groups.len(),
        dataset.groups[0].n_items(),
        dataset.d_feat(),
        dataset.n_pairs()
    );

    let text = serialize_letor(&dataset);
    println!("\nfirst LETOR lines:");
    for line in text.lines().take(3) {
        println!("  {line}");
    }

    let reparsed = parse_letor(&text)?;
    assert_eq!(reparsed.groups.len(), dataset.groups.len());
    assert_eq!(serialize_letor(&reparsed), text);
    println!("\ntext round-trip is exact");

    let standardized = zscore(&dataset)?;
    let col0: Vec<f64> = standardized
        .groups
        .iter()
        .flat_map(|g| (0..g.n_items()).map(|i| g.feature_row(i)[0]))
        .collect();
    let mean = col0.iter().sum::<f64>() / col0.len() as f64;
    let var = col0.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col0.len() as f64;
    println!("feature 0 after zscore: mean {mean:.2e}, variance {var:.4}");
    Ok(())
}
