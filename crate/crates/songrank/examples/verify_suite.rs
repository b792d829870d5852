//! Run every verification battery against the analytic oracles and print the
//! report table.
//!
//! Each battery rebuilds its target quantity from an independent inline
//! formula (finite differences, grid search, bisection) and compares the
//! production code against it; a row fails when the observed error exceeds
//! its bound.
//!
//! ```sh
//! cargo run --example verify_suite
//! ```

use songrank::verify::{run_batteries, VerifyFault};

fn main() -> songrank::Result<()> {
    let report = run_batteries(None, 1234, VerifyFault::None)?;
    print!("{}", report.render_table());
    println!(
        "\n{} rows, all passing: {}",
        report.rows.len(),
        report.passed()
    );

    // The harness must also be able to fail: inject a sign error and watch
    // the affected battery catch it.
    let faulty = run_batteries(Some("lower-derivs"), 1234, VerifyFault::LowerGradSign)?;
    println!(
        "with an injected gradient sign flip the lower-derivs battery passes: {}",
        faulty.passed()
    );
    Ok(())
}
