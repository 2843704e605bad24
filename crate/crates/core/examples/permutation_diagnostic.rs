//! Checks whether the data source predicts the control outcome given the
//! covariates, on a shifted and on a conditionally independent dataset.
//!
//! Run: `cargo run --release --example permutation_diagnostic`

use bart_borrow::diagnostics::{default_permutation_settings, permutation_test_ci};
use bart_borrow::sim::{generate_scenario, ScenarioSpec, Variant};

fn main() -> bart_borrow::Result<()> {
    let (hyper, mcmc) = default_permutation_settings();
    for variant in [Variant::Violated, Variant::CondIndep] {
        let gen = generate_scenario(&ScenarioSpec::new(3, variant, 8))?;
        let r = permutation_test_ci(&gen.dataset, 50, &hyper, &mcmc, 3)?;
        let max_null = r.null_r2.iter().copied().fold(f64::MIN, f64::max);
        println!(
            "{variant}: observed pseudo-R2 {:.3}, largest permuted {:.3}, p = {:.2}",
            r.observed_r2, max_null, r.p_value
        );
    }
    Ok(())
}
