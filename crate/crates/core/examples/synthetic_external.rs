//! Loads a trial in the acupuncture schema, generates synthetic external
//! controls in each mode, and compares covariate and outcome means.
//!
//! Run: `cargo run --example synthetic_external -- [data.csv]`
//! (defaults to the bundled 20-row synthetic fixture)

use bart_borrow::data::{covariate_means, load_dataset, DatasetSchema};
use bart_borrow::stats;
use bart_borrow::synth::{synthesize_external, SynthMode};

fn main() -> bart_borrow::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| {
        concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/tests/fixtures/acupuncture_synthetic.csv"
        )
        .to_string()
    });
    let trial = load_dataset(&path, &DatasetSchema::acupuncture())?;
    let controls = trial.control_rows(false);
    println!(
        "{} complete cases, {} controls",
        trial.n_rows(),
        controls.len()
    );
    let y: Vec<f64> = controls.iter().map(|&i| trial.outcome[i]).collect();
    println!(
        "trial controls: outcome {:.2}, covariates {:?}",
        stats::mean(&y),
        covariate_means(&trial, &controls)
    );

    for mode in [
        SynthMode::Mimic,
        SynthMode::CovariateShift,
        SynthMode::OutcomeShift,
    ] {
        let ext = synthesize_external(&trial, 200, mode, "pk1", 1)?;
        let all: Vec<usize> = (0..ext.n_rows()).collect();
        let means = covariate_means(&ext, &all);
        println!(
            "{mode:>15}: outcome {:.2}, baseline {:.2}, age {:.2}",
            stats::mean(&ext.outcome),
            means["pk1"],
            means["age"]
        );
    }
    Ok(())
}
