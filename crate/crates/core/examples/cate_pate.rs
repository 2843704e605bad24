//! Borrows external controls with BART on one simulated trial and reports
//! the conditional and population average treatment effects, per-patient
//! effects and the two superiority tests.
//!
//! Run: `cargo run --release --example cate_pate`

use bart_borrow::effects::{test_superiority, EffectMatrix};
use bart_borrow::models::{fit_method, FitSettings};
use bart_borrow::posterior::Method;
use bart_borrow::sim::{generate_scenario, ScenarioSpec, Variant};

fn main() -> bart_borrow::Result<()> {
    let spec = ScenarioSpec::new(1, Variant::CondIndep, 42);
    let gen = generate_scenario(&spec)?;
    println!(
        "{} trial rows, {} external controls; true CATE {:.3}",
        gen.dataset.n_trial(),
        gen.dataset.n_rows() - gen.dataset.n_trial(),
        gen.cate_true
    );

    let post = fit_method(&gen.dataset, Method::Bart, &FitSettings::default())?;
    let effects = EffectMatrix::new(&post, &gen.dataset.trial_covariates())?;
    for s in [effects.cate(), effects.pate(1)] {
        println!(
            "{}: {:.3} (95% CI {:.3} to {:.3})",
            s.estimand.name(),
            s.mean,
            s.ci_low,
            s.ci_high
        );
    }

    let cate = effects.cate();
    let d = spec.test_margin();
    for (label, threshold) in [
        ("effect > truth", gen.cate_true),
        ("effect > truth - d", gen.cate_true - d),
    ] {
        let t = test_superiority(&cate, threshold, 0.95);
        println!(
            "{label}: P = {:.3}, reject = {}",
            t.posterior_prob, t.reject
        );
    }

    println!("first five patients: x, true effect, posterior mean, 95% CI");
    let truths = gen.trial_effects();
    let trial_x = gen.dataset.trial_covariates();
    for (i, p) in effects.point_summaries().iter().take(5).enumerate() {
        println!(
            "  {:.3}  {:.3}  {:.3}  ({:.3}, {:.3})",
            trial_x[i][0], truths[i], p.mean, p.ci_low, p.ci_high
        );
    }
    Ok(())
}
