//! Fits all six methods (BART, HLM, NNHM and their no-borrowing variants)
//! to one dataset whose external source violates conditional independence.
//!
//! Run: `cargo run --release --example comparators`

use bart_borrow::effects::estimate_cate;
use bart_borrow::models::{fit_methods, FitSettings};
use bart_borrow::posterior::Method;
use bart_borrow::sim::{cate_discrepancy, generate_scenario, ScenarioSpec, Variant};

fn main() -> bart_borrow::Result<()> {
    let gen = generate_scenario(&ScenarioSpec::new(3, Variant::Violated, 5))?;
    println!(
        "true CATE {:.3}; external CATE discrepancy {:.3}",
        gen.cate_true,
        cate_discrepancy(&gen, 1)?
    );
    let points = gen.dataset.trial_covariates();
    let fits = fit_methods(&gen.dataset, &Method::ALL, &FitSettings::default())?;
    println!("{:<7}{:>9}{:>9}{:>9}", "method", "CATE", "lo95", "hi95");
    for post in &fits {
        let s = estimate_cate(post, &points)?;
        println!(
            "{:<7}{:>9.3}{:>9.3}{:>9.3}",
            post.method.name(),
            s.mean,
            s.ci_low,
            s.ci_high
        );
    }
    Ok(())
}
