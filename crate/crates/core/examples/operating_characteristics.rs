//! Repeats a simulation scenario and prints the operating-characteristics
//! table (bias, RMSE, coverage, interval length, PEHE, rejection rates).
//!
//! Run: `cargo run --release --example operating_characteristics -- [scenario] [variant] [reps]`

use bart_borrow::models::FitSettings;
use bart_borrow::posterior::Method;
use bart_borrow::sim::{run_replications, write_report, ScenarioSpec, Variant};

fn main() -> bart_borrow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scenario: u8 = args.first().and_then(|a| a.parse().ok()).unwrap_or(3);
    let variant: Variant = args.get(1).map_or(Ok(Variant::CondIndep), |a| a.parse())?;
    let reps: usize = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(10);

    let spec = ScenarioSpec::new(scenario, variant, 0);
    let (report, _) = run_replications(&spec, &Method::ALL, reps, &FitSettings::default(), 2024)?;
    println!("{report}");
    println!("as delimited text:");
    write_report(&report, std::io::stdout().lock())
}
