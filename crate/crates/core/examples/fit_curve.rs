//! Fits a sum-of-trees model to a noisy nonlinear curve and compares the
//! posterior mean and 95% band with the truth.
//!
//! Run: `cargo run --release --example fit_curve`

use bart_borrow::bart::{fit_bart, BartData, BartHyper, McmcConfig};
use bart_borrow::rng::substream;
use bart_borrow::stats;
use rand::Rng;

fn truth(x: f64) -> f64 {
    (6.0 * x).sin() + 2.0 * x
}

fn main() -> bart_borrow::Result<()> {
    let mut rng = substream(1, &[]);
    let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random::<f64>()]).collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|x| truth(x[0]) + 0.3 * stats::std_normal(&mut rng))
        .collect();

    let data = BartData::new(&rows, None, y)?;
    let fit = fit_bart(&data, &BartHyper::default(), &McmcConfig::new(1100, 100, 7))?;
    println!(
        "posterior mean residual sd: {:.3} (true 0.3)",
        stats::mean(&fit.sigma)
    );
    println!("move counts (grow, prune, change, swap): {:?}", fit.moves);

    println!(
        "{:>5} {:>8} {:>8} {:>8} {:>8}",
        "x", "truth", "mean", "lo95", "hi95"
    );
    for k in 0..=10 {
        let x = k as f64 / 10.0;
        let draws: Vec<f64> = fit
            .forests
            .iter()
            .map(|f| f.predict(&[x], 0))
            .collect::<Result<_, _>>()?;
        let sorted = stats::sorted_copy(&draws);
        println!(
            "{x:>5.1} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            truth(x),
            stats::mean(&draws),
            stats::quantile_sorted(&sorted, 0.025),
            stats::quantile_sorted(&sorted, 0.975)
        );
    }
    Ok(())
}
