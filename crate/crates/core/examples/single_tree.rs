//! Builds a small decision tree by hand, routes points through it and
//! evaluates its prior probability.
//!
//! Run: `cargo run --example single_tree`

use bart_borrow::bart::{log_tree_structure_prior, BartHyper, DecisionTree, SplitRule, SplitSpace};

fn main() -> bart_borrow::Result<()> {
    // Split on the data source first (trial = level 0 to the left), then on
    // the covariate within the trial branch.
    let mut tree = DecisionTree::leaf(1, 0.0);
    let (trial, external) = tree.grow(0, SplitRule::Levels { left: 0b01 }, 0.0, -0.3)?;
    tree.grow(
        trial,
        SplitRule::Threshold {
            var: 0,
            threshold: 0.6,
        },
        0.694,
        1.2,
    )?;

    println!(
        "nodes: {}, leaves: {}, depth: {}",
        tree.n_nodes(),
        tree.n_leaves(),
        tree.max_depth()
    );
    for (x, s) in [(0.5, 0), (0.7, 0), (0.5, 1)] {
        println!("g(x = {x}, s = {s}) = {}", tree.evaluate(&[x], s)?);
    }
    println!("external branch is a leaf: {}", tree.is_leaf(external));

    let cutpoints: Vec<f64> = (1..100).map(|k| k as f64 / 100.0).collect();
    let space = SplitSpace::new(vec![cutpoints], 0b11);
    let lp = log_tree_structure_prior(&tree, &BartHyper::default(), &space);
    println!("log prior probability of this structure: {lp:.4}");
    Ok(())
}
