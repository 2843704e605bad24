//! Permutation check of whether the data source predicts the control
//! outcome once covariates are accounted for.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::bart::{fit_bart, BartData, BartHyper, McmcConfig};
use crate::data::TrialDataset;
use crate::error::{input, Result};
use crate::rng::{derive_seed, substream};

/// `1 - SSE / SST`.
pub fn pseudo_r2(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() || y.len() < 2 {
        return input("pseudo R^2 needs two or more paired values");
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return input("pseudo R^2 is undefined for a constant outcome");
    }
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PermutationResult {
    pub observed_r2: f64,
    pub null_r2: Vec<f64>,
    /// Share of permutations whose fit is at least as good as the observed one.
    pub p_value: f64,
    pub n_perm: usize,
}

/// Lighter settings for the 1 + n_perm fits: 50 trees, 500 iterations with
/// 100 burn-in.
pub fn default_permutation_settings() -> (BartHyper, McmcConfig) {
    (
        BartHyper {
            n_trees: 50,
            ..BartHyper::default()
        },
        McmcConfig::new(500, 100, 0),
    )
}

fn fit_r2(
    rows: &[Vec<f64>],
    source: Vec<u32>,
    y: &[f64],
    hyper: &BartHyper,
    mcmc: &McmcConfig,
) -> Result<f64> {
    let data = BartData::new(rows, Some(source), y.to_vec())?;
    let fit = fit_bart(&data, hyper, mcmc)?;
    pseudo_r2(y, &fit.fitted_mean)
}

/// Fits f0(x, s) to the control rows, then refits with the source labels
/// permuted (covariates and outcomes fixed) `n_perm` times. Ties count
/// against rejection.
pub fn permutation_test(
    rows: &[Vec<f64>],
    source: &[u32],
    y: &[f64],
    n_perm: usize,
    hyper: &BartHyper,
    mcmc: &McmcConfig,
    seed: u64,
) -> Result<PermutationResult> {
    if n_perm < 1 {
        return input("at least one permutation is required");
    }
    let mut levels = source.to_vec();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() < 2 {
        return input("the permutation test needs control rows from at least two sources");
    }
    let observed_r2 = fit_r2(
        rows,
        source.to_vec(),
        y,
        hyper,
        &mcmc.with_seed(derive_seed(seed, &[0])),
    )?;
    let null_r2: Vec<f64> = (1..=n_perm as u64)
        .into_par_iter()
        .map(|k| {
            let mut s = source.to_vec();
            s.shuffle(&mut substream(seed, &[k, 1]));
            fit_r2(
                rows,
                s,
                y,
                hyper,
                &mcmc.with_seed(derive_seed(seed, &[k, 2])),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let at_least = null_r2.iter().filter(|&&r| r >= observed_r2).count();
    Ok(PermutationResult {
        observed_r2,
        p_value: at_least as f64 / n_perm as f64,
        null_r2,
        n_perm,
    })
}

/// [`permutation_test`] on the control rows of a dataset.
pub fn permutation_test_ci(
    data: &TrialDataset,
    n_perm: usize,
    hyper: &BartHyper,
    mcmc: &McmcConfig,
    seed: u64,
) -> Result<PermutationResult> {
    let idx = data.control_rows(true);
    let rows: Vec<Vec<f64>> = idx.iter().map(|&i| data.covariates[i].clone()).collect();
    let source: Vec<u32> = idx.iter().map(|&i| data.source[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| data.outcome[i]).collect();
    permutation_test(&rows, &source, &y, n_perm, hyper, mcmc, seed)
}
