//! Synthetic external control data resembling a trial's control arm.
//!
//! A seedable stand-in for model-based synthetic data generators: control
//! rows are resampled, continuous covariates are jittered, and outcomes are
//! taken from the nearest trial control in covariate space plus noise.

use std::fmt;
use std::str::FromStr;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateKind, TrialDataset};
use crate::error::{input, Error, Result};
use crate::rng::substream;
use crate::stats;

/// Jitter and outcome-noise sd as a fraction of the matching column's sd.
pub const JITTER_FRACTION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthMode {
    /// Same distribution as the trial controls.
    Mimic,
    /// Resampling favours patients with low baseline values.
    CovariateShift,
    /// Mimic, then add `5 - 0.05 * baseline` to the outcome.
    OutcomeShift,
}

impl fmt::Display for SynthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            SynthMode::Mimic => "mimic",
            SynthMode::CovariateShift => "covariate-shift",
            SynthMode::OutcomeShift => "outcome-shift",
        })
    }
}

impl FromStr for SynthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mimic" => Ok(SynthMode::Mimic),
            "covariate-shift" => Ok(SynthMode::CovariateShift),
            "outcome-shift" => Ok(SynthMode::OutcomeShift),
            other => input(format!("unknown synthesis mode `{other}`")),
        }
    }
}

/// Additive outcome shift of the outcome-shift mode.
pub fn outcome_shift(baseline: f64) -> f64 {
    5.0 - 0.05 * baseline
}

/// Draws `n_ext` external control rows (source 1, arm 0) from the trial's
/// control arm. `baseline` names the covariate used by the shift modes.
pub fn synthesize_external(
    trial: &TrialDataset,
    n_ext: usize,
    mode: SynthMode,
    baseline: &str,
    seed: u64,
) -> Result<TrialDataset> {
    if n_ext < 1 {
        return input("n_ext must be at least 1");
    }
    let controls = trial.control_rows(false).into_iter().collect::<Vec<_>>();
    if controls.len() < 10 {
        return input("at least 10 trial control rows are required");
    }
    let b = trial
        .names
        .iter()
        .position(|n| n == baseline)
        .ok_or_else(|| Error::MissingColumn(baseline.to_string()))?;
    let q = trial.n_covariates();
    let col_sd: Vec<f64> = (0..q)
        .map(|j| {
            stats::sd(
                &controls
                    .iter()
                    .map(|&i| trial.covariates[i][j])
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let y_ctrl: Vec<f64> = controls.iter().map(|&i| trial.outcome[i]).collect();
    let ctrl_rows: Vec<Vec<f64>> = controls
        .iter()
        .map(|&i| trial.covariates[i].clone())
        .collect();
    let resid_sd =
        stats::ols_residual_sd(&ctrl_rows, &y_ctrl).unwrap_or_else(|| stats::sd(&y_ctrl));

    let mut rng = substream(seed, &[]);
    let weights: Vec<f64> = match mode {
        SynthMode::CovariateShift => {
            let base: Vec<f64> = ctrl_rows.iter().map(|r| r[b]).collect();
            let (m, s) = (stats::mean(&base), stats::sd(&base).max(f64::MIN_POSITIVE));
            base.iter().map(|v| (-(v - m) / s).exp()).collect()
        }
        _ => vec![1.0; controls.len()],
    };
    let picker = WeightedIndex::new(&weights).map_err(|e| Error::Input(e.to_string()))?;

    let scaled = |x: &[f64], j: usize| {
        if col_sd[j] > 0.0 {
            x[j] / col_sd[j]
        } else {
            0.0
        }
    };
    let mut rows = Vec::with_capacity(n_ext);
    let mut outcome = Vec::with_capacity(n_ext);
    for _ in 0..n_ext {
        let src = &ctrl_rows[picker.sample(&mut rng)];
        let x: Vec<f64> = (0..q)
            .map(|j| match trial.kinds[j] {
                CovariateKind::Binary => src[j],
                CovariateKind::Continuous => {
                    src[j] + JITTER_FRACTION * col_sd[j] * stats::std_normal(&mut rng)
                }
            })
            .collect();
        // Nearest trial control in standardized covariates; first on ties.
        let nearest = (0..ctrl_rows.len())
            .map(|k| {
                let d: f64 = (0..q)
                    .map(|j| (scaled(&x, j) - scaled(&ctrl_rows[k], j)).powi(2))
                    .sum();
                (d, k)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .expect("nonempty")
            .1;
        let mut y = y_ctrl[nearest] + JITTER_FRACTION * resid_sd * stats::std_normal(&mut rng);
        if mode == SynthMode::OutcomeShift {
            y += outcome_shift(x[b]);
        }
        rows.push(x);
        outcome.push(y);
    }
    let _ = rng.random::<u8>();
    Ok(TrialDataset {
        outcome,
        arm: vec![0; n_ext],
        source: vec![1; n_ext],
        covariates: rows,
        names: trial.names.clone(),
        kinds: trial.kinds.clone(),
    })
}
