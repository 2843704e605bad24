//! Treatment-effect estimands computed from paired surface draws.

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::posterior::PosteriorDraws;
use crate::rng::substream;
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimand {
    #[serde(rename = "CATE")]
    Cate,
    #[serde(rename = "PATE")]
    Pate,
}

impl Estimand {
    pub fn name(self) -> &'static str {
        match self {
            Estimand::Cate => "CATE",
            Estimand::Pate => "PATE",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CATE" => Ok(Estimand::Cate),
            "PATE" => Ok(Estimand::Pate),
            other => input(format!("unknown estimand `{other}`")),
        }
    }
}

/// Posterior draws of a scalar estimand with a 95% equal-tailed interval.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectSummary {
    pub estimand: Estimand,
    pub draws: Vec<f64>,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl EffectSummary {
    pub fn from_draws(estimand: Estimand, draws: Vec<f64>) -> Result<Self> {
        if draws.is_empty() {
            return input("no draws to summarize");
        }
        let sorted = stats::sorted_copy(&draws);
        Ok(EffectSummary {
            estimand,
            mean: stats::mean(&draws),
            ci_low: stats::quantile_sorted(&sorted, 0.025),
            ci_high: stats::quantile_sorted(&sorted, 0.975),
            draws,
        })
    }

    /// Equal-tailed interval at an arbitrary level.
    pub fn interval(&self, level: f64) -> (f64, f64) {
        let sorted = stats::sorted_copy(&self.draws);
        let a = (1.0 - level) / 2.0;
        (
            stats::quantile_sorted(&sorted, a),
            stats::quantile_sorted(&sorted, 1.0 - a),
        )
    }

    pub fn ci_length(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    pub fn median(&self) -> f64 {
        stats::quantile_sorted(&stats::sorted_copy(&self.draws), 0.5)
    }
}

/// `delta_l(x) = f1_l(x) - f0_l(x, 0)` for every draw.
pub fn conditional_effect_draws(post: &PosteriorDraws, x: &[f64]) -> Vec<f64> {
    (0..post.n_draws())
        .map(|l| post.eval_treated(l, x) - post.eval_control(l, x, 0))
        .collect()
}

/// Conditional effects of every draw at every point: `values[l][i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectMatrix {
    pub values: Vec<Vec<f64>>,
}

impl EffectMatrix {
    pub fn new(post: &PosteriorDraws, points: &[Vec<f64>]) -> Result<Self> {
        if points.is_empty() {
            return input("at least one covariate point is required");
        }
        let q = post.n_covariates();
        if let Some(bad) = points.iter().find(|p| p.len() != q) {
            return Err(crate::Error::Dimension {
                expected: q,
                got: bad.len(),
            });
        }
        let values = (0..post.n_draws())
            .map(|l| {
                points
                    .iter()
                    .map(|x| post.eval_treated(l, x) - post.eval_control(l, x, 0))
                    .collect()
            })
            .collect();
        Ok(EffectMatrix { values })
    }

    pub fn n_points(&self) -> usize {
        self.values[0].len()
    }

    /// Sample-average effect per draw.
    pub fn cate(&self) -> EffectSummary {
        let draws = self
            .values
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect();
        EffectSummary::from_draws(Estimand::Cate, draws).expect("nonempty")
    }

    /// Bayesian-bootstrap population effect: draw `l` reweights the points
    /// with its own flat-Dirichlet weight vector.
    pub fn pate(&self, seed: u64) -> EffectSummary {
        let draws = self
            .values
            .iter()
            .enumerate()
            .map(|(l, row)| {
                let w = dirichlet_weights(row.len(), seed, l as u64);
                row.iter().zip(&w).map(|(d, w)| d * w).sum()
            })
            .collect();
        EffectSummary::from_draws(Estimand::Pate, draws).expect("nonempty")
    }

    /// Posterior mean and 95% interval of the effect at each point.
    pub fn point_summaries(&self) -> Vec<PointEffect> {
        (0..self.n_points())
            .map(|i| {
                let col: Vec<f64> = self.values.iter().map(|r| r[i]).collect();
                let s = EffectSummary::from_draws(Estimand::Cate, col).expect("nonempty");
                PointEffect {
                    mean: s.mean,
                    ci_low: s.ci_low,
                    ci_high: s.ci_high,
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointEffect {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Flat Dirichlet weights over `n` points: normalized unit exponentials
/// from the substream `(seed, draw)`.
pub fn dirichlet_weights(n: usize, seed: u64, draw: u64) -> Vec<f64> {
    let mut rng = substream(seed, &[draw]);
    let e: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

pub fn estimate_cate(post: &PosteriorDraws, points: &[Vec<f64>]) -> Result<EffectSummary> {
    Ok(EffectMatrix::new(post, points)?.cate())
}

pub fn estimate_pate(
    post: &PosteriorDraws,
    points: &[Vec<f64>],
    seed: u64,
) -> Result<EffectSummary> {
    Ok(EffectMatrix::new(post, points)?.pate(seed))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuperiorityTest {
    /// Posterior probability that the effect exceeds the threshold.
    pub posterior_prob: f64,
    pub reject: bool,
}

/// Rejects `effect <= threshold` when `P(effect > threshold | data) > level`.
pub fn test_superiority(summary: &EffectSummary, threshold: f64, level: f64) -> SuperiorityTest {
    let above = summary.draws.iter().filter(|&&d| d > threshold).count();
    let posterior_prob = above as f64 / summary.draws.len() as f64;
    SuperiorityTest {
        posterior_prob,
        reject: posterior_prob > level,
    }
}
