use serde::{Deserialize, Serialize};

use crate::effects::{test_superiority, EffectSummary, PointEffect};
use crate::error::{input, Result};

/// Operating characteristics of one method on one dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub bias: f64,
    /// Root mean squared deviation of the posterior draws from the truth.
    pub rmse: f64,
    pub covered: bool,
    pub ci_length: f64,
    pub pehe: f64,
    /// Test 1 (threshold = truth) rejected: a false positive.
    pub reject_test1: bool,
    /// Test 2 (threshold = truth - d) rejected: a true positive.
    pub reject_test2: bool,
}

pub const TEST_LEVEL: f64 = 0.95;

/// `point_effects[i]` and `true_effects[i]` refer to trial patient `i`.
pub fn compute_metrics(
    summary: &EffectSummary,
    point_effects: &[PointEffect],
    true_effects: &[f64],
    cate_true: f64,
    d: f64,
) -> Result<MetricsRow> {
    if !(d > 0.0) {
        return input("test margin d must be positive");
    }
    if point_effects.len() != true_effects.len() || point_effects.is_empty() {
        return input("one point effect per trial patient is required");
    }
    let l = summary.draws.len() as f64;
    let rmse = (summary
        .draws
        .iter()
        .map(|v| (v - cate_true).powi(2))
        .sum::<f64>()
        / l)
        .sqrt();
    let pehe = (point_effects
        .iter()
        .zip(true_effects)
        .map(|(p, t)| (p.mean - t).powi(2))
        .sum::<f64>()
        / true_effects.len() as f64)
        .sqrt();
    Ok(MetricsRow {
        bias: summary.mean - cate_true,
        rmse,
        covered: summary.ci_low <= cate_true && cate_true <= summary.ci_high,
        ci_length: summary.ci_length(),
        pehe,
        reject_test1: test_superiority(summary, cate_true, TEST_LEVEL).reject,
        reject_test2: test_superiority(summary, cate_true - d, TEST_LEVEL).reject,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effects::Estimand;
    use proptest::prelude::*;

    fn points(v: &[f64]) -> Vec<PointEffect> {
        v.iter()
            .map(|&m| PointEffect {
                mean: m,
                ci_low: m,
                ci_high: m,
            })
            .collect()
    }

    #[test]
    fn exact_draws() {
        let s = EffectSummary::from_draws(Estimand::Cate, vec![0.5; 100]).unwrap();
        let m = compute_metrics(&s, &points(&[0.4, 0.6]), &[0.4, 0.6], 0.5, 0.08).unwrap();
        assert_eq!((m.bias, m.rmse, m.pehe), (0.0, 0.0, 0.0));
        assert!(m.covered && !m.reject_test1 && m.reject_test2);
    }

    #[test]
    fn shifted_draws() {
        let s = EffectSummary::from_draws(Estimand::Cate, vec![0.7; 10]).unwrap();
        let m = compute_metrics(&s, &points(&[0.7]), &[0.5], 0.5, 0.08).unwrap();
        assert!((m.bias - 0.2).abs() < 1e-12 && (m.rmse - 0.2).abs() < 1e-12);
        assert!(!m.covered && m.reject_test1);
        assert!(compute_metrics(&s, &points(&[0.7]), &[0.5], 0.5, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn rmse_dominates_bias(draws in prop::collection::vec(-3.0f64..3.0, 1..100), truth in -3.0f64..3.0) {
            let s = EffectSummary::from_draws(Estimand::Cate, draws).unwrap();
            let m = compute_metrics(&s, &points(&[0.0]), &[truth], truth, 0.1).unwrap();
            prop_assert!(m.rmse + 1e-12 >= m.bias.abs());
            prop_assert!(m.pehe >= 0.0 && m.ci_length >= 0.0);
        }
    }
}
