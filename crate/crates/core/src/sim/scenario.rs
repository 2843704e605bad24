//! Data-generating processes with known response surfaces.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::error::{input, Error, Result};
use crate::rng::{substream, StreamRng};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Control outcome independent of source given covariates.
    CondIndep,
    /// One external source whose control surface differs.
    Violated,
    /// Four external sources; sources 3 and 4 differ.
    MultiSource,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::CondIndep => "cond-indep",
            Variant::Violated => "violated",
            Variant::MultiSource => "multi-source",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cond-indep" | "condindep" | "independent" => Ok(Variant::CondIndep),
            "violated" => Ok(Variant::Violated),
            "multi-source" | "multi" | "multisource" => Ok(Variant::MultiSource),
            other => input(format!("unknown variant `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// 1: one nonlinear covariate; 2: four mixed covariates, exponential
    /// control surface; 3: covariates unrelated to the outcome.
    pub scenario: u8,
    pub variant: Variant,
    pub n_trial: usize,
    /// Rows per external source.
    pub n_external: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    /// 50 trial patients and 200 external controls, or 4 x 50 external
    /// controls for the multi-source variant.
    pub fn new(scenario: u8, variant: Variant, seed: u64) -> Self {
        ScenarioSpec {
            scenario,
            variant,
            n_trial: 50,
            n_external: if variant == Variant::MultiSource {
                50
            } else {
                200
            },
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ScenarioSpec { seed, ..*self }
    }

    pub fn n_sources(&self) -> u32 {
        if self.variant == Variant::MultiSource {
            4
        } else {
            1
        }
    }

    /// Margin `d` of the second superiority test.
    pub fn test_margin(&self) -> f64 {
        if self.scenario == 2 {
            0.25
        } else {
            0.08
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.scenario) {
            return input(format!(
                "scenario must be 1, 2 or 3 (got {})",
                self.scenario
            ));
        }
        if self.n_trial < 4 || self.n_external < 1 {
            return input("need at least 4 trial rows and 1 row per external source");
        }
        Ok(())
    }
}

/// Closed-form mean surfaces of a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub scenario: u8,
    pub variant: Variant,
    pub beta0: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta_diff: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Truth {
    /// Whether source `s` has the shifted control surface.
    pub fn is_shifted(&self, s: u32) -> bool {
        match self.variant {
            Variant::CondIndep => false,
            Variant::Violated => s >= 1,
            Variant::MultiSource => s >= 3,
        }
    }

    /// E[Y | T = 0, x, S = s].
    pub fn control_mean(&self, x: &[f64], s: u32) -> f64 {
        let shifted = self.is_shifted(s);
        match self.scenario {
            1 if shifted => 1.4 - 1.2 * x[0] * x[0],
            1 => 1.0 - x[0] * x[0],
            2 if shifted => {
                let b: Vec<f64> = self
                    .beta0
                    .iter()
                    .zip(&self.beta_diff)
                    .map(|(a, d)| a + d)
                    .collect();
                dot(x, &b).exp()
            }
            2 => dot(x, &self.beta0).exp(),
            _ if shifted => 0.4,
            _ => 0.2,
        }
    }

    /// E[Y | T = 1, x, S = 0].
    pub fn treated_mean(&self, x: &[f64]) -> f64 {
        match self.scenario {
            1 => 0.84 + (x[0] - 1.0).powi(2),
            2 => dot(x, &self.beta1) + 5.0,
            _ => 0.7,
        }
    }

    /// True conditional effect at `x`.
    pub fn effect(&self, x: &[f64]) -> f64 {
        self.treated_mean(x) - self.control_mean(x, 0)
    }

    pub fn noise_sd(&self) -> f64 {
        if self.scenario == 2 {
            0.5
        } else {
            0.1
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedData {
    pub spec: ScenarioSpec,
    pub dataset: TrialDataset,
    pub truth: Truth,
    /// Mean true effect over the realized trial covariates.
    pub cate_true: f64,
}

impl GeneratedData {
    pub fn trial_effects(&self) -> Vec<f64> {
        self.dataset
            .trial_covariates()
            .iter()
            .map(|x| self.truth.effect(x))
            .collect()
    }
}

/// Sum with Neumaier compensation, so averages of equal terms are exact.
fn exact_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp, mut n) = (0.0f64, 0.0f64, 0usize);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
        n += 1;
    }
    (sum + comp) / n as f64
}

/// Mean over trial rows of E[Y|T=0,x,S=0] - E[Y|T=0,x,S=s].
pub fn cate_discrepancy(gen: &GeneratedData, s: u32) -> Result<f64> {
    if s == 0 || s > gen.spec.n_sources() {
        return input(format!(
            "source {s} is not an external source of this dataset"
        ));
    }
    let xs = gen.dataset.trial_covariates();
    Ok(exact_mean(xs.iter().map(|x| {
        gen.truth.control_mean(x, 0) - gen.truth.control_mean(x, s)
    })))
}

fn pick<R: Rng + ?Sized>(rng: &mut R, values: &[f64], probs: &[f64]) -> f64 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (v, p) in values.iter().zip(probs) {
        acc += p;
        if u < acc {
            return *v;
        }
    }
    *values.last().expect("nonempty")
}

/// Random 4 x 4 correlation matrix with off-diagonals drawn from a small
/// set; repaired to be positive definite by eigenvalue clipping when needed.
pub fn sample_correlation<R: Rng + ?Sized>(rng: &mut R, q: usize) -> DMatrix<f64> {
    let mut m = DMatrix::identity(q, q);
    for i in 0..q {
        for j in i + 1..q {
            let v = pick(rng, &[0.1, 0.4, 0.7, -0.3], &[0.4, 0.3, 0.1, 0.2]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    nearest_correlation(m)
}

/// Clips eigenvalues at 1e-6 and rescales to unit diagonal; a positive
/// definite input is returned unchanged.
pub fn nearest_correlation(m: DMatrix<f64>) -> DMatrix<f64> {
    if m.clone().cholesky().is_some() {
        return m;
    }
    let eig = SymmetricEigen::new(m);
    let clipped = eig.eigenvalues.map(|v| v.max(1e-6));
    let r = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let d = r.diagonal().map(|v| 1.0 / v.sqrt());
    let mut out = DMatrix::from_diagonal(&d) * r * DMatrix::from_diagonal(&d);
    for i in 0..out.nrows() {
        out[(i, i)] = 1.0;
        for j in 0..i {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Covariate law of one group of rows.
#[derive(Clone, Copy)]
struct CovariateLaw {
    mean: f64,
    sd: f64,
}

const TRIAL_LIKE: CovariateLaw = CovariateLaw { mean: 0.7, sd: 0.2 };
const EXTERNAL_LIKE: CovariateLaw = CovariateLaw { mean: 0.3, sd: 0.4 };
const COMMON: CovariateLaw = CovariateLaw { mean: 0.5, sd: 0.5 };

fn covariate_law(spec: &ScenarioSpec, s: u32) -> CovariateLaw {
    if spec.scenario == 3 {
        return COMMON;
    }
    match (s, spec.variant) {
        (0, _) => TRIAL_LIKE,
        (1 | 3, Variant::MultiSource) => TRIAL_LIKE,
        _ => EXTERNAL_LIKE,
    }
}

fn draw_covariates(
    rng: &mut StreamRng,
    spec: &ScenarioSpec,
    law: CovariateLaw,
    chol_l: Option<&DMatrix<f64>>,
) -> Vec<f64> {
    match chol_l {
        None => vec![law.mean + law.sd * stats::std_normal(rng)],
        Some(l) => {
            let z = nalgebra::DVector::from_fn(4, |_, _| stats::std_normal(rng));
            let v = l * z;
            let mut x: Vec<f64> = v.iter().map(|e| law.mean + law.sd * e).collect();
            let p = if spec.scenario == 2 {
                stats::std_normal_cdf(x[3] - 0.5)
            } else {
                stats::std_normal_cdf(2.0 * x[3] - 1.0)
            };
            x[3] = f64::from(rng.random::<f64>() < p);
            x
        }
    }
}

/// Draws one dataset; coefficient vectors and the correlation matrix are
/// redrawn every call and shared by trial and external rows.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<GeneratedData> {
    spec.validate()?;
    let mut rng = substream(spec.seed, &[]);
    let (omega_l, beta0, beta1, beta_diff) = if spec.scenario == 1 {
        (None, vec![], vec![], vec![])
    } else {
        let omega = sample_correlation(&mut rng, 4);
        let l = omega
            .cholesky()
            .ok_or_else(|| Error::Input("correlation repair failed".into()))?
            .l();
        let beta = |rng: &mut StreamRng| {
            (0..4)
                .map(|_| pick(rng, &[0.1, 0.7], &[0.3, 0.7]))
                .collect::<Vec<_>>()
        };
        let b0 = beta(&mut rng);
        let b1 = beta(&mut rng);
        let diff = loop {
            let d: Vec<f64> = (0..4)
                .map(|_| pick(&mut rng, &[0.2, -0.2, 0.0], &[0.3, 0.3, 0.4]))
                .collect();
            if d.iter().any(|&v| v != 0.0) {
                break d;
            }
        };
        (Some(l), b0, b1, diff)
    };
    let truth = Truth {
        scenario: spec.scenario,
        variant: spec.variant,
        beta0,
        beta1,
        beta_diff,
    };
    let names: Vec<String> = if spec.scenario == 1 {
        vec!["x".into()]
    } else {
        (1..=4).map(|j| format!("x{j}")).collect()
    };

    let (mut outcome, mut arm, mut source, mut covariates) = (vec![], vec![], vec![], vec![]);
    // Trial arms: Bernoulli(1/2), redrawn in the rare case an arm has < 2 rows.
    let arms: Vec<u8> = loop {
        let a: Vec<u8> = (0..spec.n_trial)
            .map(|_| u8::from(rng.random::<f64>() < 0.5))
            .collect();
        let treated = a.iter().filter(|&&t| t == 1).count();
        if treated >= 2 && spec.n_trial - treated >= 2 {
            break a;
        }
    };
    let sd = truth.noise_sd();
    for t in arms {
        let x = draw_covariates(&mut rng, spec, covariate_law(spec, 0), omega_l.as_ref());
        let mean = if t == 1 {
            truth.treated_mean(&x)
        } else {
            truth.control_mean(&x, 0)
        };
        outcome.push(mean + sd * stats::std_normal(&mut rng));
        arm.push(t);
        source.push(0);
        covariates.push(x);
    }
    for s in 1..=spec.n_sources() {
        for _ in 0..spec.n_external {
            let x = draw_covariates(&mut rng, spec, covariate_law(spec, s), omega_l.as_ref());
            outcome.push(truth.control_mean(&x, s) + sd * stats::std_normal(&mut rng));
            arm.push(0);
            source.push(s);
            covariates.push(x);
        }
    }
    let dataset = TrialDataset::new(outcome, arm, source, covariates, names)?;
    let cate_true = exact_mean(dataset.trial_covariates().iter().map(|x| truth.effect(x)));
    Ok(GeneratedData {
        spec: *spec,
        dataset,
        truth,
        cate_true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_one_effect_curve() {
        let g = generate_scenario(&ScenarioSpec::new(1, Variant::CondIndep, 1)).unwrap();
        let t = &g.truth;
        assert!((t.effect(&[0.0]) - 0.84).abs() < 1e-12);
        assert!((t.effect(&[1.0]) - 0.84).abs() < 1e-12);
        assert!((t.effect(&[0.7]) - 0.42).abs() < 1e-12);
        // Numeric oracle: the algebraic form 0.84 + 2x^2 - 2x.
        for k in 0..=20 {
            let x = k as f64 / 20.0;
            assert!((t.effect(&[x]) - (0.84 + 2.0 * x * x - 2.0 * x)).abs() < 1e-12);
        }
        assert_eq!(g.dataset.n_rows(), 250);
        assert_eq!(g.dataset.n_trial(), 50);
        assert_eq!(
            g.dataset.control_rows(true).len() - g.dataset.control_rows(false).len(),
            200
        );
    }

    #[test]
    fn violated_surfaces() {
        let g = generate_scenario(&ScenarioSpec::new(1, Variant::Violated, 2)).unwrap();
        assert!((g.truth.control_mean(&[0.5], 1) - (1.4 - 1.2 * 0.25)).abs() < 1e-12);
        let g3 = generate_scenario(&ScenarioSpec::new(3, Variant::Violated, 2)).unwrap();
        assert_eq!(cate_discrepancy(&g3, 1).unwrap() * 100.0, -20.0);
        assert!(g3.trial_effects().iter().all(|&e| (e - 0.5).abs() < 1e-15));
        assert!(cate_discrepancy(&g3, 2).is_err());
    }

    #[test]
    fn cond_indep_discrepancy_is_zero() {
        for sc in 1..=3 {
            let g = generate_scenario(&ScenarioSpec::new(sc, Variant::CondIndep, 4)).unwrap();
            assert_eq!(cate_discrepancy(&g, 1).unwrap(), 0.0);
            for k in 0..10 {
                let x = vec![k as f64 / 10.0; g.dataset.n_covariates()];
                assert_eq!(g.truth.control_mean(&x, 0), g.truth.control_mean(&x, 1));
            }
        }
    }

    #[test]
    fn multi_source_layout() {
        let g = generate_scenario(&ScenarioSpec::new(2, Variant::MultiSource, 5)).unwrap();
        assert_eq!(g.dataset.sources(), [0, 1, 2, 3, 4]);
        assert_eq!(g.dataset.n_rows(), 250);
        assert!(!g.truth.is_shifted(2) && g.truth.is_shifted(3));
        assert!(g.truth.beta_diff.iter().any(|&v| v != 0.0));
        assert!(g
            .dataset
            .covariates
            .iter()
            .all(|r| r[3] == 0.0 || r[3] == 1.0));
    }

    #[test]
    fn covariate_moments() {
        let spec = ScenarioSpec {
            n_trial: 1000,
            n_external: 1000,
            ..ScenarioSpec::new(1, Variant::CondIndep, 6)
        };
        let g = generate_scenario(&spec).unwrap();
        let col = |s: u32| -> Vec<f64> {
            (0..g.dataset.n_rows())
                .filter(|&i| g.dataset.source[i] == s)
                .map(|i| g.dataset.covariates[i][0])
                .collect()
        };
        let tol = 4.0 / (1000f64).sqrt();
        let (t, e) = (col(0), col(1));
        assert!((stats::mean(&t) - 0.7).abs() < 0.2 * tol);
        assert!((stats::sd(&t) - 0.2).abs() < 0.2 * tol);
        assert!((stats::mean(&e) - 0.3).abs() < 0.4 * tol);
        assert!((stats::sd(&e) - 0.4).abs() < 0.4 * tol);
        let treated = g.dataset.treated_rows().len() as f64;
        // 99% binomial band around 500.
        assert!((treated - 500.0).abs() < 2.576 * (250.0f64).sqrt());
    }

    #[test]
    fn correlation_repair() {
        let mut m = DMatrix::from_element(4, 4, -0.3);
        m.fill_diagonal(1.0);
        m[(0, 1)] = 0.7;
        m[(1, 0)] = 0.7;
        m[(0, 2)] = 0.7;
        m[(2, 0)] = 0.7;
        let r = nearest_correlation(m);
        assert!(r.clone().cholesky().is_some());
        assert!(r.diagonal().iter().all(|&d| (d - 1.0).abs() < 1e-12));
        let mut rng = substream(1, &[]);
        for _ in 0..200 {
            assert!(sample_correlation(&mut rng, 4).cholesky().is_some());
        }
    }

    #[test]
    fn same_seed_same_data() {
        let s = ScenarioSpec::new(2, Variant::Violated, 77);
        assert_eq!(
            generate_scenario(&s).unwrap().dataset,
            generate_scenario(&s).unwrap().dataset
        );
    }
}
