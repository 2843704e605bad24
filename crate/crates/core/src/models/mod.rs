//! The six compared methods behind one entry point.

pub mod linear;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bart::{fit_bart, BartData, BartFit, BartHyper, McmcConfig};
use crate::data::{CovariateKind, TrialDataset};
use crate::error::{input, Result};
use crate::posterior::{Method, PosteriorDraws, Surface};
use crate::rng::{derive_seed, substream};
use linear::{gibbs, Group, LinearSpec, Standardizer};

/// Settings shared by every method.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitSettings {
    pub hyper: BartHyper,
    pub mcmc: McmcConfig,
    /// z-score continuous covariates for the linear models.
    pub standardize: bool,
}

/// Substream roles under the master seed; the treated-arm fits of a model
/// family use one role, so the borrowing and no-borrowing variants share them.
#[derive(Clone, Copy)]
#[repr(u64)]
enum Role {
    BartControl = 1,
    BartTreated = 2,
    HlmControl = 3,
    HlmMinusControl = 4,
    HlmTreated = 5,
    NnhmControl = 6,
    NnhmMinusControl = 7,
    NnhmTreated = 8,
}

fn role_seed(mcmc: &McmcConfig, role: Role) -> u64 {
    derive_seed(mcmc.seed, &[role as u64])
}

fn rows_of(data: &TrialDataset, rows: &[usize]) -> Vec<Vec<f64>> {
    rows.iter().map(|&i| data.covariates[i].clone()).collect()
}

fn outcomes_of(data: &TrialDataset, rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| data.outcome[i]).collect()
}

fn bart_control(data: &TrialDataset, borrow: bool, s: &FitSettings) -> Result<BartFit> {
    let rows = data.control_rows(borrow);
    let source = borrow.then(|| rows.iter().map(|&i| data.source[i]).collect());
    let d = BartData::new(&rows_of(data, &rows), source, outcomes_of(data, &rows))?;
    fit_bart(
        &d,
        &s.hyper,
        &s.mcmc.with_seed(role_seed(&s.mcmc, Role::BartControl)),
    )
}

fn bart_treated(data: &TrialDataset, s: &FitSettings) -> Result<BartFit> {
    let rows = data.treated_rows();
    let d = BartData::new(&rows_of(data, &rows), None, outcomes_of(data, &rows))?;
    fit_bart(
        &d,
        &s.hyper,
        &s.mcmc.with_seed(role_seed(&s.mcmc, Role::BartTreated)),
    )
}

fn transform(data: &TrialDataset, borrow: bool, s: &FitSettings) -> Standardizer {
    if !s.standardize {
        return Standardizer::identity(data.n_covariates());
    }
    let rows: Vec<usize> = (0..data.n_rows())
        .filter(|&i| borrow || data.source[i] == 0)
        .collect();
    let binary: Vec<bool> = data
        .kinds
        .iter()
        .map(|k| *k == CovariateKind::Binary)
        .collect();
    Standardizer::fit(&rows_of(data, &rows), &binary)
}

/// Linear-model draws for one arm. Controls are grouped by source when
/// `hierarchical`; otherwise all rows form one group with flat priors.
fn linear_arm(
    data: &TrialDataset,
    rows: &[usize],
    hierarchical: bool,
    use_covariates: bool,
    tf: Standardizer,
    mcmc: &McmcConfig,
    seed: u64,
) -> Result<linear::LinearDraws> {
    let mut by_source: BTreeMap<u32, Group> = BTreeMap::new();
    for &i in rows {
        let key = if hierarchical { data.source[i] } else { 0 };
        let g = by_source.entry(key).or_default();
        g.x.push(data.covariates[i].clone());
        g.y.push(data.outcome[i]);
    }
    let spec = LinearSpec {
        labels: by_source.keys().copied().collect(),
        groups: by_source.into_values().collect(),
        hierarchical,
        use_covariates,
        n_covariates: data.n_covariates(),
        transform: tf,
    };
    gibbs(&spec, mcmc.n_iter, mcmc.n_burn, &mut substream(seed, &[]))
}

fn linear_family(data: &TrialDataset, method: Method, s: &FitSettings) -> Result<PosteriorDraws> {
    let borrow = method.borrows();
    let covs = matches!(method, Method::Hlm | Method::HlmMinus);
    if covs && data.n_covariates() == 0 {
        return input("HLM needs at least one covariate");
    }
    let control_rows = data.control_rows(borrow);
    if covs && borrow {
        for src in data.sources() {
            if control_rows
                .iter()
                .filter(|&&i| data.source[i] == src)
                .count()
                < 2
            {
                return input(format!("source {src} has fewer than two control rows"));
            }
        }
    }
    let tf = transform(data, borrow, s);
    let (c_role, t_role) = match method {
        Method::Hlm => (Role::HlmControl, Role::HlmTreated),
        Method::HlmMinus => (Role::HlmMinusControl, Role::HlmTreated),
        Method::Nnhm => (Role::NnhmControl, Role::NnhmTreated),
        _ => (Role::NnhmMinusControl, Role::NnhmTreated),
    };
    let control = linear_arm(
        data,
        &control_rows,
        borrow,
        covs,
        tf.clone(),
        &s.mcmc,
        role_seed(&s.mcmc, c_role),
    )?;
    let treated = linear_arm(
        data,
        &data.treated_rows(),
        false,
        covs,
        tf,
        &s.mcmc,
        role_seed(&s.mcmc, t_role),
    )?;
    let (s0, s1) = (control.sigma.clone(), treated.sigma.clone());
    PosteriorDraws::new(method, Arc::new(control), Arc::new(treated), s0, s1)
}

fn check_arms(data: &TrialDataset) -> Result<()> {
    data.validate()
}

/// Fits one method.
pub fn fit_method(data: &TrialDataset, method: Method, s: &FitSettings) -> Result<PosteriorDraws> {
    Ok(fit_methods(data, &[method], s)?.remove(0))
}

/// Fits several methods; BART and BART- share one treated-arm fit.
pub fn fit_methods(
    data: &TrialDataset,
    methods: &[Method],
    s: &FitSettings,
) -> Result<Vec<PosteriorDraws>> {
    check_arms(data)?;
    s.mcmc.validate()?;
    let mut treated_bart: Option<Arc<BartFit>> = None;
    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let draws = match m {
            Method::Bart | Method::BartMinus => {
                let treated = match &treated_bart {
                    Some(t) => Arc::clone(t),
                    None => {
                        let t = Arc::new(bart_treated(data, s)?);
                        treated_bart = Some(Arc::clone(&t));
                        t
                    }
                };
                let control = Arc::new(bart_control(data, m.borrows(), s)?);
                let (s0, s1) = (control.sigma.clone(), treated.sigma.clone());
                PosteriorDraws::new(
                    m,
                    control as Arc<dyn Surface>,
                    treated as Arc<dyn Surface>,
                    s0,
                    s1,
                )?
            }
            _ => linear_family(data, m, s)?,
        };
        out.push(draws);
    }
    Ok(out)
}

/// Options for methods named in configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct MethodList(pub Vec<Method>);

impl MethodList {
    pub fn parse(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(MethodList(Method::ALL.to_vec()));
        }
        s.split(',')
            .map(Method::parse)
            .collect::<Result<Vec<_>>>()
            .map(MethodList)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::stats;
    use rand::Rng;

    fn toy(n_ext: usize, seed: u64) -> TrialDataset {
        let mut rng = substream(seed, &[]);
        let (mut y, mut arm, mut src, mut x) = (vec![], vec![], vec![], vec![]);
        for i in 0..40 + n_ext {
            let ext = i >= 40;
            let t = u8::from(!ext && i % 2 == 0);
            let xi: f64 = rng.random();
            y.push(1.0 + xi + 0.5 * f64::from(t) + 0.1 * stats::std_normal(&mut rng));
            arm.push(t);
            src.push(u32::from(ext));
            x.push(vec![xi]);
        }
        TrialDataset::new(y, arm, src, x, vec!["x".into()]).unwrap()
    }

    fn quick() -> FitSettings {
        FitSettings {
            hyper: BartHyper {
                n_trees: 20,
                ..BartHyper::default()
            },
            mcmc: McmcConfig::new(300, 100, 4),
            standardize: false,
        }
    }

    fn cate_mean(p: &PosteriorDraws, pts: &[Vec<f64>]) -> f64 {
        let l = p.n_draws();
        (0..l)
            .map(|d| {
                pts.iter()
                    .map(|x| p.eval_treated(d, x) - p.eval_control(d, x, 0))
                    .sum::<f64>()
                    / pts.len() as f64
            })
            .sum::<f64>()
            / l as f64
    }

    #[test]
    fn every_method_recovers_constant_effect() {
        let data = toy(60, 1);
        let pts = data.trial_covariates();
        for p in fit_methods(&data, &Method::ALL, &quick()).unwrap() {
            let c = cate_mean(&p, &pts);
            assert!((c - 0.5).abs() < 0.15, "{} {c}", p.method);
            assert_eq!(p.n_draws(), 200);
        }
    }

    #[test]
    fn shared_treated_fit_matches_separate_fit() {
        let data = toy(30, 2);
        let both = fit_methods(&data, &[Method::Bart, Method::BartMinus], &quick()).unwrap();
        let alone = fit_method(&data, Method::BartMinus, &quick()).unwrap();
        let x = [0.3];
        for l in [0, 57, 199] {
            assert_eq!(both[1].eval_treated(l, &x), alone.eval_treated(l, &x));
            assert_eq!(both[0].eval_treated(l, &x), both[1].eval_treated(l, &x));
            assert_eq!(both[1].eval_control(l, &x, 0), alone.eval_control(l, &x, 0));
        }
    }

    #[test]
    fn without_external_rows_bart_equals_bart_minus() {
        let data = toy(0, 3);
        let f = fit_methods(&data, &[Method::Bart, Method::BartMinus], &quick()).unwrap();
        for l in [0, 100] {
            assert_eq!(
                f[0].eval_control(l, &[0.4], 0),
                f[1].eval_control(l, &[0.4], 0)
            );
        }
    }

    #[test]
    fn nnhm_effect_tends_to_arm_difference() {
        let mut y = vec![];
        let mut arm = vec![];
        let mut rng = substream(6, &[]);
        for i in 0..2000 {
            let t = (i % 2) as u8;
            y.push(f64::from(t) + 0.01 * stats::std_normal(&mut rng));
            arm.push(t);
        }
        let data = TrialDataset::new(y, arm, vec![0; 2000], vec![vec![]; 2000], vec![]).unwrap();
        let p = fit_method(&data, Method::Nnhm, &quick()).unwrap();
        assert!((cate_mean(&p, &[vec![]]) - 1.0).abs() < 0.01);
        assert!(fit_method(&data, Method::Hlm, &quick()).is_err());
    }

    #[test]
    fn single_source_nnhm_matches_flat_normal_model() {
        // Vague hierarchy over one source: alpha_00 posterior ~ N(ybar, s^2/n).
        let mut rng = substream(11, &[]);
        let n = 400;
        let (mut y, mut arm) = (vec![], vec![]);
        for i in 0..n {
            let t = u8::from(i % 4 == 0);
            y.push(3.0 + 0.5 * stats::std_normal(&mut rng) + f64::from(t));
            arm.push(t);
        }
        let data =
            TrialDataset::new(y.clone(), arm.clone(), vec![0; n], vec![vec![]; n], vec![]).unwrap();
        let ctrl: Vec<f64> = (0..n).filter(|&i| arm[i] == 0).map(|i| y[i]).collect();
        let p = fit_method(
            &data,
            Method::Nnhm,
            &FitSettings {
                mcmc: McmcConfig::new(4100, 100, 1),
                ..quick()
            },
        )
        .unwrap();
        let draws: Vec<f64> = (0..p.n_draws())
            .map(|l| p.eval_control(l, &[], 0))
            .collect();
        let se = stats::sd(&ctrl) / (ctrl.len() as f64).sqrt();
        assert!((stats::mean(&draws) - stats::mean(&ctrl)).abs() < 0.2 * se);
        assert!((stats::sd(&draws) / se - 1.0).abs() < 0.1);
    }

    #[test]
    fn method_list_parsing() {
        assert_eq!(MethodList::parse("all").unwrap().0.len(), 6);
        assert_eq!(
            MethodList::parse("BART,nnhm-").unwrap().0,
            [Method::Bart, Method::NnhmMinus]
        );
        assert!(MethodList::parse("BART,foo").is_err());
    }
}
