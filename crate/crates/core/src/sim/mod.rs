//! Simulation study: scenario generators, per-dataset metrics, the
//! replication runner and its report format.

pub mod metrics;
pub mod report;
pub mod scenario;

use rayon::prelude::*;

use crate::effects::EffectMatrix;
use crate::error::{input, Result};
use crate::models::{fit_methods, FitSettings};
use crate::posterior::Method;
use crate::rng::derive_seed;

pub use metrics::{compute_metrics, MetricsRow};
pub use report::{read_report, write_report, ReplicationReport, ReportRow};
pub use scenario::{
    cate_discrepancy, generate_scenario, GeneratedData, ScenarioSpec, Truth, Variant,
};

/// Everything measured on one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicationOutcome {
    pub cate_true: f64,
    /// CATE discrepancy of each external source, in source order.
    pub discrepancy: Vec<f64>,
    /// One entry per requested method; `None` if that fit failed.
    pub metrics: Vec<Option<MetricsRow>>,
}

/// Generates dataset `rep` and scores every method on it.
pub fn run_replication(
    spec: &ScenarioSpec,
    methods: &[Method],
    settings: &FitSettings,
    master_seed: u64,
    rep: u64,
) -> Result<ReplicationOutcome> {
    let gen = generate_scenario(&spec.with_seed(derive_seed(master_seed, &[rep, 0])))?;
    let mut fs = settings.clone();
    fs.mcmc.seed = derive_seed(master_seed, &[rep, 1]);
    let points = gen.dataset.trial_covariates();
    let truths = gen.trial_effects();
    let d = spec.test_margin();
    let metrics = match fit_methods(&gen.dataset, methods, &fs) {
        Ok(fits) => fits
            .iter()
            .map(|post| {
                let m = EffectMatrix::new(post, &points).ok()?;
                compute_metrics(&m.cate(), &m.point_summaries(), &truths, gen.cate_true, d).ok()
            })
            .collect(),
        Err(_) => vec![None; methods.len()],
    };
    let discrepancy = (1..=spec.n_sources())
        .map(|s| cate_discrepancy(&gen, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicationOutcome {
        cate_true: gen.cate_true,
        discrepancy,
        metrics,
    })
}

/// Runs `n_reps` independent replications in parallel. Replication `r`
/// draws everything from substreams of `(master_seed, r)`, and results are
/// aggregated in replication order, so the report does not depend on the
/// thread count.
pub fn run_replications(
    spec: &ScenarioSpec,
    methods: &[Method],
    n_reps: usize,
    settings: &FitSettings,
    master_seed: u64,
) -> Result<(ReplicationReport, Vec<ReplicationOutcome>)> {
    if n_reps < 1 {
        return input("at least one replication is required");
    }
    if methods.is_empty() {
        return input("at least one method is required");
    }
    spec.validate()?;
    let outcomes: Vec<ReplicationOutcome> = (0..n_reps as u64)
        .into_par_iter()
        .map(|r| run_replication(spec, methods, settings, master_seed, r))
        .collect::<Result<Vec<_>>>()?;
    let report = ReplicationReport::aggregate(spec, methods, master_seed, &outcomes);
    Ok((report, outcomes))
}
