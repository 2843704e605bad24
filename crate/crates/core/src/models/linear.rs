//! Conjugate Gibbs sampler for (hierarchical) normal linear regression.
//!
//! Groups share a common error variance. In the hierarchical form each
//! group's coefficients are drawn around population means with one prior
//! variance per coefficient; in the flat form a single group gets the
//! population-level priors directly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{input, Result};
use crate::posterior::Surface;
use crate::stats;

/// Prior sd of intercepts and slopes (population means, or the coefficients
/// themselves in the flat model).
pub const COEF_PRIOR_SD: f64 = 10.0;
/// Shape and rate of every inverse-gamma variance prior.
pub const IG_NU: f64 = 1e-4;

/// Keeps hierarchical variance draws inside a range where precisions stay
/// finite; only reached when the group coefficients coincide.
const VAR_FLOOR: f64 = 1e-100;

/// One regression group: design rows (without intercept) and outcomes.
#[derive(Clone, Debug, Default)]
pub struct Group {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

struct GroupStats {
    x: DMatrix<f64>,
    y: DVector<f64>,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
}

/// Affine covariate transform applied before the linear predictor.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(q: usize) -> Self {
        Standardizer {
            center: vec![0.0; q],
            scale: vec![1.0; q],
        }
    }

    /// z-scores continuous columns; binary and constant columns pass through.
    pub fn fit(rows: &[Vec<f64>], binary: &[bool]) -> Self {
        let q = binary.len();
        let mut s = Standardizer::identity(q);
        for j in 0..q {
            if binary[j] {
                continue;
            }
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let sd = stats::sd(&col);
            if sd > 0.0 && sd.is_finite() {
                s.center[j] = stats::mean(&col);
                s.scale[j] = sd;
            }
        }
        s
    }

    fn apply<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        x.iter()
            .zip(&self.center)
            .zip(&self.scale)
            .map(|((v, c), s)| (v - c) / s)
    }
}

/// Posterior draws of a linear surface `alpha_g + x' beta_g`.
#[derive(Clone, Debug)]
pub struct LinearDraws {
    /// Per draw: `n_groups` coefficient blocks, then the population block.
    coefs: Vec<f64>,
    pub sigma: Vec<f64>,
    n_groups: usize,
    /// Coefficients per block: intercept plus used covariates.
    p: usize,
    /// Group of each source label; unknown labels use the population block.
    group_of: Vec<Option<usize>>,
    n_covariates: usize,
    /// Whether covariates enter the predictor (false: intercept only).
    use_covariates: bool,
    transform: Standardizer,
}

impl LinearDraws {
    pub fn n_draws(&self) -> usize {
        self.sigma.len()
    }

    fn block(&self, draw: usize, b: usize) -> &[f64] {
        let stride = (self.n_groups + 1) * self.p;
        &self.coefs[draw * stride + b * self.p..draw * stride + (b + 1) * self.p]
    }

    /// Coefficients (intercept first, on the transformed scale) of `group`
    /// for draw `draw`; `None` selects the population means.
    pub fn coefficients(&self, draw: usize, group: Option<usize>) -> &[f64] {
        self.block(draw, group.unwrap_or(self.n_groups))
    }

    /// Group index used for a source label.
    pub fn group_of_source(&self, source: u32) -> Option<usize> {
        self.group_of.get(source as usize).copied().flatten()
    }
}

impl Surface for LinearDraws {
    fn n_draws(&self) -> usize {
        self.sigma.len()
    }

    fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    fn eval(&self, draw: usize, x: &[f64], source: u32) -> f64 {
        let c = self.coefficients(draw, self.group_of_source(source));
        if !self.use_covariates {
            return c[0];
        }
        c[0] + c[1..]
            .iter()
            .zip(self.transform.apply(x))
            .map(|(b, v)| b * v)
            .sum::<f64>()
    }
}

/// Model specification for [`gibbs`].
#[derive(Clone, Debug)]
pub struct LinearSpec {
    /// Source label of each group, in group order.
    pub labels: Vec<u32>,
    pub groups: Vec<Group>,
    /// Draw group coefficients around shared population means.
    pub hierarchical: bool,
    pub use_covariates: bool,
    pub n_covariates: usize,
    pub transform: Standardizer,
}

/// Runs `n_iter` sweeps (hypermeans, hypervariances, group coefficients,
/// error variance) and keeps the draws after `n_burn`.
pub fn gibbs<R: Rng + ?Sized>(
    spec: &LinearSpec,
    n_iter: usize,
    n_burn: usize,
    rng: &mut R,
) -> Result<LinearDraws> {
    if spec.groups.is_empty() || spec.groups.len() != spec.labels.len() {
        return input("at least one labelled group is required");
    }
    if !spec.hierarchical && spec.groups.len() != 1 {
        return input("the flat model takes exactly one group");
    }
    if spec.groups.iter().any(|g| g.y.is_empty()) {
        return input("every group needs at least one observation");
    }
    if n_burn >= n_iter {
        return input("burn-in must be smaller than the number of iterations");
    }
    let q = if spec.use_covariates {
        spec.n_covariates
    } else {
        0
    };
    let p = q + 1;
    let g_count = spec.groups.len();
    let stats_: Vec<GroupStats> = spec
        .groups
        .iter()
        .map(|g| {
            let n = g.y.len();
            let x = DMatrix::from_fn(n, p, |i, j| {
                if j == 0 {
                    1.0
                } else {
                    (g.x[i][j - 1] - spec.transform.center[j - 1]) / spec.transform.scale[j - 1]
                }
            });
            let y = DVector::from_column_slice(&g.y);
            let xtx = x.transpose() * &x;
            let xty = x.transpose() * &y;
            GroupStats { x, y, xtx, xty }
        })
        .collect();
    let n_total: usize = spec.groups.iter().map(|g| g.y.len()).sum();

    let prior_prec = 1.0 / (COEF_PRIOR_SD * COEF_PRIOR_SD);
    // Start each group at a lightly ridged least-squares fit.
    let mut theta: Vec<DVector<f64>> = stats_
        .iter()
        .map(|s| {
            let a = &s.xtx + DMatrix::identity(p, p) * 1e-6;
            a.cholesky()
                .map_or_else(|| DVector::zeros(p), |c| c.solve(&s.xty))
        })
        .collect();
    let mut hyper_mean = DVector::from_fn(p, |k, _| {
        theta.iter().map(|t| t[k]).sum::<f64>() / g_count as f64
    });
    let mut tau2 = DVector::from_element(p, 1.0);
    let all_y: Vec<f64> = spec
        .groups
        .iter()
        .flat_map(|g| g.y.iter().copied())
        .collect();
    let mut sigma2 = if all_y.len() > 1 {
        stats::sd(&all_y).powi(2).max(1e-8)
    } else {
        1.0
    };

    let n_keep = n_iter - n_burn;
    let stride = (g_count + 1) * p;
    let mut coefs = Vec::with_capacity(n_keep * stride);
    let mut sigma = Vec::with_capacity(n_keep);

    for iter in 0..n_iter {
        if spec.hierarchical {
            for k in 0..p {
                let prec = g_count as f64 / tau2[k] + prior_prec;
                let lin: f64 = theta.iter().map(|t| t[k]).sum::<f64>() / tau2[k];
                hyper_mean[k] = lin / prec + stats::std_normal(rng) / prec.sqrt();
            }
            for k in 0..p {
                let ss: f64 = theta.iter().map(|t| (t[k] - hyper_mean[k]).powi(2)).sum();
                tau2[k] = stats::inverse_gamma(rng, IG_NU + 0.5 * g_count as f64, IG_NU + 0.5 * ss)
                    .max(VAR_FLOOR);
            }
        }
        for (t, s) in theta.iter_mut().zip(&stats_) {
            let (d_inv, centre) = if spec.hierarchical {
                (tau2.map(|v| 1.0 / v), hyper_mean.clone())
            } else {
                (DVector::from_element(p, prior_prec), DVector::zeros(p))
            };
            let precision = &s.xtx / sigma2 + DMatrix::from_diagonal(&d_inv);
            let linear = &s.xty / sigma2 + d_inv.component_mul(&centre);
            if let Some(draw) = stats::mvn_from_precision(rng, &precision, &linear) {
                *t = draw;
            }
        }
        let sse: f64 = theta
            .iter()
            .zip(&stats_)
            .map(|(t, s)| (&s.y - &s.x * t).norm_squared())
            .sum();
        sigma2 = stats::inverse_gamma(rng, IG_NU + 0.5 * n_total as f64, IG_NU + 0.5 * sse)
            .max(VAR_FLOOR);

        if iter >= n_burn {
            for t in &theta {
                coefs.extend(t.iter());
            }
            if spec.hierarchical {
                coefs.extend(hyper_mean.iter());
            } else {
                coefs.extend(theta[0].iter());
            }
            sigma.push(sigma2.sqrt());
        }
    }
    debug_assert_eq!(coefs.len(), n_keep * stride);

    let mut group_of = vec![None; 64];
    for (g, &label) in spec.labels.iter().enumerate() {
        group_of[label as usize] = Some(g);
    }
    if !spec.hierarchical {
        // The flat model has no population layer: every source maps to it.
        group_of = vec![Some(0); 64];
    }
    Ok(LinearDraws {
        coefs,
        sigma,
        n_groups: g_count,
        p,
        group_of,
        n_covariates: spec.n_covariates,
        use_covariates: spec.use_covariates,
        transform: spec.transform.clone(),
    })
}
