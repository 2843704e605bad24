use rand::Rng;

use crate::bart::moves::{propose, MoveCounts, MoveKind, Proposal, TreeSummary};
use crate::bart::prior::{BartHyper, LeafStats};
use crate::bart::tree::{DecisionTree, SplitSpace};
use crate::error::{input, Error, Result};
use crate::rng::substream;
use crate::stats;

/// Chain length and seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub n_burn: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_iter: 1100,
            n_burn: 100,
            seed: 0,
        }
    }
}

impl McmcConfig {
    pub fn new(n_iter: usize, n_burn: usize, seed: u64) -> Self {
        McmcConfig {
            n_iter,
            n_burn,
            seed,
        }
    }

    /// Number of retained draws.
    pub fn n_draws(&self) -> usize {
        self.n_iter - self.n_burn
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_burn >= self.n_iter {
            return input(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.n_burn, self.n_iter
            ));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        McmcConfig { seed, ..*self }
    }
}

/// Training data for one response surface: row-major covariates, an optional
/// source label per row, and the outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct BartData {
    x: Vec<f64>,
    n_covariates: usize,
    source: Option<Vec<u32>>,
    y: Vec<f64>,
}

impl BartData {
    pub fn new(rows: &[Vec<f64>], source: Option<Vec<u32>>, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if rows.len() != n {
            return input(format!("{} covariate rows for {} outcomes", rows.len(), n));
        }
        let n_covariates = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_covariates) {
            return Err(Error::Dimension {
                expected: n_covariates,
                got: bad.len(),
            });
        }
        if let Some(s) = &source {
            if s.len() != n {
                return input("source labels must match the number of rows");
            }
            if s.iter().any(|&l| l >= 64) {
                return input("source labels must be below 64");
            }
        }
        if rows
            .iter()
            .flatten()
            .chain(y.iter())
            .any(|v| !v.is_finite())
        {
            return input("covariates and outcomes must be finite");
        }
        Ok(BartData {
            x: rows.concat(),
            n_covariates,
            source,
            y,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_covariates..(i + 1) * self.n_covariates]
    }

    #[inline]
    pub fn source(&self, i: usize) -> u32 {
        self.source.as_ref().map_or(0, |s| s[i])
    }

    pub fn has_source(&self) -> bool {
        self.source.is_some()
    }

    /// Regressors for the least-squares sigma estimate: covariates plus
    /// indicators for every observed source level but the smallest.
    fn ols_design(&self) -> Vec<Vec<f64>> {
        let mut levels: Vec<u32> = self.source.clone().unwrap_or_default();
        levels.sort_unstable();
        levels.dedup();
        (0..self.n_rows())
            .map(|i| {
                let mut r = self.row(i).to_vec();
                r.extend(
                    levels
                        .iter()
                        .skip(1)
                        .map(|&l| f64::from(self.source(i) == l)),
                );
                r
            })
            .collect()
    }
}

/// A sum of trees on the outcome scale: `offset + scale * sum_j g_j(x, s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
    pub offset: f64,
    pub scale: f64,
    /// Residual sd on the outcome scale.
    pub sigma: f64,
}

impl Forest {
    pub fn n_covariates(&self) -> usize {
        self.trees.first().map_or(0, DecisionTree::n_covariates)
    }

    pub fn predict(&self, x: &[f64], source: u32) -> Result<f64> {
        if self.trees.is_empty() {
            return input("empty forest");
        }
        let p = self.n_covariates();
        if x.len() != p {
            return Err(Error::Dimension {
                expected: p,
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x, source))
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, x: &[f64], source: u32) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.eval_unchecked(x, source)).sum();
        self.offset + self.scale * sum
    }
}

/// Mutable state of one backfitting chain.
pub struct BackfitState {
    data: BartData,
    hyper: BartHyper,
    space: SplitSpace,
    leaf_sd: f64,
    /// Scale parameter of the scaled inverse chi-squared sigma^2 prior.
    lambda: f64,
    offset: f64,
    scale: f64,
    y_scaled: Vec<f64>,
    trees: Vec<DecisionTree>,
    leaf_of: Vec<Vec<u32>>,
    resid: Vec<f64>,
    sigma: f64,
    moves: MoveCounts,
    partial: Vec<f64>,
    prop_leaf: Vec<u32>,
    structural: bool,
    summaries: Vec<Option<TreeSummary>>,
    stats_cur: Vec<LeafStats>,
    stats_prop: Vec<LeafStats>,
}

/// Internal-scale floor for the least-squares sigma estimate, so the
/// inverse-gamma update stays proper on noiseless data.
const SIGMA_HAT_FLOOR: f64 = 1e-4;

impl BackfitState {
    pub fn new(data: BartData, hyper: &BartHyper) -> Result<Self> {
        hyper.validate()?;
        let n = data.n_rows();
        if n < 2 {
            return input("at least two observations are required");
        }
        let (lo, hi) = data
            .y
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        let (offset, scale) = if hi > lo {
            (0.5 * (lo + hi), hi - lo)
        } else {
            (lo, 1.0)
        };
        let y_scaled: Vec<f64> = data.y.iter().map(|v| (v - offset) / scale).collect();

        let sigma_hat = stats::ols_residual_sd(&data.ols_design(), &y_scaled)
            .unwrap_or_else(|| stats::sd(&y_scaled))
            .max(SIGMA_HAT_FLOOR);
        let nu = hyper.nu_sigma;
        let lambda =
            sigma_hat * sigma_hat * stats::chi_squared_quantile(1.0 - hyper.q_sigma, nu) / nu;
        let sigma = match hyper.sigma_fixed {
            Some(s) => s / scale,
            None => sigma_hat,
        };

        let space = SplitSpace::from_data(
            &data.x,
            data.n_covariates,
            data.source.as_deref(),
            hyper.cutpoint_count,
        );
        let m = hyper.n_trees;
        let mu0 = stats::mean(&y_scaled) / m as f64;
        let trees = vec![DecisionTree::leaf(data.n_covariates, mu0); m];
        let resid: Vec<f64> = y_scaled.iter().map(|y| y - mu0 * m as f64).collect();
        Ok(BackfitState {
            leaf_sd: hyper.leaf_sd(),
            hyper: hyper.clone(),
            space,
            lambda,
            offset,
            scale,
            y_scaled,
            trees,
            leaf_of: vec![vec![0; n]; m],
            resid,
            sigma,
            moves: MoveCounts::default(),
            partial: vec![0.0; n],
            prop_leaf: vec![0; n],
            structural: {
                let mv = &hyper.moves;
                mv.grow + mv.prune + mv.change + mv.swap > 0.0
            },
            summaries: (0..m).map(|_| None).collect(),
            stats_cur: Vec::new(),
            stats_prop: Vec::new(),
            data,
        })
    }

    pub fn split_space(&self) -> &SplitSpace {
        &self.space
    }

    /// Residual sd on the outcome scale.
    pub fn sigma(&self) -> f64 {
        self.sigma * self.scale
    }

    pub fn move_counts(&self) -> MoveCounts {
        self.moves
    }

    pub fn forest(&self) -> Forest {
        Forest {
            trees: self.trees.clone(),
            offset: self.offset,
            scale: self.scale,
            sigma: self.sigma(),
        }
    }

    /// Current in-sample fit on the outcome scale.
    pub fn fitted(&self) -> impl Iterator<Item = f64> + '_ {
        self.y_scaled
            .iter()
            .zip(&self.resid)
            .map(|(y, r)| self.offset + self.scale * (y - r))
    }

    /// One sweep: a Metropolis-Hastings structural move and a conjugate
    /// leaf redraw for every tree against its partial residuals, then a
    /// conjugate redraw of sigma^2.
    pub fn backfit_iteration<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let m = self.trees.len();
        for j in 0..m {
            let prev = j.checked_sub(1);
            self.load_partial(prev, j);
            self.update_tree(j, rng);
        }
        self.flush_partial(m - 1);
        if self.hyper.sigma_fixed.is_none() {
            let sse: f64 = self.resid.iter().map(|r| r * r).sum();
            let nu = self.hyper.nu_sigma;
            let n = self.resid.len() as f64;
            let s2 = stats::inverse_gamma(rng, 0.5 * (nu + n), 0.5 * (nu * self.lambda + sse));
            self.sigma = s2.sqrt();
        }
    }

    /// Finishes the residual update of tree `prev` (if any) and forms the
    /// partial residuals and current leaf statistics of tree `j` in one pass.
    fn load_partial(&mut self, prev: Option<usize>, j: usize) {
        let tree = &self.trees[j];
        self.stats_cur.clear();
        self.stats_cur.resize(tree.n_nodes(), LeafStats::default());
        let stats = &mut self.stats_cur[..];
        let mu_cur: Vec<f64> = (0..tree.n_nodes()).map(|k| tree.mu(k)).collect();
        let rows = self
            .partial
            .iter_mut()
            .zip(self.resid.iter_mut())
            .zip(&self.leaf_of[j]);
        match prev {
            Some(pj) => {
                let ptree = &self.trees[pj];
                let mu_prev: Vec<f64> = (0..ptree.n_nodes()).map(|k| ptree.mu(k)).collect();
                for (((p, r), &l), &pl) in rows.zip(&self.leaf_of[pj]) {
                    *r = *p - mu_prev[pl as usize];
                    *p = *r + mu_cur[l as usize];
                    stats[l as usize].push(*p);
                }
            }
            None => {
                for ((p, r), &l) in rows {
                    *p = *r + mu_cur[l as usize];
                    stats[l as usize].push(*p);
                }
            }
        }
    }

    fn flush_partial(&mut self, j: usize) {
        let tree = &self.trees[j];
        let mu: Vec<f64> = (0..tree.n_nodes()).map(|k| tree.mu(k)).collect();
        for ((r, p), &l) in self
            .resid
            .iter_mut()
            .zip(&self.partial)
            .zip(&self.leaf_of[j])
        {
            *r = p - mu[l as usize];
        }
    }

    fn log_lik(&self, tree: &DecisionTree, stats: &[LeafStats]) -> f64 {
        tree.leaf_indices()
            .map(|k| stats[k].log_marginal(self.sigma, self.leaf_sd))
            .sum()
    }

    /// Leaf assignment and leaf statistics of every row under the proposed
    /// tree, rerouting only the rows the move can affect.
    fn proposed_leaves(
        &self,
        j: usize,
        prop: &Proposal,
        out: &mut [u32],
        stats: &mut Vec<LeafStats>,
    ) {
        stats.clear();
        stats.resize(prop.tree.n_nodes(), LeafStats::default());
        let cur = &self.leaf_of[j];
        let partial = &self.partial;
        match prop.kind {
            MoveKind::Prune => {
                let map = prop.remap.as_ref().expect("prune carries a node map");
                for ((o, &c), &p) in out.iter_mut().zip(cur).zip(partial) {
                    let l = map[c as usize];
                    *o = l;
                    stats[l as usize].push(p);
                }
            }
            MoveKind::Grow => {
                let target = prop.target as u32;
                for i in 0..out.len() {
                    let mut l = cur[i];
                    if l == target {
                        l = prop.tree.leaf_index_from(
                            prop.target,
                            self.data.row(i),
                            self.data.source(i),
                        ) as u32;
                    }
                    out[i] = l;
                    stats[l as usize].push(partial[i]);
                }
            }
            MoveKind::Change | MoveKind::Swap => {
                let inside = self.trees[j].subtree_mask(prop.target);
                for i in 0..out.len() {
                    let mut l = cur[i];
                    if inside[l as usize] {
                        l = prop.tree.leaf_index_from(
                            prop.target,
                            self.data.row(i),
                            self.data.source(i),
                        ) as u32;
                    }
                    out[i] = l;
                    stats[l as usize].push(partial[i]);
                }
            }
        }
    }

    fn update_tree<R: Rng + ?Sized>(&mut self, j: usize, rng: &mut R) {
        if self.structural {
            if self.summaries[j].is_none() {
                self.summaries[j] = TreeSummary::new(&self.trees[j], &self.hyper, &self.space);
            }
            let current = self.summaries[j].as_ref().expect("current tree is valid");
            match propose(&self.trees[j], current, &self.hyper, &self.space, rng) {
                None => {}
                Some((kind, None)) => self.moves.record(kind, false),
                Some((_, Some(prop))) => {
                    let mut prop_leaf = std::mem::take(&mut self.prop_leaf);
                    let mut prop_stats = std::mem::take(&mut self.stats_prop);
                    self.proposed_leaves(j, &prop, &mut prop_leaf, &mut prop_stats);
                    let nonempty = prop.tree.leaf_indices().all(|k| prop_stats[k].n > 0);
                    let mut accepted = false;
                    if nonempty {
                        let log_alpha = self.log_lik(&prop.tree, &prop_stats)
                            - self.log_lik(&self.trees[j], &self.stats_cur)
                            + prop.summary.prior.total()
                            - current.prior.total()
                            + prop.log_q_ratio;
                        let u: f64 = rng.random();
                        accepted = u.ln() < log_alpha;
                    }
                    self.moves.record(prop.kind, accepted);
                    if accepted {
                        self.trees[j] = prop.tree;
                        self.summaries[j] = Some(prop.summary);
                        std::mem::swap(&mut self.leaf_of[j], &mut prop_leaf);
                        std::mem::swap(&mut self.stats_cur, &mut prop_stats);
                    }
                    self.prop_leaf = prop_leaf;
                    self.stats_prop = prop_stats;
                }
            }
        }

        let tree = &mut self.trees[j];
        for k in 0..tree.n_nodes() {
            if tree.is_leaf(k) {
                let (mean, sd) = self.stats_cur[k].posterior(self.sigma, self.leaf_sd);
                tree.set_mu(k, mean + sd * stats::std_normal(rng));
            }
        }
    }
}

/// Posterior draws of a single response surface.
#[derive(Clone, Debug)]
pub struct BartFit {
    pub forests: Vec<Forest>,
    /// Residual sd per retained draw (outcome scale).
    pub sigma: Vec<f64>,
    /// Posterior mean of the in-sample fit.
    pub fitted_mean: Vec<f64>,
    pub moves: MoveCounts,
    n_covariates: usize,
}

impl BartFit {
    pub fn n_draws(&self) -> usize {
        self.forests.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    /// Posterior mean prediction at `(x, source)`.
    pub fn predict_mean(&self, x: &[f64], source: u32) -> Result<f64> {
        let mut acc = 0.0;
        for f in &self.forests {
            acc += f.predict(x, source)?;
        }
        Ok(acc / self.forests.len() as f64)
    }
}

/// Runs `mcmc.n_iter` sweeps and keeps the draws after burn-in. Iteration
/// `t` uses its own substream of `mcmc.seed`, so output depends only on
/// `(data, hyper, mcmc)`.
pub fn fit_bart(data: &BartData, hyper: &BartHyper, mcmc: &McmcConfig) -> Result<BartFit> {
    mcmc.validate()?;
    if data.n_rows() == 0 {
        return input("empty design");
    }
    let n_covariates = data.n_covariates();
    let mut state = BackfitState::new(data.clone(), hyper)?;
    let mut forests = Vec::with_capacity(mcmc.n_draws());
    let mut sigma = Vec::with_capacity(mcmc.n_draws());
    let mut fitted_sum = vec![0.0; data.n_rows()];
    for iter in 0..mcmc.n_iter {
        let mut rng = substream(mcmc.seed, &[iter as u64]);
        state.backfit_iteration(&mut rng);
        if iter >= mcmc.n_burn {
            forests.push(state.forest());
            sigma.push(state.sigma());
            for (acc, f) in fitted_sum.iter_mut().zip(state.fitted()) {
                *acc += f;
            }
        }
    }
    let l = forests.len() as f64;
    Ok(BartFit {
        forests,
        sigma,
        fitted_mean: fitted_sum.into_iter().map(|s| s / l).collect(),
        moves: state.move_counts(),
        n_covariates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bart::prior::MoveProbs;

    fn grid_rows(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![(i as f64 + 0.5) / n as f64]).collect()
    }

    #[test]
    fn root_only_chain_matches_normal_normal_posterior() {
        let rows = grid_rows(40);
        let y: Vec<f64> = rows
            .iter()
            .map(|r| 2.0 + 0.3 * (r[0] * 37.0).sin())
            .collect();
        let sigma = 0.5;
        let hyper = BartHyper {
            n_trees: 1,
            moves: MoveProbs::none(),
            sigma_fixed: Some(sigma),
            ..BartHyper::default()
        };
        let fit = fit_bart(
            &BartData::new(&rows, None, y.clone()).unwrap(),
            &hyper,
            &McmcConfig::new(4100, 100, 3),
        )
        .unwrap();
        let draws: Vec<f64> = fit
            .forests
            .iter()
            .map(|f| f.predict(&[0.5], 0).unwrap())
            .collect();

        // Oracle: y is rescaled to [-0.5, 0.5] and mu ~ N(0, (0.5 / k)^2) there.
        let (lo, hi) = y
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        let (c, s) = ((lo + hi) / 2.0, hi - lo);
        let tau = 0.5 / 2.0;
        let sig = sigma / s;
        let prec = y.len() as f64 / (sig * sig) + 1.0 / (tau * tau);
        let post_mean = c + s * y.iter().map(|v| (v - c) / s).sum::<f64>() / (sig * sig) / prec;
        let post_sd = s / prec.sqrt();

        let mc_se = post_sd / (draws.len() as f64).sqrt();
        assert!((stats::mean(&draws) - post_mean).abs() < 3.0 * mc_se);
        let sd_se = post_sd / (2.0 * (draws.len() as f64 - 1.0)).sqrt();
        assert!((stats::sd(&draws) - post_sd).abs() < 3.0 * sd_se);
    }

    #[test]
    fn constant_outcome_is_recovered() {
        let rows = grid_rows(30);
        let data = BartData::new(&rows, None, vec![5.0; 30]).unwrap();
        let hyper = BartHyper {
            n_trees: 20,
            ..BartHyper::default()
        };
        let fit = fit_bart(&data, &hyper, &McmcConfig::new(200, 50, 1)).unwrap();
        for x in [0.0, 0.3, 0.99] {
            assert!((fit.predict_mean(&[x], 0).unwrap() - 5.0).abs() < 0.05);
        }
        assert!(fit.sigma.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn identity_surface_is_recovered() {
        let mut rng = substream(4, &[]);
        let rows = grid_rows(200);
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r[0] + 0.01 * stats::std_normal(&mut rng))
            .collect();
        let data = BartData::new(&rows, None, y).unwrap();
        let hyper = BartHyper {
            n_trees: 50,
            ..BartHyper::default()
        };
        let fit = fit_bart(&data, &hyper, &McmcConfig::new(400, 100, 2)).unwrap();
        for k in 1..=9 {
            let x = k as f64 / 10.0;
            let err = (fit.predict_mean(&[x], 0).unwrap() - x).abs();
            assert!(err < 0.05, "x={x} err={err}");
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let rows = grid_rows(25);
        let y: Vec<f64> = rows.iter().map(|r| r[0] * r[0]).collect();
        let src: Vec<u32> = (0..25).map(|i| (i % 2) as u32).collect();
        let data = BartData::new(&rows, Some(src), y).unwrap();
        let hyper = BartHyper {
            n_trees: 10,
            ..BartHyper::default()
        };
        let a = fit_bart(&data, &hyper, &McmcConfig::new(60, 10, 9)).unwrap();
        let b = fit_bart(&data, &hyper, &McmcConfig::new(60, 10, 9)).unwrap();
        assert_eq!(a.sigma, b.sigma);
        assert_eq!(a.forests, b.forests);
        let c = fit_bart(&data, &hyper, &McmcConfig::new(60, 10, 10)).unwrap();
        assert_ne!(a.sigma, c.sigma);
    }

    #[test]
    fn forest_is_offset_plus_scaled_sum_of_trees() {
        let rows = grid_rows(30);
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0]).collect();
        let data = BartData::new(&rows, None, y).unwrap();
        let hyper = BartHyper {
            n_trees: 5,
            ..BartHyper::default()
        };
        let fit = fit_bart(&data, &hyper, &McmcConfig::new(30, 0, 5)).unwrap();
        let f = fit.forests.last().unwrap();
        for x in [0.1, 0.5, 0.77] {
            let by_hand: f64 = f.trees.iter().map(|t| t.evaluate(&[x], 0).unwrap()).sum();
            assert!((f.predict(&[x], 0).unwrap() - (f.offset + f.scale * by_hand)).abs() < 1e-12);
        }
        assert!(f.predict(&[0.1, 0.2], 0).is_err());
    }

    #[test]
    fn in_sample_fit_tracks_forest() {
        // fitted() must agree with evaluating the current forest on the rows.
        let rows = grid_rows(20);
        let y: Vec<f64> = rows.iter().map(|r| (r[0] * 6.0).sin()).collect();
        let data = BartData::new(&rows, None, y).unwrap();
        let hyper = BartHyper {
            n_trees: 8,
            ..BartHyper::default()
        };
        let mut state = BackfitState::new(data, &hyper).unwrap();
        let mut rng = substream(12, &[]);
        for _ in 0..25 {
            state.backfit_iteration(&mut rng);
        }
        let forest = state.forest();
        for (row, fit) in rows.iter().zip(state.fitted()) {
            assert!((forest.predict(row, 0).unwrap() - fit).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(BartData::new(&[vec![1.0]], None, vec![1.0, 2.0]).is_err());
        assert!(BartData::new(&[vec![1.0], vec![1.0, 2.0]], None, vec![1.0, 2.0]).is_err());
        assert!(BartData::new(&[vec![f64::NAN]], None, vec![1.0]).is_err());
        let ok = BartData::new(&[vec![1.0], vec![2.0]], None, vec![1.0, 2.0]).unwrap();
        assert!(fit_bart(&ok, &BartHyper::default(), &McmcConfig::new(10, 10, 0)).is_err());
    }

    #[test]
    fn two_tree_forest_adds_leaves() {
        let f = Forest {
            trees: vec![DecisionTree::leaf(1, 1.0), DecisionTree::leaf(1, 2.0)],
            offset: 0.0,
            scale: 1.0,
            sigma: 1.0,
        };
        assert_eq!(f.predict(&[0.3], 0).unwrap(), 3.0);
        let zero = Forest {
            trees: vec![DecisionTree::leaf(1, 0.0); 4],
            offset: 7.5,
            ..f
        };
        assert_eq!(zero.predict(&[-3.0], 1).unwrap(), 7.5);
    }
}
