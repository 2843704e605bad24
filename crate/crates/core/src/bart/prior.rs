use std::f64::consts::PI;

use crate::bart::moves::TreeSummary;
use crate::bart::tree::{DecisionTree, SplitSpace};
use crate::error::{input, Result};

/// Relative weights of the four structural moves. Weights of moves that do
/// not apply to the current tree are dropped and the rest renormalized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoveProbs {
    pub grow: f64,
    pub prune: f64,
    pub change: f64,
    pub swap: f64,
}

impl Default for MoveProbs {
    fn default() -> Self {
        MoveProbs {
            grow: 0.25,
            prune: 0.25,
            change: 0.40,
            swap: 0.10,
        }
    }
}

impl MoveProbs {
    /// No structural moves: every tree stays root-only.
    pub fn none() -> Self {
        MoveProbs {
            grow: 0.0,
            prune: 0.0,
            change: 0.0,
            swap: 0.0,
        }
    }
}

/// Prior and grid settings for a sum-of-trees model.
#[derive(Clone, Debug, PartialEq)]
pub struct BartHyper {
    /// Number of trees.
    pub n_trees: usize,
    /// Base of the node split probability `rho * (1 + depth)^-kappa`.
    pub rho: f64,
    /// Depth penalty.
    pub kappa: f64,
    /// Leaf prior spread multiplier: leaf sd = 0.5 / (k_mu * sqrt(n_trees)).
    pub k_mu: f64,
    /// Degrees of freedom of the scaled inverse chi-squared prior on sigma^2.
    pub nu_sigma: f64,
    /// Prior probability that sigma falls below the least-squares estimate.
    pub q_sigma: f64,
    /// Interior cutpoints per continuous covariate.
    pub cutpoint_count: usize,
    pub moves: MoveProbs,
    /// Hold the residual sd fixed at this value (outcome scale) instead of sampling it.
    pub sigma_fixed: Option<f64>,
}

impl Default for BartHyper {
    fn default() -> Self {
        BartHyper {
            n_trees: 200,
            rho: 0.95,
            kappa: 2.0,
            k_mu: 2.0,
            nu_sigma: 3.0,
            q_sigma: 0.90,
            cutpoint_count: 100,
            moves: MoveProbs::default(),
            sigma_fixed: None,
        }
    }
}

impl BartHyper {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return input("n_trees must be at least 1");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return input("rho must lie in (0, 1)");
        }
        if !(self.kappa >= 0.0) {
            return input("kappa must be nonnegative");
        }
        if self.cutpoint_count < 2 {
            return input("cutpoint_count must be at least 2");
        }
        if !(self.k_mu > 0.0 && self.nu_sigma > 0.0 && self.q_sigma > 0.0 && self.q_sigma < 1.0) {
            return input("k_mu, nu_sigma must be positive and q_sigma in (0, 1)");
        }
        let m = self.moves;
        if [m.grow, m.prune, m.change, m.swap]
            .iter()
            .any(|w| !(*w >= 0.0))
        {
            return input("move weights must be nonnegative");
        }
        if let Some(s) = self.sigma_fixed {
            if !(s > 0.0) {
                return input("fixed sigma must be positive");
            }
        }
        Ok(())
    }

    /// Prior probability that a node at `depth` splits (given it can).
    pub fn split_prob(&self, depth: u32) -> f64 {
        self.rho * (1.0 + depth as f64).powf(-self.kappa)
    }

    /// Leaf prior sd on the internal [-0.5, 0.5] outcome scale.
    pub fn leaf_sd(&self) -> f64 {
        0.5 / (self.k_mu * (self.n_trees as f64).sqrt())
    }
}

/// Decomposition of the log tree prior.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorTerms {
    /// Split / no-split probabilities of every node.
    pub structure: f64,
    /// Uniform variable and rule choices at internal nodes.
    pub rules: f64,
}

impl PriorTerms {
    pub fn total(&self) -> f64 {
        self.structure + self.rules
    }
}

/// Log prior terms of `tree`. A node with no available rule is terminal with
/// probability one; a rule that is unavailable at its node gives `-inf`.
pub fn tree_prior_terms(tree: &DecisionTree, hyper: &BartHyper, space: &SplitSpace) -> PriorTerms {
    TreeSummary::new(tree, hyper, space).map_or(
        PriorTerms {
            structure: f64::NEG_INFINITY,
            rules: f64::NEG_INFINITY,
        },
        |s| s.prior,
    )
}

/// Log prior probability of the tree structure and its split rules.
pub fn log_tree_structure_prior(tree: &DecisionTree, hyper: &BartHyper, space: &SplitSpace) -> f64 {
    tree_prior_terms(tree, hyper, space).total()
}

/// Sufficient statistics of the residuals falling in one leaf.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LeafStats {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl LeafStats {
    pub fn from_values(values: &[f64]) -> Self {
        let mut s = LeafStats::default();
        for &v in values {
            s.push(v);
        }
        s
    }

    #[inline]
    pub fn push(&mut self, r: f64) {
        self.n += 1;
        self.sum += r;
        self.sum_sq += r * r;
    }

    /// Log of the leaf likelihood with the leaf mean integrated out under
    /// `mu ~ N(0, leaf_sd^2)`. An empty leaf integrates to one.
    pub fn log_marginal(&self, sigma: f64, leaf_sd: f64) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let s2 = sigma * sigma;
        let t2 = leaf_sd * leaf_sd;
        let n = self.n as f64;
        let precision = n / s2 + 1.0 / t2;
        let b = self.sum / s2;
        -0.5 * n * (2.0 * PI * s2).ln() - self.sum_sq / (2.0 * s2) - 0.5 * (t2 * precision).ln()
            + b * b / (2.0 * precision)
    }

    /// Conditional posterior of the leaf mean: (mean, sd).
    pub fn posterior(&self, sigma: f64, leaf_sd: f64) -> (f64, f64) {
        let precision = self.n as f64 / (sigma * sigma) + 1.0 / (leaf_sd * leaf_sd);
        (
            self.sum / (sigma * sigma) / precision,
            precision.sqrt().recip(),
        )
    }
}

/// Sum of per-leaf log marginal likelihoods.
pub fn leaf_log_marginal(leaves: &[LeafStats], sigma: f64, leaf_sd: f64) -> f64 {
    leaves.iter().map(|l| l.log_marginal(sigma, leaf_sd)).sum()
}
