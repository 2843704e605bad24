//! Sum-of-trees regression: tree structures, priors, and the backfitting
//! Metropolis-within-Gibbs sampler.

mod moves;
mod prior;
mod sampler;
mod tree;

pub use moves::{MoveCounts, MoveKind};
pub use prior::{
    leaf_log_marginal, log_tree_structure_prior, tree_prior_terms, BartHyper, LeafStats, MoveProbs,
    PriorTerms,
};
pub use sampler::{fit_bart, BackfitState, BartData, BartFit, Forest, McmcConfig};
pub use tree::{
    node_contexts, DecisionTree, Domain, Node, NodeContext, SplitRule, SplitSpace, SplitVar,
};
