//! Grow / prune / change / swap proposals for a single tree.

use rand::Rng;

use crate::bart::prior::{BartHyper, MoveProbs, PriorTerms};
use crate::bart::tree::{node_contexts, DecisionTree, NodeContext, SplitSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Grow,
    Prune,
    Change,
    Swap,
}

impl MoveKind {
    pub const ALL: [MoveKind; 4] = [
        MoveKind::Grow,
        MoveKind::Prune,
        MoveKind::Change,
        MoveKind::Swap,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

/// Shape information needed to propose moves and score their reverse.
pub(crate) struct TreeSummary {
    pub ctx: Vec<NodeContext>,
    /// Position in `ctx` of leaves that have at least one available rule.
    pub growable: Vec<usize>,
    /// Position in `ctx` of internal nodes whose children are both leaves.
    pub prunable: Vec<usize>,
    /// Position in `ctx` of internal nodes.
    pub internal: Vec<usize>,
    /// (parent, child) node ids with both internal.
    pub swap_pairs: Vec<(usize, usize)>,
    pub prior: PriorTerms,
}

impl TreeSummary {
    /// `None` if some rule is unavailable at its node.
    pub fn new(tree: &DecisionTree, hyper: &BartHyper, space: &SplitSpace) -> Option<Self> {
        let ctx = node_contexts(tree, space)?;
        let mut s = TreeSummary {
            growable: Vec::new(),
            prunable: Vec::new(),
            internal: Vec::new(),
            swap_pairs: Vec::new(),
            prior: PriorTerms {
                structure: 0.0,
                rules: 0.0,
            },
            ctx,
        };
        for (pos, c) in s.ctx.iter().enumerate() {
            let can_split = space.n_available_vars(&c.domain) > 0;
            let p = if can_split {
                hyper.split_prob(c.depth)
            } else {
                0.0
            };
            match tree.rule(c.node) {
                None => {
                    s.prior.structure += (1.0 - p).ln();
                    if can_split {
                        s.growable.push(pos);
                    }
                }
                Some(rule) => {
                    s.prior.structure += p.ln();
                    s.prior.rules += space.rule_log_prob(&c.domain, &rule);
                    s.internal.push(pos);
                    if let crate::bart::tree::Node::Split { left, right, .. } = *tree.node(c.node) {
                        if tree.is_leaf(left) && tree.is_leaf(right) {
                            s.prunable.push(pos);
                        }
                        for child in [left, right] {
                            if !tree.is_leaf(child) {
                                s.swap_pairs.push((c.node, child));
                            }
                        }
                    }
                }
            }
        }
        Some(s)
    }

    /// Normalized move probabilities in `MoveKind::ALL` order.
    pub fn move_probs(&self, probs: &MoveProbs) -> [f64; 4] {
        let mut w = [
            if self.growable.is_empty() {
                0.0
            } else {
                probs.grow
            },
            if self.prunable.is_empty() {
                0.0
            } else {
                probs.prune
            },
            if self.internal.is_empty() {
                0.0
            } else {
                probs.change
            },
            if self.swap_pairs.is_empty() {
                0.0
            } else {
                probs.swap
            },
        ];
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            for v in &mut w {
                *v /= total;
            }
        }
        w
    }
}

pub(crate) struct Proposal {
    pub kind: MoveKind,
    pub tree: DecisionTree,
    pub summary: TreeSummary,
    /// log q(new -> old) - log q(old -> new).
    pub log_q_ratio: f64,
    /// Node grown, pruned, or whose rule changed (parent for swaps), indexed
    /// in the old tree.
    pub target: usize,
    /// Old-to-new node indices after a prune.
    pub remap: Option<Vec<u32>>,
}

/// Draws one structural move. `None` when no move applies; otherwise the
/// chosen kind and its proposal, which is `None` when the proposed tree is
/// invalid (zero prior mass, so rejected outright).
pub(crate) fn propose<R: Rng + ?Sized>(
    tree: &DecisionTree,
    current: &TreeSummary,
    hyper: &BartHyper,
    space: &SplitSpace,
    rng: &mut R,
) -> Option<(MoveKind, Option<Proposal>)> {
    let w = current.move_probs(&hyper.moves);
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut kind = MoveKind::Swap;
    for k in MoveKind::ALL {
        acc += w[k.index()];
        if u < acc && w[k.index()] > 0.0 {
            kind = k;
            break;
        }
    }

    Some((kind, build(kind, &w, tree, current, hyper, space, rng)))
}

fn build<R: Rng + ?Sized>(
    kind: MoveKind,
    w: &[f64; 4],
    tree: &DecisionTree,
    current: &TreeSummary,
    hyper: &BartHyper,
    space: &SplitSpace,
    rng: &mut R,
) -> Option<Proposal> {
    let pick = |len: usize, rng: &mut R| rng.random_range(0..len);
    match kind {
        MoveKind::Grow => {
            let pos = current.growable[pick(current.growable.len(), rng)];
            let c = &current.ctx[pos];
            let (rule, log_p_rule) = space.sample_rule(&c.domain, rng)?;
            let mut new_tree = tree.clone();
            new_tree.grow(c.node, rule, 0.0, 0.0).ok()?;
            let summary = TreeSummary::new(&new_tree, hyper, space)?;
            let w_new = summary.move_probs(&hyper.moves);
            let log_fwd = w[0].ln() - (current.growable.len() as f64).ln() + log_p_rule;
            let log_rev = w_new[1].ln() - (summary.prunable.len() as f64).ln();
            Some(Proposal {
                kind,
                tree: new_tree,
                summary,
                log_q_ratio: log_rev - log_fwd,
                target: c.node,
                remap: None,
            })
        }
        MoveKind::Prune => {
            let pos = current.prunable[pick(current.prunable.len(), rng)];
            let c = &current.ctx[pos];
            let old_rule = tree.rule(c.node)?;
            let (new_tree, remap) = tree.collapsed_with_map(c.node, 0.0);
            let summary = TreeSummary::new(&new_tree, hyper, space)?;
            let w_new = summary.move_probs(&hyper.moves);
            let log_fwd = w[1].ln() - (current.prunable.len() as f64).ln();
            let log_rev = w_new[0].ln() - (summary.growable.len() as f64).ln()
                + space.rule_log_prob(&c.domain, &old_rule);
            Some(Proposal {
                kind,
                tree: new_tree,
                summary,
                log_q_ratio: log_rev - log_fwd,
                target: c.node,
                remap: Some(remap),
            })
        }
        MoveKind::Change => {
            let pos = current.internal[pick(current.internal.len(), rng)];
            let c = &current.ctx[pos];
            let old_rule = tree.rule(c.node)?;
            let (rule, log_p_rule) = space.sample_rule(&c.domain, rng)?;
            let mut new_tree = tree.clone();
            new_tree.set_rule(c.node, rule);
            let summary = TreeSummary::new(&new_tree, hyper, space)?;
            let w_new = summary.move_probs(&hyper.moves);
            let log_fwd = w[2].ln() - (current.internal.len() as f64).ln() + log_p_rule;
            let log_rev = w_new[2].ln() - (summary.internal.len() as f64).ln()
                + space.rule_log_prob(&c.domain, &old_rule);
            Some(Proposal {
                kind,
                tree: new_tree,
                summary,
                log_q_ratio: log_rev - log_fwd,
                target: c.node,
                remap: None,
            })
        }
        MoveKind::Swap => {
            let (parent, child) = current.swap_pairs[pick(current.swap_pairs.len(), rng)];
            let rp = tree.rule(parent)?;
            let rc = tree.rule(child)?;
            let mut new_tree = tree.clone();
            new_tree.set_rule(parent, rc);
            new_tree.set_rule(child, rp);
            let summary = TreeSummary::new(&new_tree, hyper, space)?;
            let w_new = summary.move_probs(&hyper.moves);
            let log_fwd = w[3].ln() - (current.swap_pairs.len() as f64).ln();
            let log_rev = w_new[3].ln() - (summary.swap_pairs.len() as f64).ln();
            Some(Proposal {
                kind,
                tree: new_tree,
                summary,
                log_q_ratio: log_rev - log_fwd,
                target: parent,
                remap: None,
            })
        }
    }
}

/// Proposal / acceptance counts per move kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MoveCounts {
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
}

impl MoveCounts {
    pub(crate) fn record(&mut self, kind: MoveKind, accepted: bool) {
        self.proposed[kind.index()] += 1;
        if accepted {
            self.accepted[kind.index()] += 1;
        }
    }

    pub fn acceptance_rate(&self, kind: MoveKind) -> f64 {
        let p = self.proposed[kind.index()];
        if p == 0 {
            0.0
        } else {
            self.accepted[kind.index()] as f64 / p as f64
        }
    }
}
