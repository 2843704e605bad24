use crate::error::{Error, Result};

/// Which variable a split rule reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitVar {
    Covariate(usize),
    Source,
}

/// Decision rule attached to an internal node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SplitRule {
    /// `x[var] <= threshold` goes left.
    Threshold { var: usize, threshold: f64 },
    /// Sources whose bit is set in `left` go left; all others go right.
    Levels { left: u64 },
}

impl SplitRule {
    pub fn var(&self) -> SplitVar {
        match *self {
            SplitRule::Threshold { var, .. } => SplitVar::Covariate(var),
            SplitRule::Levels { .. } => SplitVar::Source,
        }
    }

    #[inline]
    pub fn goes_left(&self, x: &[f64], source: u32) -> bool {
        match *self {
            SplitRule::Threshold { var, threshold } => x[var] <= threshold,
            SplitRule::Levels { left } => source < 64 && left & (1u64 << source) != 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Leaf {
        mu: f64,
    },
    Split {
        rule: SplitRule,
        left: usize,
        right: usize,
    },
}

/// A binary regression tree stored as an arena; node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_covariates: usize,
}

impl DecisionTree {
    /// A root-only tree.
    pub fn leaf(n_covariates: usize, mu: f64) -> Self {
        DecisionTree {
            nodes: vec![Node::Leaf { mu }],
            n_covariates,
        }
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &Node {
        &self.nodes[idx]
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_leaf(&self, idx: usize) -> bool {
        matches!(self.nodes[idx], Node::Leaf { .. })
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn n_internal(&self) -> usize {
        self.nodes.len() - self.n_leaves()
    }

    /// Leaf value of node `idx`; zero for internal nodes.
    #[inline]
    pub fn mu(&self, idx: usize) -> f64 {
        match self.nodes[idx] {
            Node::Leaf { mu } => mu,
            Node::Split { .. } => 0.0,
        }
    }

    pub fn set_mu(&mut self, idx: usize, value: f64) {
        if let Node::Leaf { mu } = &mut self.nodes[idx] {
            *mu = value;
        }
    }

    pub fn leaf_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n, Node::Leaf { .. }))
            .map(|(i, _)| i)
    }

    /// Splits leaf `idx` with `rule`, returning the new (left, right) node indices.
    pub fn grow(
        &mut self,
        idx: usize,
        rule: SplitRule,
        mu_left: f64,
        mu_right: f64,
    ) -> Result<(usize, usize)> {
        if idx >= self.nodes.len() || !self.is_leaf(idx) {
            return Err(Error::Input(format!("node {idx} is not a leaf")));
        }
        if let SplitRule::Threshold { var, .. } = rule {
            if var >= self.n_covariates {
                return Err(Error::Dimension {
                    expected: self.n_covariates,
                    got: var + 1,
                });
            }
        }
        let left = self.nodes.len();
        self.nodes.push(Node::Leaf { mu: mu_left });
        self.nodes.push(Node::Leaf { mu: mu_right });
        self.nodes[idx] = Node::Split {
            rule,
            left,
            right: left + 1,
        };
        Ok((left, left + 1))
    }

    /// Returns a copy where the subtree under `idx` is replaced by a single leaf.
    /// Node indices are compacted in depth-first order.
    pub fn collapsed(&self, idx: usize, mu: f64) -> DecisionTree {
        self.collapsed_with_map(idx, mu).0
    }

    /// Like [`collapsed`](Self::collapsed), also returning the new index of
    /// every old node; nodes under `idx` map to the new leaf.
    pub fn collapsed_with_map(&self, idx: usize, mu: f64) -> (DecisionTree, Vec<u32>) {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut map = vec![u32::MAX; self.nodes.len()];
        self.copy_subtree(0, idx, mu, &mut out, &mut map);
        let leaf = map[idx];
        let mut stack = vec![idx];
        while let Some(i) = stack.pop() {
            map[i] = leaf;
            if let Node::Split { left, right, .. } = self.nodes[i] {
                stack.push(left);
                stack.push(right);
            }
        }
        (
            DecisionTree {
                nodes: out,
                n_covariates: self.n_covariates,
            },
            map,
        )
    }

    fn copy_subtree(
        &self,
        src: usize,
        cut: usize,
        mu: f64,
        out: &mut Vec<Node>,
        map: &mut [u32],
    ) -> usize {
        let me = out.len();
        map[src] = me as u32;
        if src == cut {
            out.push(Node::Leaf { mu });
            return me;
        }
        match self.nodes[src] {
            Node::Leaf { mu } => out.push(Node::Leaf { mu }),
            Node::Split { rule, left, right } => {
                out.push(Node::Leaf { mu: 0.0 });
                let l = self.copy_subtree(left, cut, mu, out, map);
                let r = self.copy_subtree(right, cut, mu, out, map);
                out[me] = Node::Split {
                    rule,
                    left: l,
                    right: r,
                };
            }
        }
        me
    }

    /// Marks `idx` and all of its descendants.
    pub fn subtree_mask(&self, idx: usize) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        let mut stack = vec![idx];
        while let Some(i) = stack.pop() {
            mask[i] = true;
            if let Node::Split { left, right, .. } = self.nodes[i] {
                stack.push(left);
                stack.push(right);
            }
        }
        mask
    }

    pub(crate) fn set_rule(&mut self, idx: usize, new_rule: SplitRule) {
        if let Node::Split { rule, .. } = &mut self.nodes[idx] {
            *rule = new_rule;
        }
    }

    pub fn rule(&self, idx: usize) -> Option<SplitRule> {
        match self.nodes[idx] {
            Node::Split { rule, .. } => Some(rule),
            Node::Leaf { .. } => None,
        }
    }

    /// Index of the terminal node reached by `(x, source)`. No dimension check.
    #[inline]
    pub fn leaf_index(&self, x: &[f64], source: u32) -> usize {
        self.leaf_index_from(0, x, source)
    }

    /// Routes `(x, source)` starting at node `start`.
    #[inline]
    pub fn leaf_index_from(&self, start: usize, x: &[f64], source: u32) -> usize {
        let mut idx = start;
        loop {
            match self.nodes[idx] {
                Node::Leaf { .. } => return idx,
                Node::Split { rule, left, right } => {
                    idx = if rule.goes_left(x, source) {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], source: u32) -> f64 {
        self.mu(self.leaf_index(x, source))
    }

    /// Leaf mean of the terminal node reached by `(x, source)`.
    pub fn evaluate(&self, x: &[f64], source: u32) -> Result<f64> {
        if x.len() != self.n_covariates {
            return Err(Error::Dimension {
                expected: self.n_covariates,
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x, source))
    }

    /// Depth of every node (root = 0), indexed like `nodes()`.
    pub fn depths(&self) -> Vec<u32> {
        let mut depth = vec![0u32; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if let Node::Split { left, right, .. } = self.nodes[i] {
                depth[left] = depth[i] + 1;
                depth[right] = depth[i] + 1;
                stack.push(left);
                stack.push(right);
            }
        }
        depth
    }

    pub fn max_depth(&self) -> u32 {
        self.depths().into_iter().max().unwrap_or(0)
    }
}

/// The set of split rules a tree may use: a cutpoint grid per covariate and
/// the observed source levels.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpace {
    cutpoints: Vec<Vec<f64>>,
    source_levels: u64,
}

/// Cutpoint index ranges and reachable source levels at one node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Domain {
    cut_ranges: Vec<(u32, u32)>,
    levels: u64,
}

/// Number of distinct two-way partitions of `k` unordered levels.
fn n_partitions(k: u32) -> u64 {
    if k < 2 {
        0
    } else {
        (1u64 << (k - 1)) - 1
    }
}

impl SplitSpace {
    /// `cutpoints[q]` must be sorted ascending. `source_levels` is a bitmask of
    /// the observed source labels (bit `s` set iff source `s` occurs).
    pub fn new(cutpoints: Vec<Vec<f64>>, source_levels: u64) -> Self {
        SplitSpace {
            cutpoints,
            source_levels,
        }
    }

    /// Builds the grid from training data: `grid_size` equally spaced interior
    /// points over each continuous covariate's range, a single 0.5 cut for 0/1
    /// columns, and no cut for constant columns.
    pub fn from_data(
        x: &[f64],
        n_covariates: usize,
        source: Option<&[u32]>,
        grid_size: usize,
    ) -> Self {
        let n = x.len().checked_div(n_covariates).unwrap_or(0);
        let cutpoints = (0..n_covariates)
            .map(|q| {
                let col = (0..n).map(|i| x[i * n_covariates + q]);
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                let mut binary = true;
                for v in col {
                    lo = lo.min(v);
                    hi = hi.max(v);
                    binary &= v == 0.0 || v == 1.0;
                }
                if !(hi > lo) {
                    Vec::new()
                } else if binary {
                    vec![0.5]
                } else {
                    let step = (hi - lo) / (grid_size as f64 + 1.0);
                    (1..=grid_size).map(|k| lo + step * k as f64).collect()
                }
            })
            .collect();
        let source_levels = source.map_or(0, |s| s.iter().fold(0u64, |m, &l| m | (1u64 << l)));
        SplitSpace {
            cutpoints,
            source_levels,
        }
    }

    pub fn n_covariates(&self) -> usize {
        self.cutpoints.len()
    }

    pub fn cutpoints(&self, var: usize) -> &[f64] {
        &self.cutpoints[var]
    }

    pub fn root_domain(&self) -> Domain {
        Domain {
            cut_ranges: self.cutpoints.iter().map(|c| (0, c.len() as u32)).collect(),
            levels: self.source_levels,
        }
    }

    /// Number of rules available for `var` within `dom`.
    pub fn n_rules(&self, dom: &Domain, var: SplitVar) -> u64 {
        match var {
            SplitVar::Covariate(q) => {
                let (lo, hi) = dom.cut_ranges[q];
                (hi - lo) as u64
            }
            SplitVar::Source => n_partitions(dom.levels.count_ones()),
        }
    }

    /// Variables with at least one available rule within `dom`.
    pub fn available_vars(&self, dom: &Domain) -> Vec<SplitVar> {
        let mut vars: Vec<SplitVar> = (0..self.cutpoints.len())
            .map(SplitVar::Covariate)
            .filter(|&v| self.n_rules(dom, v) > 0)
            .collect();
        if self.n_rules(dom, SplitVar::Source) > 0 {
            vars.push(SplitVar::Source);
        }
        vars
    }

    pub fn n_available_vars(&self, dom: &Domain) -> usize {
        let cov = dom.cut_ranges.iter().filter(|(lo, hi)| hi > lo).count();
        cov + usize::from(dom.levels.count_ones() >= 2)
    }

    /// Child domains produced by splitting `dom` with `rule`, or `None` if the
    /// rule is not available there.
    pub fn split_domain(&self, dom: &Domain, rule: &SplitRule) -> Option<(Domain, Domain)> {
        match *rule {
            SplitRule::Threshold { var, threshold } => {
                let grid = self.cutpoints.get(var)?;
                let k = grid.binary_search_by(|c| c.total_cmp(&threshold)).ok()? as u32;
                let (lo, hi) = dom.cut_ranges[var];
                if k < lo || k >= hi {
                    return None;
                }
                let mut left = dom.clone();
                let mut right = dom.clone();
                left.cut_ranges[var] = (lo, k);
                right.cut_ranges[var] = (k + 1, hi);
                Some((left, right))
            }
            SplitRule::Levels { left: mask } => {
                let l = dom.levels & mask;
                let r = dom.levels & !mask;
                if l == 0 || r == 0 {
                    return None;
                }
                Some((
                    Domain {
                        cut_ranges: dom.cut_ranges.clone(),
                        levels: l,
                    },
                    Domain {
                        cut_ranges: dom.cut_ranges.clone(),
                        levels: r,
                    },
                ))
            }
        }
    }

    /// Draws a rule uniformly: variable uniform over the available ones, then
    /// rule uniform given the variable. Returns the rule with the log
    /// probability of having drawn it, or `None` when nothing is available.
    pub fn sample_rule<R: rand::Rng + ?Sized>(
        &self,
        dom: &Domain,
        rng: &mut R,
    ) -> Option<(SplitRule, f64)> {
        let vars = self.available_vars(dom);
        if vars.is_empty() {
            return None;
        }
        let var = vars[rng.random_range(0..vars.len())];
        let n_rules = self.n_rules(dom, var);
        let rule = match var {
            SplitVar::Covariate(q) => {
                let (lo, hi) = dom.cut_ranges[q];
                let k = rng.random_range(lo..hi);
                SplitRule::Threshold {
                    var: q,
                    threshold: self.cutpoints[q][k as usize],
                }
            }
            SplitVar::Source => {
                // Canonical partition: the smallest reachable level goes left,
                // the remaining k-1 levels are assigned by the bits of `code`,
                // excluding the all-left assignment.
                let levels: Vec<u32> = (0..64).filter(|b| dom.levels & (1u64 << b) != 0).collect();
                let code = rng.random_range(0..n_rules);
                let mut mask = 1u64 << levels[0];
                for (bit, &lvl) in levels[1..].iter().enumerate() {
                    if code & (1u64 << bit) != 0 {
                        mask |= 1u64 << lvl;
                    }
                }
                SplitRule::Levels { left: mask }
            }
        };
        let log_p = -(vars.len() as f64).ln() - (n_rules as f64).ln();
        Some((rule, log_p))
    }

    /// Log probability that `sample_rule` would draw `rule` at `dom`.
    pub fn rule_log_prob(&self, dom: &Domain, rule: &SplitRule) -> f64 {
        let n_vars = self.n_available_vars(dom);
        let n_rules = self.n_rules(dom, rule.var());
        if n_vars == 0 || n_rules == 0 {
            return f64::NEG_INFINITY;
        }
        -(n_vars as f64).ln() - (n_rules as f64).ln()
    }
}

/// Per-node context: depth and domain, in depth-first preorder.
#[derive(Clone, Debug)]
pub struct NodeContext {
    pub node: usize,
    pub parent: Option<usize>,
    pub depth: u32,
    pub domain: Domain,
}

/// Computes the context of every node. Nodes whose rule is unavailable in
/// their domain make the whole tree invalid (`None`).
pub fn node_contexts(tree: &DecisionTree, space: &SplitSpace) -> Option<Vec<NodeContext>> {
    let mut out = Vec::with_capacity(tree.n_nodes());
    let mut stack = vec![(0usize, None, 0u32, space.root_domain())];
    while let Some((idx, parent, depth, domain)) = stack.pop() {
        if let Node::Split { rule, left, right } = *tree.node(idx) {
            let (dl, dr) = space.split_domain(&domain, &rule)?;
            stack.push((right, Some(idx), depth + 1, dr));
            stack.push((left, Some(idx), depth + 1, dl));
        }
        out.push(NodeContext {
            node: idx,
            parent,
            depth,
            domain,
        });
    }
    Some(out)
}
