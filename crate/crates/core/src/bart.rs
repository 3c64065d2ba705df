//! Bayesian additive regression trees.
//!
//! Split rules are drawn from a fixed grid of cutpoints (midpoints between
//! sorted unique values of each predictor). A rule is available at a node when
//! its cutpoint lies strictly inside the interval left open by the node's
//! ancestors, so the tree prior depends on the grid only and not on where the
//! data fall.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BartConfig {
    pub n_trees: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub p_grow: f64,
    pub p_prune: f64,
    pub p_change: f64,
    pub p_swap: f64,
}

impl Default for BartConfig {
    fn default() -> Self {
        BartConfig {
            n_trees: 250,
            alpha: 0.95,
            beta: 2.0,
            gamma: 2.0,
            p_grow: 0.25,
            p_prune: 0.25,
            p_change: 0.4,
            p_swap: 0.1,
        }
    }
}

impl BartConfig {
    pub fn validate(&self) -> Result<()> {
        let total = self.p_grow + self.p_prune + self.p_change + self.p_swap;
        let probs = [self.p_grow, self.p_prune, self.p_change, self.p_swap];
        if (total - 1.0).abs() > 1e-9 || probs.iter().any(|p| *p < 0.0) {
            return Err(Error::config("BART move probabilities must be nonnegative and sum to 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.beta > 0.0) {
            return Err(Error::config("BART tree prior needs alpha in (0,1) and beta > 0"));
        }
        if self.n_trees == 0 || !(self.gamma > 0.0) {
            return Err(Error::config("BART needs at least one tree and gamma > 0"));
        }
        Ok(())
    }

    /// Prior probability that a node at `depth` is internal.
    pub fn p_split(&self, depth: usize) -> f64 {
        self.alpha * (1.0 + depth as f64).powf(-self.beta)
    }

    /// Leaf prior variance `R^2 / (4 gamma^2 S)` for a target range `R`.
    pub fn leaf_prior_var(&self, range_y: f64) -> f64 {
        range_y * range_y / (4.0 * self.gamma * self.gamma * self.n_trees as f64)
    }
}

/// Split grid per predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cutpoints {
    pub values: Vec<Vec<f64>>,
}

impl Cutpoints {
    pub fn from_matrix(x: &DMatrix<f64>) -> Self {
        let values = (0..x.ncols())
            .map(|j| {
                let mut col: Vec<f64> = x.column(j).iter().copied().filter(|v| v.is_finite()).collect();
                col.sort_by(|a, b| a.partial_cmp(b).unwrap());
                col.dedup();
                col.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            })
            .collect();
        Cutpoints { values }
    }

    pub fn n_vars(&self) -> usize {
        self.values.len()
    }

    pub fn n_cuts(&self, var: usize) -> usize {
        self.values[var].len()
    }

    /// Rows of `x` mapped to grid positions: `bin(x) <= c` iff `x < cut_c`.
    pub fn bin(&self, x: &DMatrix<f64>) -> Result<BinnedX> {
        if x.ncols() != self.n_vars() {
            return Err(Error::invalid("design has a different number of columns than the cut grid"));
        }
        let (n, p) = (x.nrows(), x.ncols());
        let mut bins = vec![0u32; n * p];
        for i in 0..n {
            for j in 0..p {
                let v = x[(i, j)];
                bins[i * p + j] = self.values[j].partition_point(|c| *c <= v) as u32;
            }
        }
        Ok(BinnedX { n, p, bins })
    }
}

/// Row-major grid positions of a design.
#[derive(Debug, Clone)]
pub struct BinnedX {
    pub n: usize,
    pub p: usize,
    bins: Vec<u32>,
}

impl BinnedX {
    #[inline]
    pub fn row(&self, i: usize) -> &[u32] {
        &self.bins[i * self.p..(i + 1) * self.p]
    }
}

const NIL: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Node {
    var: u32,
    cut: u32,
    left: u32,
    right: u32,
    parent: u32,
    depth: u32,
    mu: f64,
}

impl Node {
    fn leaf(parent: u32, depth: u32) -> Self {
        Node { var: 0, cut: 0, left: NIL, right: NIL, parent, depth, mu: 0.0 }
    }

    fn is_leaf(&self) -> bool {
        self.left == NIL
    }
}

/// Binary regression tree stored as a node arena rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl Default for RegressionTree {
    fn default() -> Self {
        Self::stump(0.0)
    }
}

impl RegressionTree {
    pub fn stump(mu: f64) -> Self {
        let mut root = Node::leaf(NIL, 0);
        root.mu = mu;
        RegressionTree { nodes: vec![root] }
    }

    /// Node indices in depth-first order.
    fn reachable(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0u32];
        while let Some(i) = stack.pop() {
            out.push(i);
            let n = &self.nodes[i as usize];
            if !n.is_leaf() {
                stack.push(n.right);
                stack.push(n.left);
            }
        }
        out
    }

    fn leaves(&self) -> Vec<u32> {
        self.reachable().into_iter().filter(|&i| self.nodes[i as usize].is_leaf()).collect()
    }

    fn internals(&self) -> Vec<u32> {
        self.reachable().into_iter().filter(|&i| !self.nodes[i as usize].is_leaf()).collect()
    }

    /// Internal nodes whose children are both leaves.
    fn nogs(&self) -> Vec<u32> {
        self.internals()
            .into_iter()
            .filter(|&i| {
                let n = &self.nodes[i as usize];
                self.nodes[n.left as usize].is_leaf() && self.nodes[n.right as usize].is_leaf()
            })
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().len()
    }

    pub fn n_internal(&self) -> usize {
        self.internals().len()
    }

    pub fn depth(&self) -> usize {
        self.reachable().iter().map(|&i| self.nodes[i as usize].depth as usize).max().unwrap_or(0)
    }

    /// `(variable, cut index)` of the root, or `None` for a stump.
    pub fn root_split(&self) -> Option<(usize, usize)> {
        let r = &self.nodes[0];
        (!r.is_leaf()).then_some((r.var as usize, r.cut as usize))
    }

    /// Split rules and leaf values in preorder, `None` marking a leaf.
    pub fn preorder(&self) -> Vec<Option<(usize, usize)>> {
        self.reachable()
            .iter()
            .map(|&i| {
                let n = &self.nodes[i as usize];
                (!n.is_leaf()).then_some((n.var as usize, n.cut as usize))
            })
            .collect()
    }

    pub fn leaf_values(&self) -> Vec<f64> {
        self.leaves().iter().map(|&i| self.nodes[i as usize].mu).collect()
    }

    /// Build a tree from preorder split rules (leaves get `mu = 0`).
    pub fn from_preorder(rules: &[Option<(usize, usize)>]) -> Result<Self> {
        fn build(rules: &[Option<(usize, usize)>], pos: &mut usize, tree: &mut RegressionTree, parent: u32, depth: u32) -> Result<u32> {
            let rule = *rules.get(*pos).ok_or_else(|| Error::invalid("truncated preorder"))?;
            *pos += 1;
            let idx = tree.nodes.len() as u32;
            tree.nodes.push(Node::leaf(parent, depth));
            if let Some((v, c)) = rule {
                let l = build(rules, pos, tree, idx, depth + 1)?;
                let r = build(rules, pos, tree, idx, depth + 1)?;
                let n = &mut tree.nodes[idx as usize];
                n.var = v as u32;
                n.cut = c as u32;
                n.left = l;
                n.right = r;
            }
            Ok(idx)
        }
        let mut tree = RegressionTree { nodes: Vec::new() };
        let mut pos = 0;
        build(rules, &mut pos, &mut tree, NIL, 0)?;
        if pos != rules.len() {
            return Err(Error::invalid("trailing entries in preorder"));
        }
        Ok(tree)
    }

    pub fn set_leaf_values(&mut self, values: &[f64]) {
        for (i, v) in self.leaves().into_iter().zip(values) {
            self.nodes[i as usize].mu = *v;
        }
    }

    #[inline]
    fn leaf_of(&self, row: &[u32]) -> u32 {
        let mut i = 0u32;
        loop {
            let n = &self.nodes[i as usize];
            if n.is_leaf() {
                return i;
            }
            i = if row[n.var as usize] <= n.cut { n.left } else { n.right };
        }
    }

    pub fn predict_row(&self, row: &[u32]) -> f64 {
        self.nodes[self.leaf_of(row) as usize].mu
    }

    pub fn predict(&self, x: &BinnedX) -> Vec<f64> {
        (0..x.n).map(|i| self.predict_row(x.row(i))).collect()
    }

    /// Leaf index (in leaf order) for every row.
    pub fn assign_rows(&self, x: &BinnedX) -> Vec<usize> {
        let leaves = self.leaves();
        let mut pos = vec![usize::MAX; self.nodes.len()];
        for (k, &l) in leaves.iter().enumerate() {
            pos[l as usize] = k;
        }
        (0..x.n).map(|i| pos[self.leaf_of(x.row(i)) as usize]).collect()
    }

    /// Rebuild the arena keeping only nodes reachable from the root.
    fn compact(&mut self) {
        let order = self.reachable();
        let mut map = vec![NIL; self.nodes.len()];
        for (k, &i) in order.iter().enumerate() {
            map[i as usize] = k as u32;
        }
        let remap = |v: u32| if v == NIL { NIL } else { map[v as usize] };
        self.nodes = order
            .iter()
            .map(|&i| {
                let mut n = self.nodes[i as usize].clone();
                n.left = remap(n.left);
                n.right = remap(n.right);
                n.parent = remap(n.parent);
                n
            })
            .collect();
    }

    /// Cut-index intervals `[lo, hi)` imposed by the ancestors of `node`.
    fn constraints(&self, node: u32) -> Vec<(u32, u32, u32)> {
        let mut out: Vec<(u32, u32, u32)> = Vec::new();
        let mut child = node;
        let mut parent = self.nodes[node as usize].parent;
        while parent != NIL {
            let p = &self.nodes[parent as usize];
            let went_left = p.left == child;
            let entry = match out.iter_mut().find(|e| e.0 == p.var) {
                Some(e) => e,
                None => {
                    out.push((p.var, 0, u32::MAX));
                    out.last_mut().unwrap()
                }
            };
            if went_left {
                entry.2 = entry.2.min(p.cut);
            } else {
                entry.1 = entry.1.max(p.cut + 1);
            }
            child = parent;
            parent = p.parent;
        }
        out
    }
}

/// Availability of split rules at a node given its ancestor constraints.
struct Avail<'a> {
    cuts: &'a Cutpoints,
    splittable: &'a [usize],
    constraints: Vec<(u32, u32, u32)>,
}

impl<'a> Avail<'a> {
    fn n_avail(&self, var: usize) -> usize {
        let full = self.cuts.n_cuts(var) as u32;
        match self.constraints.iter().find(|c| c.0 as usize == var) {
            Some(&(_, lo, hi)) => hi.min(full).saturating_sub(lo) as usize,
            None => full as usize,
        }
    }

    fn range(&self, var: usize) -> (u32, u32) {
        let full = self.cuts.n_cuts(var) as u32;
        match self.constraints.iter().find(|c| c.0 as usize == var) {
            Some(&(_, lo, hi)) => (lo, hi.min(full)),
            None => (0, full),
        }
    }

    /// Number of variables with at least one available cutpoint.
    fn p_adj(&self) -> usize {
        let mut n = self.splittable.len();
        for &(v, _, _) in &self.constraints {
            if self.cuts.n_cuts(v as usize) > 0 && self.n_avail(v as usize) == 0 {
                n -= 1;
            }
        }
        n
    }

    fn draw_rule<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<(usize, usize)> {
        if self.p_adj() == 0 {
            return None;
        }
        loop {
            let v = self.splittable[rng.random_range(0..self.splittable.len())];
            let (lo, hi) = self.range(v);
            if hi > lo {
                return Some((v, rng.random_range(lo..hi) as usize));
            }
        }
    }
}

/// Data and fixed quantities shared by every tree update in a sweep.
pub struct TreeContext<'a> {
    pub x: &'a BinnedX,
    pub cuts: &'a Cutpoints,
    pub config: &'a BartConfig,
    pub v_mu: f64,
    /// Precision weights `1 / sigma_t^2`.
    pub weights: &'a [f64],
    splittable: Vec<usize>,
}

impl<'a> TreeContext<'a> {
    pub fn new(x: &'a BinnedX, cuts: &'a Cutpoints, config: &'a BartConfig, v_mu: f64, weights: &'a [f64]) -> Self {
        let splittable = (0..cuts.n_vars()).filter(|&v| cuts.n_cuts(v) > 0).collect();
        TreeContext { x, cuts, config, v_mu, weights, splittable }
    }

    fn avail(&self, tree: &RegressionTree, node: u32) -> Avail<'_> {
        Avail { cuts: self.cuts, splittable: &self.splittable, constraints: tree.constraints(node) }
    }

    /// Exact log prior of the tree structure and split rules.
    pub fn log_tree_prior(&self, tree: &RegressionTree) -> f64 {
        let mut lp = 0.0;
        for i in tree.reachable() {
            let n = &tree.nodes[i as usize];
            let a = self.avail(tree, i);
            let p_adj = a.p_adj();
            let ps = if p_adj > 0 { self.config.p_split(n.depth as usize) } else { 0.0 };
            if n.is_leaf() {
                lp += (1.0 - ps).ln();
            } else {
                let ncut = a.n_avail(n.var as usize);
                if ncut == 0 || n.cut < a.range(n.var as usize).0 || n.cut >= a.range(n.var as usize).1 {
                    return f64::NEG_INFINITY;
                }
                lp += ps.ln() - (p_adj as f64).ln() - (ncut as f64).ln();
            }
        }
        lp
    }

    /// Per-leaf weighted sums `(sum w, sum w r)`.
    fn leaf_stats(&self, tree: &RegressionTree, resid: &[f64]) -> Vec<(f64, f64)> {
        let mut stats = vec![(0.0, 0.0); tree.nodes.len()];
        for i in 0..self.x.n {
            let l = tree.leaf_of(self.x.row(i)) as usize;
            stats[l].0 += self.weights[i];
            stats[l].1 += self.weights[i] * resid[i];
        }
        stats
    }

    /// Log likelihood with leaf values integrated out, up to a constant that
    /// does not depend on the tree.
    pub fn log_marginal(&self, tree: &RegressionTree, resid: &[f64]) -> f64 {
        let stats = self.leaf_stats(tree, resid);
        tree.leaves()
            .iter()
            .map(|&l| {
                let (w, s) = stats[l as usize];
                leaf_log_marginal(w, s, self.v_mu)
            })
            .sum()
    }
}

/// `-1/2 log(1 + V W) + 1/2 S^2 / (W + 1/V)` for one leaf.
pub fn leaf_log_marginal(w: f64, s: f64, v_mu: f64) -> f64 {
    -0.5 * (1.0 + v_mu * w).ln() + 0.5 * s * s / (w + 1.0 / v_mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveKind {
    Grow,
    Prune,
    Change,
    Swap,
}

/// Proposed tree plus `log q(old | new) - log q(new | old)`.
struct Proposal {
    tree: RegressionTree,
    log_q_ratio: f64,
}

fn growable_leaves(ctx: &TreeContext<'_>, tree: &RegressionTree) -> Vec<u32> {
    tree.leaves().into_iter().filter(|&l| ctx.avail(tree, l).p_adj() > 0).collect()
}

fn propose_grow<R: Rng + ?Sized>(ctx: &TreeContext<'_>, tree: &RegressionTree, rng: &mut R) -> Option<Proposal> {
    let cands = growable_leaves(ctx, tree);
    if cands.is_empty() {
        return None;
    }
    let leaf = cands[rng.random_range(0..cands.len())];
    let avail = ctx.avail(tree, leaf);
    let (var, cut) = avail.draw_rule(rng)?;
    let p_adj = avail.p_adj() as f64;
    let ncut = avail.n_avail(var) as f64;
    let mut new = tree.clone();
    let depth = new.nodes[leaf as usize].depth + 1;
    let l = new.nodes.len() as u32;
    new.nodes.push(Node::leaf(leaf, depth));
    new.nodes.push(Node::leaf(leaf, depth));
    let n = &mut new.nodes[leaf as usize];
    n.var = var as u32;
    n.cut = cut as u32;
    n.left = l;
    n.right = l + 1;
    let cfg = ctx.config;
    let q_fwd = cfg.p_grow / cands.len() as f64 / p_adj / ncut;
    let q_rev = cfg.p_prune / new.nogs().len() as f64;
    Some(Proposal { tree: new, log_q_ratio: q_rev.ln() - q_fwd.ln() })
}

fn propose_prune<R: Rng + ?Sized>(ctx: &TreeContext<'_>, tree: &RegressionTree, rng: &mut R) -> Option<Proposal> {
    let nogs = tree.nogs();
    if nogs.is_empty() {
        return None;
    }
    let node = nogs[rng.random_range(0..nogs.len())];
    let (var, _) = {
        let n = &tree.nodes[node as usize];
        (n.var as usize, n.cut)
    };
    let mut new = tree.clone();
    new.nodes[node as usize].left = NIL;
    new.nodes[node as usize].right = NIL;
    new.compact();
    // `node` keeps its index under compaction only if it precedes removed
    // nodes, so recover it through the ancestor path instead.
    let avail = ctx.avail(tree, node);
    let p_adj = avail.p_adj() as f64;
    let ncut = avail.n_avail(var) as f64;
    let cfg = ctx.config;
    let q_fwd = cfg.p_prune / nogs.len() as f64;
    let q_rev = cfg.p_grow / growable_leaves(ctx, &new).len() as f64 / p_adj / ncut;
    Some(Proposal { tree: new, log_q_ratio: q_rev.ln() - q_fwd.ln() })
}

fn propose_change<R: Rng + ?Sized>(ctx: &TreeContext<'_>, tree: &RegressionTree, rng: &mut R) -> Option<Proposal> {
    let internals = tree.internals();
    if internals.is_empty() {
        return None;
    }
    let node = internals[rng.random_range(0..internals.len())];
    let avail = ctx.avail(tree, node);
    let (var, cut) = avail.draw_rule(rng)?;
    let old_var = tree.nodes[node as usize].var as usize;
    let q_fwd = 1.0 / avail.n_avail(var) as f64;
    let q_rev = 1.0 / avail.n_avail(old_var) as f64;
    let mut new = tree.clone();
    new.nodes[node as usize].var = var as u32;
    new.nodes[node as usize].cut = cut as u32;
    Some(Proposal { tree: new, log_q_ratio: q_rev.ln() - q_fwd.ln() })
}

fn propose_swap<R: Rng + ?Sized>(tree: &RegressionTree, rng: &mut R) -> Option<Proposal> {
    let pairs: Vec<(u32, u32)> = tree
        .internals()
        .into_iter()
        .flat_map(|p| {
            let n = &tree.nodes[p as usize];
            [n.left, n.right]
                .into_iter()
                .filter(|&c| !tree.nodes[c as usize].is_leaf())
                .map(move |c| (p, c))
        })
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let (p, c) = pairs[rng.random_range(0..pairs.len())];
    let mut new = tree.clone();
    let (pv, pc) = (tree.nodes[p as usize].var, tree.nodes[p as usize].cut);
    let (cv, cc) = (tree.nodes[c as usize].var, tree.nodes[c as usize].cut);
    let pn = &tree.nodes[p as usize];
    let sibling = if pn.left == c { pn.right } else { pn.left };
    let s = &tree.nodes[sibling as usize];
    new.nodes[p as usize].var = cv;
    new.nodes[p as usize].cut = cc;
    new.nodes[c as usize].var = pv;
    new.nodes[c as usize].cut = pc;
    if !s.is_leaf() && s.var == cv && s.cut == cc {
        new.nodes[sibling as usize].var = pv;
        new.nodes[sibling as usize].cut = pc;
    }
    Some(Proposal { tree: new, log_q_ratio: 0.0 })
}

/// One Metropolis-Hastings update of a tree's structure with leaf values
/// integrated out. Infeasible proposals count as rejections.
pub fn tree_mh_step<R: Rng + ?Sized>(
    ctx: &TreeContext<'_>,
    tree: &RegressionTree,
    resid: &[f64],
    rng: &mut R,
) -> (RegressionTree, MoveKind, bool) {
    let cfg = ctx.config;
    let u: f64 = rng.random();
    let kind = if u < cfg.p_grow {
        MoveKind::Grow
    } else if u < cfg.p_grow + cfg.p_prune {
        MoveKind::Prune
    } else if u < cfg.p_grow + cfg.p_prune + cfg.p_change {
        MoveKind::Change
    } else {
        MoveKind::Swap
    };
    let prop = match kind {
        MoveKind::Grow => propose_grow(ctx, tree, rng),
        MoveKind::Prune => propose_prune(ctx, tree, rng),
        MoveKind::Change => propose_change(ctx, tree, rng),
        MoveKind::Swap => propose_swap(tree, rng),
    };
    let Some(prop) = prop else {
        return (tree.clone(), kind, false);
    };
    let new_prior = ctx.log_tree_prior(&prop.tree);
    if !new_prior.is_finite() {
        return (tree.clone(), kind, false);
    }
    let log_ratio = new_prior + ctx.log_marginal(&prop.tree, resid) - ctx.log_tree_prior(tree)
        - ctx.log_marginal(tree, resid)
        + prop.log_q_ratio;
    let a: f64 = rng.random();
    if log_ratio.is_finite() && a.ln() < log_ratio {
        (prop.tree, kind, true)
    } else {
        (tree.clone(), kind, false)
    }
}

/// Draw each leaf value from its conjugate Gaussian posterior.
pub fn sample_leaf_params<R: Rng + ?Sized>(ctx: &TreeContext<'_>, tree: &mut RegressionTree, resid: &[f64], rng: &mut R) {
    let stats = ctx.leaf_stats(tree, resid);
    for l in tree.leaves() {
        let (w, s) = stats[l as usize];
        let prec = w + 1.0 / ctx.v_mu;
        let z: f64 = rng.sample(StandardNormal);
        tree.nodes[l as usize].mu = s / prec + z / prec.sqrt();
    }
}

/// Sum-of-trees state with cached per-tree fits.
#[derive(Debug, Clone)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
    tree_fits: Vec<Vec<f64>>,
    pub fit: Vec<f64>,
    pub accepted: [u64; 4],
    pub proposed: [u64; 4],
}

impl Forest {
    pub fn new(n_trees: usize, n: usize) -> Self {
        Forest {
            trees: vec![RegressionTree::stump(0.0); n_trees],
            tree_fits: vec![vec![0.0; n]; n_trees],
            fit: vec![0.0; n],
            accepted: [0; 4],
            proposed: [0; 4],
        }
    }

    pub fn predict(&self, x: &BinnedX) -> Vec<f64> {
        let mut out = vec![0.0; x.n];
        for t in &self.trees {
            for (i, o) in out.iter_mut().enumerate() {
                *o += t.predict_row(x.row(i));
            }
        }
        out
    }

    /// Recompute cached fits after the design changed.
    pub fn refit(&mut self, x: &BinnedX) {
        self.fit = vec![0.0; x.n];
        for (t, f) in self.trees.iter().zip(self.tree_fits.iter_mut()) {
            *f = t.predict(x);
            for (a, b) in self.fit.iter_mut().zip(f.iter()) {
                *a += b;
            }
        }
    }
}

/// One backfitting pass over all trees.
pub fn bart_sweep<R: Rng + ?Sized>(forest: &mut Forest, ctx: &TreeContext<'_>, y: &[f64], rng: &mut R) -> Vec<f64> {
    let n = y.len();
    let mut resid = vec![0.0; n];
    for s in 0..forest.trees.len() {
        for i in 0..n {
            resid[i] = y[i] - (forest.fit[i] - forest.tree_fits[s][i]);
        }
        let (mut tree, kind, acc) = tree_mh_step(ctx, &forest.trees[s], &resid, rng);
        forest.proposed[kind as usize] += 1;
        forest.accepted[kind as usize] += acc as u64;
        sample_leaf_params(ctx, &mut tree, &resid, rng);
        let new_fit = tree.predict(ctx.x);
        for i in 0..n {
            forest.fit[i] += new_fit[i] - forest.tree_fits[s][i];
        }
        forest.tree_fits[s] = new_fit;
        forest.trees[s] = tree;
    }
    forest.fit.clone()
}

/// Range of the finite entries of `y`.
pub fn target_range(y: &DVector<f64>) -> f64 {
    let (lo, hi) = y
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi > lo {
        hi - lo
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn line(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, 1, |i, _| i as f64)
    }

    #[test]
    fn root_split_probability() {
        let c = BartConfig::default();
        assert!((c.p_split(0) - 0.95).abs() < 1e-15);
        assert!((c.p_split(1) - 0.95 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn leaf_prior_variance_value() {
        let c = BartConfig::default();
        assert!((c.leaf_prior_var(4.0) - 0.004).abs() < 1e-15);
    }

    #[test]
    fn cutpoints_and_bins() {
        let x = DMatrix::from_column_slice(4, 1, &[3.0, 1.0, 2.0, 2.0]);
        let c = Cutpoints::from_matrix(&x);
        assert_eq!(c.values[0], vec![1.5, 2.5]);
        let b = c.bin(&x).unwrap();
        assert_eq!((0..4).map(|i| b.row(i)[0]).collect::<Vec<_>>(), vec![2, 0, 1, 1]);
    }

    #[test]
    fn merge_on_stump_is_rejected() {
        let x = line(10);
        let cuts = Cutpoints::from_matrix(&x);
        let bx = cuts.bin(&x).unwrap();
        let cfg = BartConfig { p_grow: 0.0, p_prune: 1.0, p_change: 0.0, p_swap: 0.0, ..Default::default() };
        let w = vec![1.0; 10];
        let ctx = TreeContext::new(&bx, &cuts, &cfg, 0.1, &w);
        let t = RegressionTree::stump(0.3);
        let (new, kind, acc) = tree_mh_step(&ctx, &t, &[0.0; 10], &mut stream(1, &[]));
        assert_eq!(kind, MoveKind::Prune);
        assert!(!acc);
        assert_eq!(new, t);
    }

    #[test]
    fn grow_then_prune_ratios_are_reciprocal() {
        let x = DMatrix::from_fn(12, 2, |i, j| ((i * (j + 3)) % 7) as f64);
        let cuts = Cutpoints::from_matrix(&x);
        let bx = cuts.bin(&x).unwrap();
        let cfg = BartConfig::default();
        let w = vec![1.0; 12];
        let ctx = TreeContext::new(&bx, &cuts, &cfg, 0.2, &w);
        let base = RegressionTree::from_preorder(&[Some((0, 2)), None, Some((1, 1)), None, None]).unwrap();
        let mut rng = stream(2, &[]);
        for _ in 0..50 {
            let g = propose_grow(&ctx, &base, &mut rng).unwrap();
            // Prune of the freshly grown node is the inverse move.
            let grown = g.tree;
            let nogs = grown.nogs();
            let new_leaf_parent = nogs
                .iter()
                .copied()
                .find(|&i| !base.nodes.get(i as usize).map(|n| !n.is_leaf()).unwrap_or(false))
                .unwrap();
            let avail = ctx.avail(&grown, new_leaf_parent);
            let n = &grown.nodes[new_leaf_parent as usize];
            let q_prune = cfg.p_prune / nogs.len() as f64;
            let q_grow = cfg.p_grow / growable_leaves(&ctx, &base).len() as f64
                / avail.p_adj() as f64
                / avail.n_avail(n.var as usize) as f64;
            assert!((g.log_q_ratio - (q_prune.ln() - q_grow.ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn tree_prior_of_single_split() {
        let x = line(10);
        let cuts = Cutpoints::from_matrix(&x);
        let bx = cuts.bin(&x).unwrap();
        let cfg = BartConfig::default();
        let w = vec![1.0; 10];
        let ctx = TreeContext::new(&bx, &cuts, &cfg, 0.1, &w);
        let stump = RegressionTree::stump(0.0);
        assert!((ctx.log_tree_prior(&stump) - (0.05f64).ln()).abs() < 1e-12);
        // Split at the first cut: left child has no cuts left.
        let t = RegressionTree::from_preorder(&[Some((0, 0)), None, None]).unwrap();
        let expect = 0.95f64.ln() - 9f64.ln() + 0.0 + (1.0 - 0.95 / 4.0f64).ln();
        assert!((ctx.log_tree_prior(&t) - expect).abs() < 1e-12);
    }

    #[test]
    fn every_row_maps_to_one_leaf() {
        let x = DMatrix::from_fn(40, 3, |i, j| ((i * 7 + j * 13) % 11) as f64);
        let cuts = Cutpoints::from_matrix(&x);
        let bx = cuts.bin(&x).unwrap();
        let cfg = BartConfig { n_trees: 5, ..Default::default() };
        let w = vec![1.0; 40];
        let ctx = TreeContext::new(&bx, &cuts, &cfg, 0.5, &w);
        let mut rng = stream(3, &[]);
        let mut forest = Forest::new(5, 40);
        let y: Vec<f64> = (0..40).map(|i| ((i % 5) as f64) - 2.0).collect();
        for _ in 0..200 {
            bart_sweep(&mut forest, &ctx, &y, &mut rng);
            for t in &forest.trees {
                let a = t.assign_rows(&bx);
                assert!(a.iter().all(|&k| k < t.n_leaves()));
            }
        }
        let direct = forest.predict(&bx);
        for i in 0..40 {
            assert!((direct[i] - forest.fit[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_leaf_draws_from_prior() {
        let x = line(4);
        let cuts = Cutpoints::from_matrix(&x);
        let bx = cuts.bin(&x).unwrap();
        let cfg = BartConfig::default();
        let w = vec![0.0; 4];
        let ctx = TreeContext::new(&bx, &cuts, &cfg, 0.25, &w);
        let mut rng = stream(4, &[]);
        let n = 100_000;
        let mut ss = 0.0;
        for _ in 0..n {
            let mut t = RegressionTree::stump(0.0);
            sample_leaf_params(&ctx, &mut t, &[5.0; 4], &mut rng);
            ss += t.leaf_values()[0].powi(2);
        }
        assert!((ss / n as f64 - 0.25).abs() < 0.01);
    }

    #[test]
    fn diffuse_leaf_mean_is_sample_mean() {
        let x = line(3);
        let cuts = Cutpoints::from_matrix(&x);
        let bx = cuts.bin(&x).unwrap();
        let cfg = BartConfig::default();
        let w = vec![1e8; 3];
        let ctx = TreeContext::new(&bx, &cuts, &cfg, 1e12, &w);
        let mut t = RegressionTree::stump(0.0);
        sample_leaf_params(&ctx, &mut t, &[1.0, 2.0, 6.0], &mut stream(5, &[]));
        assert!((t.leaf_values()[0] - 3.0).abs() < 1e-3);
    }

    #[test]
    fn step_function_is_learned() {
        let n = 100;
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { i as f64 / n as f64 } else { ((i * 37) % 17) as f64 });
        let y: Vec<f64> = (0..n).map(|i| if x[(i, 0)] < 0.5 { -1.0 } else { 1.0 }).collect();
        let cuts = Cutpoints::from_matrix(&x);
        let bx = cuts.bin(&x).unwrap();
        let cfg = BartConfig { n_trees: 50, ..Default::default() };
        let v = cfg.leaf_prior_var(2.0);
        let w = vec![1.0 / 0.01; n];
        let ctx = TreeContext::new(&bx, &cuts, &cfg, v, &w);
        let mut forest = Forest::new(50, n);
        let mut rng = stream(6, &[]);
        for _ in 0..500 {
            bart_sweep(&mut forest, &ctx, &y, &mut rng);
        }
        let ss: f64 = y.iter().zip(&forest.fit).map(|(a, b)| (a - b).powi(2)).sum();
        let r2 = 1.0 - ss / n as f64;
        assert!(r2 > 0.9, "r2 {r2}");
    }

    #[test]
    fn zero_target_fits_near_zero() {
        let n = 30;
        let x = DMatrix::from_fn(n, 1, |i, _| i as f64);
        let cuts = Cutpoints::from_matrix(&x);
        let bx = cuts.bin(&x).unwrap();
        let cfg = BartConfig { n_trees: 20, ..Default::default() };
        let v = cfg.leaf_prior_var(1.0);
        let w = vec![1.0; n];
        let ctx = TreeContext::new(&bx, &cuts, &cfg, v, &w);
        let mut forest = Forest::new(20, n);
        let mut rng = stream(7, &[]);
        let mut acc = 0.0;
        let sweeps = 300;
        for _ in 0..sweeps {
            let f = bart_sweep(&mut forest, &ctx, &vec![0.0; n], &mut rng);
            acc += f.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
        }
        assert!(acc / (sweeps as f64) < 3.0 * (20.0 * v).sqrt());
    }
}
