//! Regression trees and forests.
//!
//! Trees are stored as contiguous node arrays in depth-first (pre-)order
//! with the root at index 0. A node's id is its index. Leaves are numbered
//! left to right, so a forest's global leaf index is the tree's leaf offset
//! plus the local leaf index.

mod io;
mod split;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MinMaxScaler, SubsetPlan};
use crate::error::{Error, Result};
use crate::seed;

pub use io::FOREST_FORMAT_VERSION;
pub use split::{best_split, leaf_estimate, Split};

/// Which dimensions a node examines when searching for a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCandidates {
    #[default]
    AllDimensions,
    /// A fresh random subset of this many dimensions at every node.
    RandomDimensions(usize),
}

impl std::str::FromStr for SplitCandidates {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(SplitCandidates::AllDimensions),
            n => match n.parse::<usize>() {
                Ok(k) if k > 0 => Ok(SplitCandidates::RandomDimensions(k)),
                _ => Err(Error::Config(format!("split dimensions must be `all` or a positive count, got `{n}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub tree_count: usize,
    pub max_depth: usize,
    pub min_leaf_samples: usize,
    #[serde(default)]
    pub candidates: SplitCandidates,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            tree_count: 15,
            max_depth: 4,
            min_leaf_samples: 1,
            candidates: SplitCandidates::AllDimensions,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Split {
        dimension: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        estimate: f64,
        leaf_index: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub id: usize,
    pub depth: usize,
    pub parent: Option<usize>,
    pub kind: NodeKind,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf { .. })
    }

    pub fn children(&self) -> Option<(usize, usize)> {
        match self.kind {
            NodeKind::Split { left, right, .. } => Some((left, right)),
            NodeKind::Leaf { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    /// Node id of each leaf, by leaf index.
    leaves: Vec<usize>,
    max_depth: usize,
}

impl Tree {
    /// Builds a tree from preorder nodes, filling parents and leaf order.
    pub(crate) fn from_nodes(mut nodes: Vec<Node>, max_depth: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Model("tree has no nodes".into()));
        }
        for i in 0..nodes.len() {
            if nodes[i].id != i {
                return Err(Error::Model(format!("node at position {i} has id {}", nodes[i].id)));
            }
            if let Some((l, r)) = nodes[i].children() {
                for c in [l, r] {
                    if c <= i || c >= nodes.len() {
                        return Err(Error::Model(format!("node {i} has invalid child {c}")));
                    }
                    if nodes[c].parent.is_some_and(|p| p != i) {
                        return Err(Error::Model(format!("node {c} has two parents")));
                    }
                    if nodes[c].depth != nodes[i].depth + 1 {
                        return Err(Error::Model(format!("node {c} depth does not follow its parent")));
                    }
                    nodes[c].parent = Some(i);
                }
            }
        }
        if nodes[0].depth != 0 {
            return Err(Error::Model("root depth must be 0".into()));
        }
        if nodes.iter().skip(1).any(|n| n.parent.is_none()) {
            return Err(Error::Model("unreachable node".into()));
        }

        let mut leaves = Vec::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match nodes[id].kind {
                NodeKind::Split { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
                NodeKind::Leaf { leaf_index, estimate } => {
                    if leaf_index != leaves.len() {
                        return Err(Error::Model(format!(
                            "leaf {id} has index {leaf_index}, expected {}",
                            leaves.len()
                        )));
                    }
                    if !estimate.is_finite() {
                        return Err(Error::Model(format!("leaf {id} has a non-finite estimate")));
                    }
                    leaves.push(id);
                }
            }
        }
        if nodes.iter().any(|n| n.depth > max_depth) {
            return Err(Error::Model(format!("tree deeper than its max depth {max_depth}")));
        }
        Ok(Tree {
            nodes,
            leaves,
            max_depth,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Node ids of the leaves in left-to-right order.
    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn leaf_estimate(&self, leaf_index: usize) -> f64 {
        match self.nodes[self.leaves[leaf_index]].kind {
            NodeKind::Leaf { estimate, .. } => estimate,
            NodeKind::Split { .. } => unreachable!("leaf table points at a split node"),
        }
    }

    pub fn node_estimate(&self, id: usize) -> Option<f64> {
        match self.nodes[id].kind {
            NodeKind::Leaf { estimate, .. } => Some(estimate),
            NodeKind::Split { .. } => None,
        }
    }

    pub fn local_leaf_index(&self, id: usize) -> Option<usize> {
        match self.nodes[id].kind {
            NodeKind::Leaf { leaf_index, .. } => Some(leaf_index),
            NodeKind::Split { .. } => None,
        }
    }

    /// Child taken at split node `id`: left iff `x[dim] <= threshold`.
    pub fn step(&self, id: usize, x: &[f64]) -> Option<usize> {
        match self.nodes[id].kind {
            NodeKind::Split {
                dimension,
                threshold,
                left,
                right,
            } => Some(if x[dimension] <= threshold { left } else { right }),
            NodeKind::Leaf { .. } => None,
        }
    }

    /// Root-to-leaf node ids followed by `x`.
    pub fn path(&self, x: &[f64]) -> Vec<usize> {
        let mut path = vec![0];
        let mut id = 0;
        while let Some(next) = self.step(id, x) {
            path.push(next);
            id = next;
        }
        path
    }

    /// Node id of the leaf reached by `x`.
    pub fn leaf_node(&self, x: &[f64]) -> usize {
        let mut id = 0;
        while let Some(next) = self.step(id, x) {
            id = next;
        }
        id
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.node_estimate(self.leaf_node(x)).expect("traversal ends at a leaf")
    }

    /// Ancestors of `id` from the root down to and including `id`.
    pub fn ancestry(&self, id: usize) -> Vec<usize> {
        let mut chain = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        chain
    }

    pub fn lowest_common_ancestor(&self, a: usize, b: usize) -> usize {
        let pa = self.ancestry(a);
        let pb = self.ancestry(b);
        let shared = pa.iter().zip(&pb).take_while(|(x, y)| x == y).count();
        pa[shared - 1]
    }

    /// Number of edges on the tree path between two nodes.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        let lca = self.lowest_common_ancestor(a, b);
        let depth = |n: usize| self.nodes[n].depth;
        depth(a) + depth(b) - 2 * depth(lca)
    }

    /// Nodes standing at indicator level `depth`, left to right: nodes at
    /// exactly that depth plus leaves that terminate above it.
    pub fn level(&self, depth: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.depth == depth || node.is_leaf() {
                out.push(id);
                continue;
            }
            if let Some((l, r)) = node.children() {
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }

    /// Nodes grouped by depth, each group left to right.
    pub fn nodes_by_depth(&self) -> Vec<Vec<usize>> {
        let deepest = self.nodes.iter().map(|n| n.depth).max().unwrap_or(0);
        let mut by_depth = vec![Vec::new(); deepest + 1];
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            by_depth[self.nodes[id].depth].push(id);
            if let Some((l, r)) = self.nodes[id].children() {
                stack.push(r);
                stack.push(l);
            }
        }
        by_depth
    }

    pub fn internal_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter(|n| !n.is_leaf()).map(|n| n.id)
    }
}

/// A root-to-leaf path through one tree of a forest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraversalPath {
    pub tree_index: usize,
    pub node_ids: Vec<usize>,
    /// Global leaf index of the reached leaf.
    pub leaf_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    leaf_offsets: Vec<usize>,
    pub config: ForestConfig,
    /// Feature scaling the trees were trained under, when loaded from or saved to a model file.
    pub scaler: Option<MinMaxScaler>,
}

impl Forest {
    pub fn new(trees: Vec<Tree>, config: ForestConfig) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Config("a forest needs at least one tree".into()));
        }
        let mut leaf_offsets = Vec::with_capacity(trees.len());
        let mut total = 0;
        for t in &trees {
            leaf_offsets.push(total);
            total += t.leaf_count();
        }
        Ok(Forest {
            trees,
            leaf_offsets,
            config,
            scaler: None,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn tree(&self, t: usize) -> &Tree {
        &self.trees[t]
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn total_leaves(&self) -> usize {
        self.trees.iter().map(Tree::leaf_count).sum()
    }

    pub fn leaf_offset(&self, t: usize) -> usize {
        self.leaf_offsets[t]
    }

    /// Deepest indicator level over all trees.
    pub fn max_depth(&self) -> usize {
        self.trees.iter().map(Tree::max_depth).max().unwrap_or(0)
    }

    pub fn traverse(&self, t: usize, x: &[f64]) -> TraversalPath {
        let tree = &self.trees[t];
        let node_ids = tree.path(x);
        let leaf = *node_ids.last().expect("path is never empty");
        TraversalPath {
            tree_index: t,
            leaf_index: self.leaf_offsets[t] + tree.local_leaf_index(leaf).expect("path ends at a leaf"),
            node_ids,
        }
    }

    /// Reached leaf node id per tree.
    pub fn leaf_nodes(&self, x: &[f64]) -> Vec<usize> {
        self.trees.iter().map(|t| t.leaf_node(x)).collect()
    }

    /// Unweighted mean of the per-tree leaf estimates.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean of the estimates at the given per-tree leaf nodes.
    pub fn predict_from_leaves(&self, leaves: &[usize]) -> f64 {
        let sum: f64 = self
            .trees
            .iter()
            .zip(leaves)
            .map(|(t, &id)| t.node_estimate(id).expect("leaf node"))
            .sum();
        sum / self.trees.len() as f64
    }

    /// Forest made of the trees at `keep` (in the given order).
    pub fn subset(&self, keep: &[usize]) -> Result<Forest> {
        let trees = keep.iter().map(|&t| self.trees[t].clone()).collect();
        let mut config = self.config.clone();
        config.tree_count = keep.len();
        let mut f = Forest::new(trees, config)?;
        f.scaler = self.scaler.clone();
        Ok(f)
    }
}

/// Grows one tree on `indices` (repeats allowed) of `data`.
pub fn train_tree(data: &Dataset, indices: &[usize], config: &ForestConfig, seed: u64) -> Result<Tree> {
    if indices.is_empty() {
        return Err(Error::Data("cannot train a tree on an empty subset".into()));
    }
    let mut builder = Builder {
        data,
        config,
        seed,
        nodes: Vec::new(),
        leaves: 0,
    };
    builder.grow(indices.to_vec(), 0)?;
    Tree::from_nodes(builder.nodes, config.max_depth)
}

struct Builder<'a> {
    data: &'a Dataset,
    config: &'a ForestConfig,
    seed: u64,
    nodes: Vec<Node>,
    leaves: usize,
}

impl Builder<'_> {
    fn dimensions(&self, node_id: usize) -> Vec<usize> {
        let dim = self.data.dim();
        match self.config.candidates {
            SplitCandidates::RandomDimensions(k) if k > 0 && k < dim => {
                let mut rng = seed::rng(self.seed, &[node_id as u64]);
                let mut dims = index::sample(&mut rng, dim, k).into_vec();
                dims.sort_unstable();
                dims
            }
            _ => (0..dim).collect(),
        }
    }

    fn grow(&mut self, indices: Vec<usize>, depth: usize) -> Result<usize> {
        let id = self.nodes.len();
        let min_leaf = self.config.min_leaf_samples.max(1);
        let split = if depth >= self.config.max_depth || indices.len() < 2 * min_leaf {
            None
        } else {
            let dims = self.dimensions(id);
            best_split(|i| self.data.row(i), self.data.targets(), &indices, &dims, min_leaf)
        };

        let Some(split) = split else {
            let estimate = leaf_estimate(indices.iter().map(|&i| self.data.target(i)))?;
            self.nodes.push(Node {
                id,
                depth,
                parent: None,
                kind: NodeKind::Leaf {
                    estimate,
                    leaf_index: self.leaves,
                },
            });
            self.leaves += 1;
            return Ok(id);
        };

        self.nodes.push(Node {
            id,
            depth,
            parent: None,
            kind: NodeKind::Split {
                dimension: split.dimension,
                threshold: split.threshold,
                left: 0,
                right: 0,
            },
        });
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .into_iter()
            .partition(|&i| self.data.row(i)[split.dimension] <= split.threshold);
        let left = self.grow(left_idx, depth + 1)?;
        let right = self.grow(right_idx, depth + 1)?;
        if let NodeKind::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id].kind
        {
            *l = left;
            *r = right;
        }
        Ok(id)
    }
}

/// One tree per subset, trained in parallel. Tree `t` uses a seed derived
/// from `config.seed` and `t`, so the result does not depend on scheduling.
pub fn train_forest(data: &Dataset, plan: &SubsetPlan, config: &ForestConfig) -> Result<Forest> {
    if plan.tree_count() == 0 {
        return Err(Error::Config("subset plan is empty".into()));
    }
    let trees = plan
        .subsets
        .par_iter()
        .enumerate()
        .map(|(t, subset)| train_tree(data, subset, config, seed::derive(config.seed, &[t as u64])))
        .collect::<Result<Vec<_>>>()?;
    let mut config = config.clone();
    config.tree_count = trees.len();
    Forest::new(trees, config)
}
