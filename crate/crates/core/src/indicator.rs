//! Indicator vectors over the nodes of a forest at a given depth.
//!
//! Level `k` of a tree holds its nodes at depth `k` plus any leaves that end
//! above `k`, left to right, so every sample reaches exactly one node per
//! tree at every level. The forest vector concatenates the tree segments in
//! tree order.
//!
//! The distance form sets the reached node to 1 and every other node `n` of
//! the same segment to `2 / d(n, reached)`, with `d` the number of tree edges
//! between them. Siblings (`d = 2`) therefore also read 1; the reached
//! position is stored alongside the values.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::forest::{Forest, Tree};

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorVector {
    pub depth: usize,
    pub values: Vec<f64>,
    pub tree_offsets: Vec<usize>,
    /// Per tree, the position (within its segment) of the reached node.
    pub arrived: Vec<usize>,
}

impl IndicatorVector {
    pub fn segment(&self, t: usize) -> &[f64] {
        &self.values[segment_range(&self.tree_offsets, self.values.len(), t)]
    }
}

fn segment_range(offsets: &[usize], len: usize, t: usize) -> Range<usize> {
    let end = offsets.get(t + 1).copied().unwrap_or(len);
    offsets[t]..end
}

/// Precomputed node ordering and distance tables for one forest level.
#[derive(Debug, Clone)]
pub struct IndicatorLayout {
    depth: usize,
    offsets: Vec<usize>,
    levels: Vec<Vec<usize>>,
    /// Per tree, node id -> position within the segment.
    positions: Vec<Vec<Option<usize>>>,
    /// Per tree, row-major `k x k` table of distance-form values.
    weights: Vec<Vec<f64>>,
    len: usize,
}

impl IndicatorLayout {
    pub fn new(forest: &Forest, depth: usize) -> Self {
        let mut offsets = Vec::with_capacity(forest.len());
        let mut levels = Vec::with_capacity(forest.len());
        let mut positions = Vec::with_capacity(forest.len());
        let mut weights = Vec::with_capacity(forest.len());
        let mut len = 0;
        for tree in forest.trees() {
            let level = tree.level(depth);
            let mut pos = vec![None; tree.nodes().len()];
            for (i, &id) in level.iter().enumerate() {
                pos[id] = Some(i);
            }
            let k = level.len();
            let mut table = vec![0.0; k * k];
            for a in 0..k {
                for b in 0..k {
                    table[a * k + b] = if a == b {
                        1.0
                    } else {
                        2.0 / tree.distance(level[a], level[b]) as f64
                    };
                }
            }
            offsets.push(len);
            len += k;
            levels.push(level);
            positions.push(pos);
            weights.push(table);
        }
        IndicatorLayout {
            depth,
            offsets,
            levels,
            positions,
            weights,
            len,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn tree_count(&self) -> usize {
        self.levels.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn segment(&self, t: usize) -> Range<usize> {
        segment_range(&self.offsets, self.len, t)
    }

    /// Node ids of tree `t` at this level.
    pub fn level(&self, t: usize) -> &[usize] {
        &self.levels[t]
    }

    pub fn node_at(&self, t: usize, position: usize) -> usize {
        self.levels[t][position]
    }

    pub fn position_of(&self, t: usize, node: usize) -> Option<usize> {
        self.positions[t].get(node).copied().flatten()
    }

    /// Node of this level on a root-to-leaf path.
    pub fn node_on_path(&self, path: &[usize]) -> usize {
        path[self.depth.min(path.len() - 1)]
    }

    /// Position of the reached node per tree for sample `x`.
    pub fn arrived(&self, forest: &Forest, x: &[f64]) -> Vec<usize> {
        forest
            .trees()
            .iter()
            .enumerate()
            .map(|(t, tree)| self.arrived_in(t, tree, x))
            .collect()
    }

    fn arrived_in(&self, t: usize, tree: &Tree, x: &[f64]) -> usize {
        let mut id = 0;
        while tree.node(id).depth < self.depth {
            match tree.step(id, x) {
                Some(next) => id = next,
                None => break,
            }
        }
        self.positions[t][id].expect("reached node belongs to the level")
    }

    /// Per-tree positions of the given per-tree leaf (or any level) nodes,
    /// mapped up to this level.
    pub fn positions_for_nodes(&self, forest: &Forest, nodes: &[usize]) -> Vec<usize> {
        nodes
            .iter()
            .enumerate()
            .map(|(t, &n)| {
                let chain = forest.tree(t).ancestry(n);
                let id = self.node_on_path(&chain);
                self.positions[t][id].expect("node belongs to the level")
            })
            .collect()
    }

    pub fn write_binary(&self, arrived: &[usize], out: &mut [f64]) {
        out.fill(0.0);
        for (t, &p) in arrived.iter().enumerate() {
            out[self.offsets[t] + p] = 1.0;
        }
    }

    pub fn write_distance(&self, arrived: &[usize], out: &mut [f64]) {
        for (t, &p) in arrived.iter().enumerate() {
            let k = self.levels[t].len();
            let row = &self.weights[t][p * k..(p + 1) * k];
            out[self.offsets[t]..self.offsets[t] + k].copy_from_slice(row);
        }
    }

    pub fn binary(&self, forest: &Forest, x: &[f64]) -> IndicatorVector {
        let arrived = self.arrived(forest, x);
        let mut values = vec![0.0; self.len];
        self.write_binary(&arrived, &mut values);
        self.vector(values, arrived)
    }

    pub fn distance(&self, forest: &Forest, x: &[f64]) -> IndicatorVector {
        let arrived = self.arrived(forest, x);
        let mut values = vec![0.0; self.len];
        self.write_distance(&arrived, &mut values);
        self.vector(values, arrived)
    }

    fn vector(&self, values: Vec<f64>, arrived: Vec<usize>) -> IndicatorVector {
        IndicatorVector {
            depth: self.depth,
            values,
            tree_offsets: self.offsets.clone(),
            arrived,
        }
    }

    /// Per-tree argmax positions of `values` (ties to the lowest index).
    pub fn argmax(&self, values: &[f64]) -> Vec<usize> {
        (0..self.tree_count()).map(|t| argmax(&values[self.segment(t)])).collect()
    }
}

fn argmax(seg: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in seg.iter().enumerate().skip(1) {
        if v > seg[best] {
            best = i;
        }
    }
    best
}

fn check_depth(forest: &Forest, depth: usize) -> Result<()> {
    if depth > forest.max_depth() {
        return Err(Error::Config(format!(
            "indicator depth {depth} exceeds forest depth {}",
            forest.max_depth()
        )));
    }
    Ok(())
}

pub fn binary_indicator(forest: &Forest, x: &[f64], depth: usize) -> Result<IndicatorVector> {
    check_depth(forest, depth)?;
    Ok(IndicatorLayout::new(forest, depth).binary(forest, x))
}

pub fn distance_indicator(forest: &Forest, x: &[f64], depth: usize) -> Result<IndicatorVector> {
    check_depth(forest, depth)?;
    Ok(IndicatorLayout::new(forest, depth).distance(forest, x))
}

/// Edges between two nodes of the same tree.
pub fn node_distance(tree: &Tree, a: usize, b: usize) -> Result<usize> {
    let n = tree.nodes().len();
    if a >= n || b >= n {
        return Err(Error::Shape(format!("node ids {a}, {b} not both in a tree of {n} nodes")));
    }
    Ok(tree.distance(a, b))
}

/// One-hot per tree segment at the segment maximum, lowest index on ties.
pub fn binarize(values: &[f64], tree_offsets: &[usize]) -> Result<IndicatorVector> {
    let mut out = vec![0.0; values.len()];
    let mut arrived = Vec::with_capacity(tree_offsets.len());
    for t in 0..tree_offsets.len() {
        let range = segment_range(tree_offsets, values.len(), t);
        if range.is_empty() {
            return Err(Error::Shape(format!("tree segment {t} is empty")));
        }
        let p = argmax(&values[range.clone()]);
        out[range.start + p] = 1.0;
        arrived.push(p);
    }
    Ok(IndicatorVector {
        depth: 0,
        values: out,
        tree_offsets: tree_offsets.to_vec(),
        arrived,
    })
}
