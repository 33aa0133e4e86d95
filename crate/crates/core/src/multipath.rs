//! Multi-path estimation: branch both ways at flagged decisions and weight
//! each resulting path by `2^-k`, `k` being the flagged nodes it passes.

use crate::error::{Error, Result};
use crate::forest::{Forest, Tree};
use crate::recovery::FlagReport;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPath {
    pub tree_index: usize,
    pub node_ids: Vec<usize>,
    /// Leaf index within the tree.
    pub leaf_index: usize,
    pub flagged_count: usize,
    pub weight: f64,
}

/// Per tree, the generated paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub per_tree: Vec<Vec<WeightedPath>>,
}

impl PathSet {
    pub fn enumerate(forest: &Forest, x: &[f64], flags: &[Vec<usize>]) -> Result<Self> {
        if flags.len() != forest.len() {
            return Err(Error::Shape(format!(
                "{} flag sets for a forest of {} trees",
                flags.len(),
                forest.len()
            )));
        }
        let per_tree = forest
            .trees()
            .iter()
            .zip(flags)
            .enumerate()
            .map(|(t, (tree, f))| enumerate_paths(tree, t, x, f))
            .collect::<Result<_>>()?;
        Ok(PathSet { per_tree })
    }

    /// `sum_t sum_p w_p * estimate(leaf_p) / T`.
    pub fn predict(&self, forest: &Forest) -> f64 {
        let total: f64 = self
            .per_tree
            .iter()
            .zip(forest.trees())
            .map(|(paths, tree)| paths.iter().map(|p| p.weight * tree.leaf_estimate(p.leaf_index)).sum::<f64>())
            .sum();
        total / forest.len() as f64
    }
}

/// Depth-first path generation, left branch first.
pub fn enumerate_paths(tree: &Tree, tree_index: usize, x: &[f64], flags: &[usize]) -> Result<Vec<WeightedPath>> {
    for &f in flags {
        if f >= tree.nodes().len() || tree.node(f).is_leaf() {
            return Err(Error::Model(format!("flagged node {f} is not a decision node of tree {tree_index}")));
        }
    }
    let mut out = Vec::new();
    let mut stack = vec![(vec![0usize], 0usize)];
    while let Some((path, k)) = stack.pop() {
        let id = *path.last().expect("non-empty");
        let node = tree.node(id);
        match node.children() {
            None => {
                out.push(WeightedPath {
                    tree_index,
                    leaf_index: tree.local_leaf_index(id).expect("leaf"),
                    node_ids: path,
                    flagged_count: k,
                    weight: (-(k as f64)).exp2(),
                });
            }
            Some((left, right)) if flags.contains(&id) => {
                let mut r = path.clone();
                r.push(right);
                let mut l = path;
                l.push(left);
                stack.push((r, k + 1));
                stack.push((l, k + 1));
            }
            Some(_) => {
                let next = tree.step(id, x).expect("internal node");
                let mut p = path;
                p.push(next);
                stack.push((p, k));
            }
        }
    }
    Ok(out)
}

pub fn multipath_predict(forest: &Forest, x: &[f64], report: &FlagReport) -> Result<f64> {
    Ok(PathSet::enumerate(forest, x, &report.per_tree_flags)?.predict(forest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_subsets, Dataset};
    use crate::forest::{train_forest, ForestConfig, Node, NodeKind};
    use crate::recovery::wrong_decisions;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn split(id: usize, depth: usize, dimension: usize, left: usize, right: usize) -> Node {
        Node {
            id,
            depth,
            parent: None,
            kind: NodeKind::Split {
                dimension,
                threshold: 0.5,
                left,
                right,
            },
        }
    }

    fn leaf(id: usize, depth: usize, leaf_index: usize, estimate: f64) -> Node {
        Node {
            id,
            depth,
            parent: None,
            kind: NodeKind::Leaf { estimate, leaf_index },
        }
    }

    fn depth2() -> Tree {
        Tree::from_nodes(
            vec![
                split(0, 0, 0, 1, 4),
                split(1, 1, 1, 2, 3),
                leaf(2, 2, 0, 1.0),
                leaf(3, 2, 1, 2.0),
                split(4, 1, 1, 5, 6),
                leaf(5, 2, 2, 3.0),
                leaf(6, 2, 3, 4.0),
            ],
            2,
        )
        .unwrap()
    }

    fn stump(lo: f64, hi: f64) -> Tree {
        Tree::from_nodes(vec![split(0, 0, 0, 1, 2), leaf(1, 1, 0, lo), leaf(2, 1, 1, hi)], 1).unwrap()
    }

    #[test]
    fn enumeration_examples() {
        let tree = depth2();
        let x = [0.2, 0.2];
        let none = enumerate_paths(&tree, 0, &x, &[]).unwrap();
        assert_eq!(none.len(), 1);
        assert_eq!((none[0].node_ids.clone(), none[0].weight), (tree.path(&x), 1.0));

        let root = enumerate_paths(&tree, 0, &x, &[0]).unwrap();
        assert_eq!(root.iter().map(|p| p.weight).collect::<Vec<_>>(), vec![0.5, 0.5]);
        assert_eq!(root.iter().map(|p| p.leaf_index).collect::<Vec<_>>(), vec![0, 2]);

        let both = enumerate_paths(&tree, 0, &x, &[0, 1]).unwrap();
        let mut w: Vec<f64> = both.iter().map(|p| p.weight).collect();
        w.sort_by(f64::total_cmp);
        assert_eq!(w, vec![0.25, 0.25, 0.5]);
        assert!(enumerate_paths(&tree, 0, &x, &[2]).is_err());
        assert!(enumerate_paths(&tree, 0, &x, &[99]).is_err());
    }

    #[test]
    fn prediction_examples() {
        let one = Forest::new(vec![stump(2.0, 4.0)], ForestConfig::default()).unwrap();
        let flagged = FlagReport {
            per_tree_flags: vec![vec![0]],
            refined_leaves: vec![1],
            original_leaves: vec![1],
        };
        assert_eq!(multipath_predict(&one, &[0.0], &flagged).unwrap(), 3.0);

        let two = Forest::new(vec![stump(1.0, 1.0), stump(2.0, 4.0)], ForestConfig::default()).unwrap();
        let flagged = FlagReport {
            per_tree_flags: vec![vec![], vec![0]],
            refined_leaves: vec![1, 1],
            original_leaves: vec![1, 1],
        };
        assert_eq!(multipath_predict(&two, &[0.0], &flagged).unwrap(), 2.0);
    }

    /// Every depth-<=`depth` tree shape over a single feature, leaves numbered left to right.
    fn all_shapes(depth: usize) -> Vec<Tree> {
        fn grow(depth: usize, max: usize) -> Vec<Vec<(usize, bool)>> {
            // preorder (depth, is_leaf) sequences
            let mut out = vec![vec![(depth, true)]];
            if depth < max {
                let subs = grow(depth + 1, max);
                for l in &subs {
                    for r in &subs {
                        let mut s = vec![(depth, false)];
                        s.extend(l);
                        s.extend(r);
                        out.push(s);
                    }
                }
            }
            out
        }
        fn build(seq: &[(usize, bool)]) -> Vec<Node> {
            let mut nodes = Vec::new();
            let mut leaves = 0;
            fn rec(seq: &[(usize, bool)], pos: &mut usize, nodes: &mut Vec<Node>, leaves: &mut usize) -> usize {
                let id = nodes.len();
                let (depth, is_leaf) = seq[*pos];
                *pos += 1;
                if is_leaf {
                    nodes.push(leaf(id, depth, *leaves, *leaves as f64));
                    *leaves += 1;
                } else {
                    nodes.push(split(id, depth, depth % 2, 0, 0));
                    let l = rec(seq, pos, nodes, leaves);
                    let r = rec(seq, pos, nodes, leaves);
                    if let NodeKind::Split { left, right, .. } = &mut nodes[id].kind {
                        *left = l;
                        *right = r;
                    }
                }
                id
            }
            rec(seq, &mut 0, &mut nodes, &mut leaves);
            nodes
        }
        grow(0, depth)
            .iter()
            .map(|s| {
                let nodes = build(s);
                let d = nodes.iter().map(|n| n.depth).max().unwrap();
                Tree::from_nodes(nodes, d).unwrap()
            })
            .collect()
    }

    #[test]
    fn weights_sum_to_one_for_every_flag_subset() {
        let mut checked = 0usize;
        for depth in 0..=3 {
            for tree in all_shapes(depth) {
                let internal: Vec<usize> = tree.internal_nodes().collect();
                for mask in 0u32..(1 << internal.len()) {
                    let flags: Vec<usize> =
                        internal.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &n)| n).collect();
                    for x in [[0.2, 0.2], [0.8, 0.2], [0.2, 0.8], [0.8, 0.8]] {
                        let paths = enumerate_paths(&tree, 0, &x, &flags).unwrap();
                        let total: f64 = paths.iter().map(|p| p.weight).sum();
                        assert_eq!(total, 1.0);
                        let mut leaves: Vec<usize> = paths.iter().map(|p| p.leaf_index).collect();
                        leaves.dedup();
                        assert_eq!(leaves.len(), paths.len(), "paths are distinct");
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn depth_four_full_tree_all_subsets() {
        // full binary tree of depth 4: 15 internal nodes, 32768 flag subsets
        let mut nodes = Vec::new();
        fn full(nodes: &mut Vec<Node>, depth: usize, leaves: &mut usize) -> usize {
            let id = nodes.len();
            if depth == 4 {
                nodes.push(leaf(id, depth, *leaves, 0.0));
                *leaves += 1;
                return id;
            }
            nodes.push(split(id, depth, depth % 2, 0, 0));
            let l = full(nodes, depth + 1, leaves);
            let r = full(nodes, depth + 1, leaves);
            nodes[id].kind = NodeKind::Split {
                dimension: depth % 2,
                threshold: 0.5,
                left: l,
                right: r,
            };
            id
        }
        full(&mut nodes, 0, &mut 0);
        let tree = Tree::from_nodes(nodes, 4).unwrap();
        let internal: Vec<usize> = tree.internal_nodes().collect();
        assert_eq!(internal.len(), 15);
        let x = [0.3, 0.7];
        for mask in 0u32..(1 << 15) {
            let flags: Vec<usize> =
                internal.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &n)| n).collect();
            let total: f64 = enumerate_paths(&tree, 0, &x, &flags).unwrap().iter().map(|p| p.weight).sum();
            assert_eq!(total, 1.0);
        }
    }

    fn trained() -> (Forest, Dataset) {
        let mut rng = seed::rng(13, &[]);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..4).map(|_| rng.gen()).collect()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| 10.0 * r[0] - 4.0 * r[1] * r[2] + r[3]).collect();
        let data = Dataset::new("mp", rows, ys).unwrap();
        let plan = make_subsets(&data, 6, 0.5, 200, 3).unwrap();
        let cfg = ForestConfig {
            tree_count: 6,
            max_depth: 4,
            seed: 3,
            ..ForestConfig::default()
        };
        (train_forest(&data, &plan, &cfg).unwrap(), data)
    }

    #[test]
    fn empty_flags_match_plain_prediction_bit_exactly() {
        let (forest, _) = trained();
        let mut rng = seed::rng(14, &[]);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.2..1.2)).collect();
            let r = FlagReport::unflagged(&forest, &x);
            assert_eq!(multipath_predict(&forest, &x, &r).unwrap().to_bits(), forest.predict(&x).to_bits());
        }
    }

    #[test]
    fn true_wrong_decisions_enumerate_the_clean_leaf() {
        let (forest, data) = trained();
        let mut rng = seed::rng(15, &[]);
        for x in data.rows() {
            let noisy: Vec<f64> = x.iter().map(|v| if rng.gen_bool(0.4) { 0.5 } else { *v }).collect();
            let flags = wrong_decisions(&forest, x, &noisy);
            let set = PathSet::enumerate(&forest, &noisy, &flags).unwrap();
            for (t, paths) in set.per_tree.iter().enumerate() {
                let tree = forest.tree(t);
                let clean_leaf = tree.local_leaf_index(tree.leaf_node(x)).unwrap();
                assert!(paths.iter().any(|p| p.leaf_index == clean_leaf));
            }
        }
    }

    proptest! {
        #[test]
        fn prediction_is_a_convex_combination(x0 in 0.0f64..1.0, x1 in 0.0f64..1.0, x2 in 0.0f64..1.0, x3 in 0.0f64..1.0, mask in 0u32..u32::MAX) {
            let (forest, _) = FOREST.with(|f| f.clone());
            let x = [x0, x1, x2, x3];
            let flags: Vec<Vec<usize>> = forest
                .trees()
                .iter()
                .enumerate()
                .map(|(t, tree)| tree.internal_nodes().filter(|n| (mask.rotate_left(t as u32) >> (n % 32)) & 1 == 1).collect())
                .collect();
            let set = PathSet::enumerate(&forest, &x, &flags).unwrap();
            for (t, paths) in set.per_tree.iter().enumerate() {
                let tree = forest.tree(t);
                let est: Vec<f64> = paths.iter().map(|p| tree.leaf_estimate(p.leaf_index)).collect();
                let v: f64 = paths.iter().zip(&est).map(|(p, e)| p.weight * e).sum();
                let lo = est.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = est.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
                // adding a flag on an existing path never shrinks the set
                let extra = paths[0].node_ids.iter().copied().find(|n| !tree.node(*n).is_leaf() && !flags[t].contains(n));
                if let Some(n) = extra {
                    let mut more = flags[t].clone();
                    more.push(n);
                    prop_assert!(enumerate_paths(tree, t, &x, &more).unwrap().len() >= paths.len());
                }
            }
        }
    }

    thread_local! {
        static FOREST: (Forest, Dataset) = trained();
    }
}
