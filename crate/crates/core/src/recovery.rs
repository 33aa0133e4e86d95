//! Flagging suspected wrong decisions by comparing each tree's traversal
//! with the path the autoencoders reconstruct.

use std::io::Write;

use rayon::prelude::*;

use crate::dae::DaeStack;
use crate::error::{Error, Result};
use crate::forest::{Forest, Tree};
use crate::indicator::IndicatorLayout;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlagReport {
    /// Per tree, sorted internal node ids suspected of a wrong decision.
    pub per_tree_flags: Vec<Vec<usize>>,
    /// Per tree, leaf node id chosen from the leaf-level reconstruction.
    pub refined_leaves: Vec<usize>,
    /// Per tree, leaf node id reached by ordinary traversal.
    pub original_leaves: Vec<usize>,
}

impl FlagReport {
    /// Report with no flags where refined and original leaves coincide.
    pub fn unflagged(forest: &Forest, x: &[f64]) -> Self {
        let leaves = forest.leaf_nodes(x);
        FlagReport {
            per_tree_flags: vec![Vec::new(); forest.len()],
            refined_leaves: leaves.clone(),
            original_leaves: leaves,
        }
    }

    pub fn flag_count(&self) -> usize {
        self.per_tree_flags.iter().map(Vec::len).sum()
    }
}

/// Reusable recovery context: the level layouts of a forest matched to an
/// autoencoder stack.
pub struct Recoverer<'a> {
    forest: &'a Forest,
    stack: &'a DaeStack,
    /// `(depth, layout)` for each level used, shallowest first.
    layouts: Vec<IndicatorLayout>,
    per_depth: bool,
}

impl<'a> Recoverer<'a> {
    pub fn new(forest: &'a Forest, stack: &'a DaeStack) -> Result<Self> {
        let leaf_depth = forest.max_depth();
        if stack.deepest().depth != leaf_depth {
            return Err(Error::Shape(format!(
                "autoencoder stack reaches depth {}, forest leaves sit at depth {leaf_depth}",
                stack.deepest().depth
            )));
        }
        let per_depth = leaf_depth > 1 && stack.is_per_depth();
        let depths: Vec<usize> = if per_depth {
            (1..=leaf_depth).collect()
        } else {
            vec![leaf_depth]
        };
        let layouts: Vec<IndicatorLayout> = depths.iter().map(|&d| IndicatorLayout::new(forest, d)).collect();
        for layout in &layouts {
            let dae = stack.get(layout.depth()).expect("depth present");
            if dae.input_size() != layout.len() {
                return Err(Error::Shape(format!(
                    "depth-{} autoencoder expects {} inputs, forest level has {} nodes",
                    layout.depth(),
                    dae.input_size(),
                    layout.len()
                )));
            }
        }
        Ok(Recoverer {
            forest,
            stack,
            layouts,
            per_depth,
        })
    }

    pub fn is_per_depth(&self) -> bool {
        self.per_depth
    }

    /// Flags for `x` together with the raw leaf-level reconstruction.
    pub fn recover_with_scores(&self, x: &[f64]) -> Result<(FlagReport, Vec<f64>)> {
        let forest = self.forest;
        let paths: Vec<Vec<usize>> = forest.trees().iter().map(|t| t.path(x)).collect();
        let original_leaves: Vec<usize> = paths.iter().map(|p| *p.last().expect("non-empty")).collect();

        // refined[level][tree] = node id chosen at that level
        let mut refined = Vec::with_capacity(self.layouts.len());
        let mut scores = Vec::new();
        for layout in &self.layouts {
            let z = layout.distance(forest, x);
            let out = self.stack.get(layout.depth()).expect("depth present").forward(&z.values)?;
            let chosen: Vec<usize> = layout
                .argmax(&out)
                .into_iter()
                .enumerate()
                .map(|(t, p)| layout.node_at(t, p))
                .collect();
            refined.push(chosen);
            scores = out;
        }
        let refined_leaves = refined.last().expect("at least one level").clone();

        let per_tree_flags = (0..forest.len())
            .map(|t| {
                let tree = forest.tree(t);
                if self.per_depth {
                    let levels: Vec<usize> = refined.iter().map(|r| r[t]).collect();
                    onset_flags(tree, &paths[t], &levels)
                } else if refined_leaves[t] != original_leaves[t] {
                    vec![tree.lowest_common_ancestor(original_leaves[t], refined_leaves[t])]
                } else {
                    Vec::new()
                }
            })
            .collect();
        Ok((
            FlagReport {
                per_tree_flags,
                refined_leaves,
                original_leaves,
            },
            scores,
        ))
    }

    pub fn recover(&self, x: &[f64]) -> Result<FlagReport> {
        self.recover_with_scores(x).map(|(r, _)| r)
    }

    pub fn recover_many<'r>(&self, rows: impl IntoParallelIterator<Item = &'r [f64]>) -> Result<Vec<FlagReport>> {
        rows.into_par_iter().map(|x| self.recover(x)).collect()
    }
}

/// Per-level onset rule. `levels[k - 1]` is the refined node at level `k`.
fn onset_flags(tree: &Tree, path: &[usize], levels: &[usize]) -> Vec<usize> {
    let at = |k: usize| path[k.min(path.len() - 1)];
    let mut flags = Vec::new();
    for k in (1..=levels.len()).rev() {
        let original = at(k);
        if levels[k - 1] == original {
            continue;
        }
        let shallower_agrees = k == 1 || levels[k - 2] == at(k - 1);
        if !shallower_agrees {
            continue;
        }
        let above = at(k - 1);
        if tree.node(above).is_leaf() {
            // path ended above this level; attribute to where the two nodes part
            flags.push(tree.lowest_common_ancestor(original, levels[k - 1]));
        } else {
            flags.push(above);
        }
    }
    flags.sort_unstable();
    flags.dedup();
    flags
}

/// One-shot recovery; builds the level layouts on every call.
pub fn recover(forest: &Forest, stack: &DaeStack, x: &[f64]) -> Result<FlagReport> {
    Recoverer::new(forest, stack)?.recover(x)
}

/// Per tree, the node where the clean and noisy traversals part, if they do.
pub fn divergence_onsets(forest: &Forest, clean: &[f64], noisy: &[f64]) -> Vec<Vec<usize>> {
    forest
        .trees()
        .iter()
        .map(|tree| {
            let (a, b) = (tree.leaf_node(clean), tree.leaf_node(noisy));
            if a == b {
                Vec::new()
            } else {
                vec![tree.lowest_common_ancestor(a, b)]
            }
        })
        .collect()
}

/// Per tree, every node on the clean path where the noisy sample would
/// take the other branch.
pub fn wrong_decisions(forest: &Forest, clean: &[f64], noisy: &[f64]) -> Vec<Vec<usize>> {
    forest
        .trees()
        .iter()
        .map(|tree| {
            let path = tree.path(clean);
            let mut flags: Vec<usize> = path
                .iter()
                .filter(|&&id| !tree.node(id).is_leaf() && tree.step(id, clean) != tree.step(id, noisy))
                .copied()
                .collect();
            flags.sort_unstable();
            flags
        })
        .collect()
}

/// `(|flags ∩ truth|, |truth|, |flags|)` over `(tree, node)` pairs.
pub fn detection_counts(flags: &[Vec<usize>], truth: &[Vec<usize>]) -> (usize, usize, usize) {
    let mut hits = 0;
    for (f, t) in flags.iter().zip(truth) {
        hits += t.iter().filter(|n| f.contains(n)).count();
    }
    let total = |s: &[Vec<usize>]| s.iter().map(Vec::len).sum::<usize>();
    (hits, total(truth), total(flags))
}

fn rate(hits: usize, truth: usize, flagged: usize) -> f64 {
    if truth == 0 {
        if flagged == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        hits as f64 / truth as f64
    }
}

/// Share of ground-truth flags that were raised.
pub fn detection_rate(report: &FlagReport, truth: &[Vec<usize>]) -> f64 {
    let (h, t, f) = detection_counts(&report.per_tree_flags, truth);
    rate(h, t, f)
}

/// Detection rate pooled over many samples: total hits over total truth.
pub fn pooled_detection_rate<'a>(pairs: impl IntoIterator<Item = (&'a [Vec<usize>], &'a [Vec<usize>])>) -> f64 {
    let (mut h, mut t, mut f) = (0, 0, 0);
    for (flags, truth) in pairs {
        let c = detection_counts(flags, truth);
        h += c.0;
        t += c.1;
        f += c.2;
    }
    rate(h, t, f)
}

/// Writes `sample_index,tree_index,flags` rows, node ids joined by `;`.
pub fn write_flags<W: Write>(mut out: W, reports: &[(usize, &FlagReport)]) -> std::io::Result<()> {
    writeln!(out, "sample_index,tree_index,flags")?;
    for (sample, report) in reports {
        for (t, flags) in report.per_tree_flags.iter().enumerate() {
            let joined: Vec<String> = flags.iter().map(usize::to_string).collect();
            writeln!(out, "{sample},{t},{}", joined.join(";"))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dae::{DenoisingAutoencoder, TrainConfig};
    use crate::data::{make_subsets, Dataset};
    use crate::forest::{train_forest, ForestConfig, Node, NodeKind};
    use crate::seed;
    use rand::Rng;

    /// Full depth-2 tree splitting on x0 at 0.5, then x1 at 0.5.
    fn full_depth2() -> Tree {
        let split = |id, depth, dimension, left, right| Node {
            id,
            depth,
            parent: None,
            kind: NodeKind::Split {
                dimension,
                threshold: 0.5,
                left,
                right,
            },
        };
        let leaf = |id, leaf_index| Node {
            id,
            depth: 2,
            parent: None,
            kind: NodeKind::Leaf {
                estimate: leaf_index as f64,
                leaf_index,
            },
        };
        Tree::from_nodes(
            vec![split(0, 0, 0, 1, 4), split(1, 1, 1, 2, 3), leaf(2, 0), leaf(3, 1), split(4, 1, 1, 5, 6), leaf(5, 2), leaf(6, 3)],
            2,
        )
        .unwrap()
    }

    /// Reference LCA by walking the deeper node up until both meet.
    fn lca_oracle(tree: &Tree, mut a: usize, mut b: usize) -> usize {
        while a != b {
            if tree.node(a).depth >= tree.node(b).depth {
                a = tree.node(a).parent.unwrap();
            } else {
                b = tree.node(b).parent.unwrap();
            }
        }
        a
    }

    #[test]
    fn leaf_divergence_examples() {
        let tree = full_depth2();
        assert_eq!(tree.lowest_common_ancestor(2, 6), 0);
        assert_eq!(tree.lowest_common_ancestor(2, 3), 1);
        for a in 0..7 {
            for b in 0..7 {
                assert_eq!(tree.lowest_common_ancestor(a, b), lca_oracle(&tree, a, b));
            }
        }
    }

    #[test]
    fn onset_rule() {
        let tree = full_depth2();
        let path = vec![0, 1, 2];
        // full agreement
        assert!(onset_flags(&tree, &path, &[1, 2]).is_empty());
        // diverges at depth 1: root decision
        assert_eq!(onset_flags(&tree, &path, &[4, 6]), vec![0]);
        // agrees at depth 1, differs at depth 2
        assert_eq!(onset_flags(&tree, &path, &[1, 3]), vec![1]);
        // deep disagreement without shallower agreement adds nothing
        assert_eq!(onset_flags(&tree, &path, &[4, 3]), vec![0]);
        // depth-1 disagreement only
        assert_eq!(onset_flags(&tree, &path, &[4, 2]), vec![0]);
    }

    #[test]
    fn ground_truth_helpers() {
        let tree = full_depth2();
        let forest = Forest::new(vec![tree], ForestConfig::default()).unwrap();
        let clean = [0.2, 0.2];
        assert_eq!(divergence_onsets(&forest, &clean, &clean), vec![Vec::<usize>::new()]);
        assert_eq!(divergence_onsets(&forest, &clean, &[0.9, 0.9]), vec![vec![0]]);
        assert_eq!(wrong_decisions(&forest, &clean, &[0.9, 0.9]), vec![vec![0, 1]]);
        assert_eq!(wrong_decisions(&forest, &clean, &[0.2, 0.9]), vec![vec![1]]);
        assert_eq!(wrong_decisions(&forest, &clean, &[0.9, 0.2]), vec![vec![0]]);
    }

    #[test]
    fn detection_rate_conventions() {
        let leaves = vec![2];
        let report = |flags: Vec<usize>| FlagReport {
            per_tree_flags: vec![flags],
            refined_leaves: leaves.clone(),
            original_leaves: leaves.clone(),
        };
        assert_eq!(detection_rate(&report(vec![0, 1]), &[vec![0, 1]]), 1.0);
        assert_eq!(detection_rate(&report(vec![]), &[vec![0]]), 0.0);
        assert_eq!(detection_rate(&report(vec![]), &[vec![]]), 1.0);
        assert_eq!(detection_rate(&report(vec![1]), &[vec![]]), 0.0);
        assert_eq!(detection_rate(&report(vec![1]), &[vec![0, 1]]), 0.5);
        let a = [vec![0]];
        let b = [vec![]];
        let pooled = pooled_detection_rate([(&a[..], &a[..]), (&b[..], &a[..])]);
        assert_eq!(pooled, 0.5);
    }

    fn toy() -> (Forest, Dataset) {
        let mut rng = seed::rng(8, &[]);
        let rows: Vec<Vec<f64>> = (0..400).map(|_| (0..5).map(|_| rng.gen()).collect()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum()).collect();
        let data = Dataset::new("toy", rows, ys).unwrap();
        let plan = make_subsets(&data, 5, 1.0, 400, 2).unwrap();
        let cfg = ForestConfig {
            tree_count: 5,
            max_depth: 3,
            min_leaf_samples: 3,
            seed: 2,
            ..ForestConfig::default()
        };
        (train_forest(&data, &plan, &cfg).unwrap(), data)
    }

    #[test]
    fn leaf_only_flags_are_common_ancestors() {
        let (forest, data) = toy();
        // untrained autoencoder: refined leaves are essentially arbitrary
        let n = IndicatorLayout::new(&forest, 3).len();
        let stack = DaeStack::new(vec![DenoisingAutoencoder::random(n, n.div_ceil(2), 3, 4)]).unwrap();
        let rec = Recoverer::new(&forest, &stack).unwrap();
        let mut flagged = 0;
        for x in data.rows().take(200) {
            let r = rec.recover(x).unwrap();
            assert_eq!(r.original_leaves, forest.leaf_nodes(x));
            for t in 0..forest.len() {
                let tree = forest.tree(t);
                let flags = &r.per_tree_flags[t];
                assert!(flags.len() <= tree.max_depth());
                if r.refined_leaves[t] == r.original_leaves[t] {
                    assert!(flags.is_empty());
                } else {
                    flagged += 1;
                    let lca = lca_oracle(tree, r.refined_leaves[t], r.original_leaves[t]);
                    assert_eq!(flags, &vec![lca]);
                    assert!(!tree.node(lca).is_leaf());
                }
            }
        }
        assert!(flagged > 0);
    }

    #[test]
    fn per_depth_flags_lie_on_the_original_path() {
        let (forest, data) = toy();
        let cfg = TrainConfig {
            epochs: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        let stack = crate::dae::train_stack(&data, &forest, &cfg, true).unwrap();
        let rec = Recoverer::new(&forest, &stack).unwrap();
        assert!(rec.is_per_depth());
        let rows: Vec<&[f64]> = data.rows().take(100).collect();
        let reports = rec.recover_many(rows.par_iter().copied()).unwrap();
        for (x, r) in rows.iter().zip(&reports) {
            assert_eq!(r, &rec.recover(x).unwrap());
            for (t, flags) in r.per_tree_flags.iter().enumerate() {
                let tree = forest.tree(t);
                let path = tree.path(x);
                assert!(flags.len() <= tree.max_depth());
                for f in flags {
                    assert!(path.contains(f) && !tree.node(*f).is_leaf());
                }
            }
        }
    }

    #[test]
    fn mismatched_stack_is_rejected() {
        let (forest, _) = toy();
        let wrong_depth = DaeStack::new(vec![DenoisingAutoencoder::zeros(4, 2, 2)]).unwrap();
        assert!(Recoverer::new(&forest, &wrong_depth).is_err());
        let wrong_width = DaeStack::new(vec![DenoisingAutoencoder::zeros(4, 2, 3)]).unwrap();
        assert!(matches!(recover(&forest, &wrong_width, &[0.0; 5]), Err(Error::Shape(_))));
    }

    #[test]
    fn flag_dump_format() {
        let r = FlagReport {
            per_tree_flags: vec![vec![0, 4], vec![]],
            refined_leaves: vec![2, 2],
            original_leaves: vec![2, 2],
        };
        let mut buf = Vec::new();
        write_flags(&mut buf, &[(7, &r)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "sample_index,tree_index,flags\n7,0,0;4\n7,1,\n");
    }
}
