//! Tree entropy, pairwise tree cross-entropy, and low-entropy tree selection.
//!
//! For a sample set `S`, `H_t(S)` is the base-2 Shannon entropy of the
//! leaf-occupancy distribution of tree `t`. The cross-entropy `C(t, t')`
//! averages, over the `N_t` leaves of tree `t`, the entropy that tree `t'`
//! assigns to the samples reaching each leaf. Leaves of `t` that receive no
//! samples contribute zero but still count in the `N_t` divisor. Low values
//! mean the two trees carve the samples similarly.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forest::{Forest, Tree};

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    pub per_tree_entropy: Vec<f64>,
    /// `pair_matrix[t][u] = C(t, u)`; the diagonal is zero.
    pub pair_matrix: Vec<Vec<f64>>,
    pub mean_per_tree: Vec<f64>,
    /// Mean cross-entropy with each `H_u` term divided by `log2(N_u)`.
    pub normalized_mean: Vec<f64>,
    pub eval_set_size: usize,
}

impl EntropyReport {
    /// Normalized mean cross-entropy averaged over trees.
    pub fn average_normalized(&self) -> f64 {
        self.normalized_mean.iter().sum::<f64>() / self.normalized_mean.len() as f64
    }

    pub fn average_mean(&self) -> f64 {
        self.mean_per_tree.iter().sum::<f64>() / self.mean_per_tree.len() as f64
    }

    /// `tree_index,entropy,mean_cross_entropy,normalized_mean_cross_entropy` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "tree_index,entropy,mean_cross_entropy,normalized_mean_cross_entropy")?;
        for t in 0..self.per_tree_entropy.len() {
            writeln!(
                out,
                "{t},{},{},{}",
                self.per_tree_entropy[t], self.mean_per_tree[t], self.normalized_mean[t]
            )?;
        }
        Ok(())
    }
}

/// Base-2 entropy of a histogram; empty bins contribute nothing.
fn histogram_entropy(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

fn local_leaves(tree: &Tree, samples: &[&[f64]]) -> Vec<usize> {
    samples
        .iter()
        .map(|x| tree.local_leaf_index(tree.leaf_node(x)).expect("leaf"))
        .collect()
}

fn check_samples(samples: &[&[f64]]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Data("entropy needs a non-empty sample set".into()));
    }
    Ok(())
}

pub fn tree_entropy(tree: &Tree, samples: &[&[f64]]) -> Result<f64> {
    check_samples(samples)?;
    let mut counts = vec![0usize; tree.leaf_count()];
    for leaf in local_leaves(tree, samples) {
        counts[leaf] += 1;
    }
    Ok(histogram_entropy(&counts))
}

/// `(C(t, u), normalized C(t, u))` from precomputed leaf assignments.
fn pair_terms(leaves_t: &[usize], n_t: usize, leaves_u: &[usize], n_u: usize) -> (f64, f64) {
    let mut hist = vec![0usize; n_t * n_u];
    for (&a, &b) in leaves_t.iter().zip(leaves_u) {
        hist[a * n_u + b] += 1;
    }
    let norm = if n_u > 1 { (n_u as f64).log2() } else { 0.0 };
    let sum: f64 = hist.chunks_exact(n_u).map(histogram_entropy).sum();
    let c = sum / n_t as f64;
    let normalized = if norm > 0.0 { c / norm } else { 0.0 };
    (c, normalized)
}

pub fn cross_entropy_pair(tree_t: &Tree, tree_u: &Tree, samples: &[&[f64]]) -> Result<f64> {
    check_samples(samples)?;
    let a = local_leaves(tree_t, samples);
    let b = local_leaves(tree_u, samples);
    Ok(pair_terms(&a, tree_t.leaf_count(), &b, tree_u.leaf_count()).0)
}

pub fn entropy_report(forest: &Forest, samples: &[&[f64]]) -> Result<EntropyReport> {
    let t_count = forest.len();
    if t_count < 2 {
        return Err(Error::Config(format!(
            "entropy report needs at least 2 trees, forest has {t_count}"
        )));
    }
    check_samples(samples)?;
    let leaves: Vec<Vec<usize>> = forest.trees().par_iter().map(|t| local_leaves(t, samples)).collect();
    let sizes: Vec<usize> = forest.trees().iter().map(Tree::leaf_count).collect();

    let per_tree_entropy = leaves
        .iter()
        .zip(&sizes)
        .map(|(l, &n)| {
            let mut counts = vec![0usize; n];
            for &leaf in l {
                counts[leaf] += 1;
            }
            histogram_entropy(&counts)
        })
        .collect();

    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..t_count)
        .into_par_iter()
        .map(|t| {
            (0..t_count)
                .map(|u| {
                    if t == u {
                        (0.0, 0.0)
                    } else {
                        pair_terms(&leaves[t], sizes[t], &leaves[u], sizes[u])
                    }
                })
                .unzip()
        })
        .collect();

    let denom = (t_count - 1) as f64;
    let mean_per_tree = rows.iter().map(|(c, _)| c.iter().sum::<f64>() / denom).collect();
    let normalized_mean = rows.iter().map(|(_, n)| n.iter().sum::<f64>() / denom).collect();
    Ok(EntropyReport {
        per_tree_entropy,
        pair_matrix: rows.into_iter().map(|(c, _)| c).collect(),
        mean_per_tree,
        normalized_mean,
        eval_set_size: samples.len(),
    })
}

/// Number of trees kept for a fraction: `ceil(fraction * T)`.
pub fn kept_count(keep_fraction: f64, tree_count: usize) -> usize {
    ((keep_fraction * tree_count as f64 - 1e-9).ceil().max(1.0) as usize).min(tree_count)
}

/// Smallest forest whose selection at `keep_fraction` keeps at least `kept` trees.
pub fn trained_count(keep_fraction: f64, kept: usize) -> usize {
    (kept..).find(|&t| kept_count(keep_fraction, t) >= kept).unwrap_or(kept)
}

/// Keeps the `ceil(keep_fraction * T)` trees with the lowest mean
/// cross-entropy, in their original relative order. Returns the refined
/// forest and the kept indices.
pub fn select_trees(forest: &Forest, report: &EntropyReport, keep_fraction: f64) -> Result<(Forest, Vec<usize>)> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Config(format!("keep fraction {keep_fraction} outside (0, 1]")));
    }
    if report.mean_per_tree.len() != forest.len() {
        return Err(Error::Shape(format!(
            "report covers {} trees, forest has {}",
            report.mean_per_tree.len(),
            forest.len()
        )));
    }
    let k = kept_count(keep_fraction, forest.len());
    let mut ranked: Vec<usize> = (0..forest.len()).collect();
    ranked.sort_by(|&a, &b| report.mean_per_tree[a].total_cmp(&report.mean_per_tree[b]).then(a.cmp(&b)));
    let mut keep = ranked[..k].to_vec();
    keep.sort_unstable();
    Ok((forest.subset(&keep)?, keep))
}
