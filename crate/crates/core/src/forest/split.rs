//! Split search maximizing the reduction in summed squared error.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub dimension: usize,
    pub threshold: f64,
    /// `SSE(parent) - SSE(left) - SSE(right)`.
    pub score: f64,
}

/// Arithmetic mean of the targets reaching a node.
pub fn leaf_estimate(targets: impl IntoIterator<Item = f64>) -> Result<f64> {
    let (sum, n) = targets.into_iter().fold((0.0, 0usize), |(s, n), y| (s + y, n + 1));
    if n == 0 {
        return Err(Error::Data("leaf estimate of an empty sample set".into()));
    }
    Ok(sum / n as f64)
}

/// Midpoint between two consecutive distinct sorted values, kept strictly
/// below `hi` so the right child is never empty.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Best `(dimension, threshold)` over `dimensions` for the samples in `indices`.
///
/// Candidates are midpoints between consecutive distinct values. Children
/// must each hold at least `min_leaf` samples. Returns `None` when the
/// targets are constant or no candidate has a positive gain. Ties keep the
/// lowest dimension, then the lowest threshold.
pub fn best_split<'a>(
    row: impl Fn(usize) -> &'a [f64],
    targets: &[f64],
    indices: &[usize],
    dimensions: &[usize],
    min_leaf: usize,
) -> Option<Split> {
    let n = indices.len();
    let min_leaf = min_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let first = targets[indices[0]];
    if indices.iter().all(|&i| targets[i] == first) {
        return None;
    }
    let total: f64 = indices.iter().map(|&i| targets[i]).sum();

    let mut best: Option<Split> = None;
    let mut order: Vec<(f64, f64)> = Vec::with_capacity(n);
    for &d in dimensions {
        order.clear();
        order.extend(indices.iter().map(|&i| (row(i)[d], targets[i])));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += order[k].1;
            let (lo, hi) = (order[k].0, order[k + 1].0);
            if lo == hi {
                continue;
            }
            let n_left = k + 1;
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            // SSE(P) - SSE(L) - SSE(R) = n_L n_R / n * (mean_L - mean_R)^2
            let mean_left = left_sum / n_left as f64;
            let mean_right = (total - left_sum) / n_right as f64;
            let diff = mean_left - mean_right;
            let score = (n_left as f64) * (n_right as f64) / n as f64 * diff * diff;
            if score > 0.0 && best.is_none_or(|b| score > b.score) {
                best = Some(Split {
                    dimension: d,
                    threshold: midpoint(lo, hi),
                    score,
                });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sse(ys: &[f64]) -> f64 {
        if ys.is_empty() {
            return 0.0;
        }
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        ys.iter().map(|y| (y - mean) * (y - mean)).sum()
    }

    /// Exhaustive enumeration with two-pass SSE on each side.
    fn brute_force(rows: &[Vec<f64>], ys: &[f64], min_leaf: usize) -> Option<(usize, f64, f64)> {
        let parent = sse(ys);
        let mut best: Option<(usize, f64, f64)> = None;
        for d in 0..rows[0].len() {
            let mut vals: Vec<f64> = rows.iter().map(|r| r[d]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let thr = midpoint(w[0], w[1]);
                let left: Vec<f64> = rows.iter().zip(ys).filter(|(r, _)| r[d] <= thr).map(|(_, &y)| y).collect();
                let right: Vec<f64> = rows.iter().zip(ys).filter(|(r, _)| r[d] > thr).map(|(_, &y)| y).collect();
                if left.len() < min_leaf || right.len() < min_leaf {
                    continue;
                }
                let score = parent - sse(&left) - sse(&right);
                if best.is_none_or(|b| score > b.2 + 1e-9 * parent.max(1.0)) {
                    best = Some((d, thr, score));
                }
            }
        }
        best.filter(|b| b.2 > 1e-12 * parent.max(1.0))
    }

    fn run(rows: &[Vec<f64>], ys: &[f64]) -> Option<Split> {
        let idx: Vec<usize> = (0..rows.len()).collect();
        let dims: Vec<usize> = (0..rows[0].len()).collect();
        best_split(|i| rows[i].as_slice(), ys, &idx, &dims, 1)
    }

    #[test]
    fn four_point_step() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let s = run(&rows, &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(s.dimension, 0);
        assert_eq!(s.threshold, 1.5);
        assert!((s.score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_targets_do_not_split() {
        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(run(&rows, &[0.1, 0.1, 0.1]).is_none());
    }

    #[test]
    fn single_feature_value_does_not_split() {
        let rows = vec![vec![4.0], vec![4.0], vec![4.0]];
        assert!(run(&rows, &[1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn ties_prefer_lowest_dimension() {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let s = run(&rows, &[0.0, 1.0]).unwrap();
        assert_eq!(s.dimension, 0);
    }

    #[test]
    fn min_leaf_is_respected() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let ys = [10.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let idx: Vec<usize> = (0..6).collect();
        let s = best_split(|i| rows[i].as_slice(), &ys, &idx, &[0], 2).unwrap();
        assert_eq!(s.threshold, 1.5);
    }

    #[test]
    fn leaf_estimate_examples() {
        assert_eq!(leaf_estimate([2.0, 4.0]).unwrap(), 3.0);
        assert_eq!(leaf_estimate([5.0]).unwrap(), 5.0);
        assert_eq!(leaf_estimate([1.0, 2.0, 6.0]).unwrap(), 3.0);
        assert!(leaf_estimate(std::iter::empty()).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(100))]
        #[test]
        fn matches_brute_force_sse(
            data in proptest::collection::vec(((0u8..6, 0u8..6), -5i32..5), 2..14),
        ) {
            let rows: Vec<Vec<f64>> = data.iter().map(|((a, b), _)| vec![*a as f64, *b as f64]).collect();
            let ys: Vec<f64> = data.iter().map(|(_, y)| *y as f64).collect();
            let got = run(&rows, &ys);
            let want = brute_force(&rows, &ys, 1);
            match (got, want) {
                (None, None) => {}
                (Some(g), Some(w)) => {
                    proptest::prop_assert!(g.score >= 0.0);
                    proptest::prop_assert!((g.score - w.2).abs() <= 1e-9 * w.2.max(1.0));
                    // the chosen split's score recomputed by direct SSE
                    let left: Vec<f64> = rows.iter().zip(&ys).filter(|(r, _)| r[g.dimension] <= g.threshold).map(|(_, &y)| y).collect();
                    let right: Vec<f64> = rows.iter().zip(&ys).filter(|(r, _)| r[g.dimension] > g.threshold).map(|(_, &y)| y).collect();
                    let direct = sse(&ys) - sse(&left) - sse(&right);
                    proptest::prop_assert!((g.score - direct).abs() <= 1e-9 * direct.abs().max(1.0));
                }
                (g, w) => proptest::prop_assert!(false, "mismatch {:?} vs {:?}", g, w),
            }
        }
    }
}
