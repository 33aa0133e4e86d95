use crate::error::{Error, Result};

pub const L1_FLOOR: f64 = 1e-8;
pub const MASS_FLOOR: f64 = 1e-12;

/// Mean of `|prediction - truth| / max(|truth|, 1e-8)`.
pub fn normalized_l1(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() || truths.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    let sum: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, y)| (p - y).abs() / y.abs().max(L1_FLOOR))
        .sum();
    Ok(sum / truths.len() as f64)
}

/// Fraction of samples whose recovered leaf matches the clean leaf in every tree.
pub fn precision_rate(recovered: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<f64> {
    if recovered.len() != truth.len() || truth.is_empty() {
        return Err(Error::Shape(format!("{} recovered samples for {} truths", recovered.len(), truth.len())));
    }
    let mut exact = 0;
    for (r, t) in recovered.iter().zip(truth) {
        if r.len() != t.len() {
            return Err(Error::Shape(format!("{} trees recovered, {} expected", r.len(), t.len())));
        }
        if r == t {
            exact += 1;
        }
    }
    Ok(exact as f64 / truth.len() as f64)
}

/// Mean over trees of `-log2` of the mass the renormalized segment puts on
/// the true position.
pub fn indicator_cross_entropy(values: &[f64], tree_offsets: &[usize], true_positions: &[usize]) -> Result<f64> {
    if tree_offsets.len() != true_positions.len() || tree_offsets.is_empty() {
        return Err(Error::Shape(format!(
            "{} segments, {} true positions",
            tree_offsets.len(),
            true_positions.len()
        )));
    }
    let mut total = 0.0;
    for (t, (&start, &pos)) in tree_offsets.iter().zip(true_positions).enumerate() {
        let end = tree_offsets.get(t + 1).copied().unwrap_or(values.len());
        let seg = values
            .get(start..end)
            .ok_or_else(|| Error::Shape(format!("segment {t} out of range")))?;
        if pos >= seg.len() {
            return Err(Error::Shape(format!("true position {pos} outside segment {t}")));
        }
        let sum: f64 = seg.iter().sum();
        let mass = if sum > 0.0 { seg[pos] / sum } else { 0.0 };
        total += -mass.max(MASS_FLOOR).log2();
    }
    Ok(total / tree_offsets.len() as f64)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_examples() {
        assert_eq!(normalized_l1(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert!((normalized_l1(&[11.0], &[10.0]).unwrap() - 0.1).abs() < 1e-12);
        assert!((normalized_l1(&[11.0, 8.0], &[10.0, 10.0]).unwrap() - 0.15).abs() < 1e-12);
        assert!(normalized_l1(&[1.0], &[1.0, 2.0]).is_err());
        assert!(normalized_l1(&[1e-9], &[0.0]).unwrap().is_finite());
    }

    #[test]
    fn precision_examples() {
        let truth = vec![vec![1, 2], vec![3, 4]];
        assert_eq!(precision_rate(&truth, &truth).unwrap(), 1.0);
        assert_eq!(precision_rate(&[vec![1, 2], vec![3, 5]], &truth).unwrap(), 0.5);
        assert!(precision_rate(&[vec![1]], &truth).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(indicator_cross_entropy(&[0.0, 1.0, 0.0], &[0], &[1]).unwrap(), 0.0);
        let uniform = indicator_cross_entropy(&[0.3; 8], &[0], &[5]).unwrap();
        assert!((uniform - 3.0).abs() < 1e-12);
        assert!((indicator_cross_entropy(&[0.5, 0.25, 0.25], &[0], &[0]).unwrap() - 1.0).abs() < 1e-12);
        // unnormalized segments are rescaled per tree
        let two = indicator_cross_entropy(&[2.0, 2.0, 0.7, 0.0], &[0, 2], &[0, 0]).unwrap();
        assert!((two - 0.5).abs() < 1e-12);
        let zero = indicator_cross_entropy(&[1.0, 0.0], &[0], &[1]).unwrap();
        assert!((zero - 1e12f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }
}
