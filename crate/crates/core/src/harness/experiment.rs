use rayon::prelude::*;

use super::config::{ExperimentConfig, Mode};
use super::metrics::{indicator_cross_entropy, normalized_l1, precision_rate};
use super::report::{Cell, Metrics, Report, RepetitionInfo};
use crate::dae::{self, DaeStack, DenoisingAutoencoder};
use crate::data::{candidate_pool_size, inject_noise, load_csv, make_subsets, Dataset, MinMaxScaler, NoiseSpec};
use crate::error::{Error, Result};
use crate::forest::{train_forest, Forest, ForestConfig};
use crate::indicator::IndicatorLayout;
use crate::multipath::{multipath_predict, PathSet};
use crate::recovery::{detection_counts, divergence_onsets, wrong_decisions, FlagReport, Recoverer};
use crate::seed;
use crate::treeselect::{entropy_report, select_trees};

/// Trained models an evaluation can draw on.
#[derive(Debug, Clone, Copy)]
pub struct Models<'a> {
    pub forest: &'a Forest,
    pub stack: Option<&'a DaeStack>,
    pub feature_dae: Option<&'a DenoisingAutoencoder>,
}

impl Models<'_> {
    fn check(&self, modes: &[Mode]) -> Result<()> {
        for m in modes {
            if m.needs_path_dae() && self.stack.is_none() {
                return Err(Error::Config(format!("mode {m} needs a path autoencoder")));
            }
            if *m == Mode::FeatureDaeBaseline && self.feature_dae.is_none() {
                return Err(Error::Config(format!("mode {m} needs a feature autoencoder")));
            }
        }
        Ok(())
    }
}

/// Per-mode outcome for one test sample.
struct Outcome {
    prediction: f64,
    leaves: Vec<usize>,
    xent: f64,
    detection: (usize, usize, usize),
}

fn one_hot_xent(layout: &IndicatorLayout, forest: &Forest, leaves: &[usize], truth: &[usize]) -> Result<f64> {
    let mut v = vec![0.0; layout.len()];
    layout.write_binary(&layout.positions_for_nodes(forest, leaves), &mut v);
    indicator_cross_entropy(&v, layout.offsets(), truth)
}

fn lca_flags(forest: &Forest, from: &[usize], to: &[usize]) -> Vec<Vec<usize>> {
    from.iter()
        .zip(to)
        .enumerate()
        .map(|(t, (&a, &b))| {
            if a == b {
                Vec::new()
            } else {
                vec![forest.tree(t).lowest_common_ancestor(a, b)]
            }
        })
        .collect()
}

/// Corrupts every row of `test` at `snr` and scores each mode on it.
pub fn evaluate(
    models: Models<'_>,
    test: &Dataset,
    noise_means: &[f64],
    snr: f64,
    noise_seed: u64,
    rep: usize,
    modes: &[Mode],
) -> Result<Vec<Cell>> {
    models.check(modes)?;
    if test.is_empty() {
        return Err(Error::Data("empty evaluation set".into()));
    }
    let forest = models.forest;
    let layout = IndicatorLayout::new(forest, forest.max_depth());
    let recoverer = match models.stack {
        Some(s) if modes.iter().any(|m| m.needs_path_dae()) => Some(Recoverer::new(forest, s)?),
        _ => None,
    };

    let per_sample: Vec<Vec<Outcome>> = (0..test.len())
        .into_par_iter()
        .map(|i| -> Result<Vec<Outcome>> {
            let clean = test.row(i);
            let spec = NoiseSpec::new(snr, seed::derive(noise_seed, &[i as u64]))?;
            let (noisy, _) = inject_noise(clean, spec, noise_means)?;
            let clean_leaves = forest.leaf_nodes(clean);
            let noisy_leaves = forest.leaf_nodes(&noisy);
            let truth = divergence_onsets(forest, clean, &noisy);
            let true_pos = layout.positions_for_nodes(forest, &clean_leaves);
            let recovered = match &recoverer {
                Some(r) => Some(r.recover_with_scores(&noisy)?),
                None => None,
            };
            modes
                .iter()
                .map(|&mode| -> Result<Outcome> {
                    Ok(match mode {
                        Mode::Plain => Outcome {
                            prediction: forest.predict(&noisy),
                            xent: one_hot_xent(&layout, forest, &noisy_leaves, &true_pos)?,
                            detection: detection_counts(&vec![Vec::new(); forest.len()], &truth),
                            leaves: noisy_leaves.clone(),
                        },
                        Mode::RefinedOnly | Mode::Multipath => {
                            let (report, scores) = recovered.as_ref().expect("recoverer present");
                            let prediction = if mode == Mode::Multipath {
                                multipath_predict(forest, &noisy, report)?
                            } else {
                                forest.predict_from_leaves(&report.refined_leaves)
                            };
                            Outcome {
                                prediction,
                                xent: indicator_cross_entropy(scores, layout.offsets(), &true_pos)?,
                                detection: detection_counts(&report.per_tree_flags, &truth),
                                leaves: report.refined_leaves.clone(),
                            }
                        }
                        Mode::MultipathKnownNoise => {
                            let flags = wrong_decisions(forest, clean, &noisy);
                            let prediction = PathSet::enumerate(forest, &noisy, &flags)?.predict(forest);
                            Outcome {
                                prediction,
                                xent: 0.0,
                                detection: detection_counts(&flags, &truth),
                                leaves: clean_leaves.clone(),
                            }
                        }
                        Mode::FeatureDaeBaseline => {
                            let fdae = models.feature_dae.expect("checked");
                            let denoised = fdae.forward(&noisy)?;
                            let leaves = forest.leaf_nodes(&denoised);
                            Outcome {
                                prediction: forest.predict(&denoised),
                                xent: one_hot_xent(&layout, forest, &leaves, &true_pos)?,
                                detection: detection_counts(&lca_flags(forest, &noisy_leaves, &leaves), &truth),
                                leaves,
                            }
                        }
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let clean_leaves: Vec<Vec<usize>> = test.rows().map(|x| forest.leaf_nodes(x)).collect();
    modes
        .iter()
        .enumerate()
        .map(|(k, &mode)| {
            let preds: Vec<f64> = per_sample.iter().map(|o| o[k].prediction).collect();
            let leaves: Vec<Vec<usize>> = per_sample.iter().map(|o| o[k].leaves.clone()).collect();
            let (mut h, mut t, mut f) = (0, 0, 0);
            for o in &per_sample {
                let d = o[k].detection;
                h += d.0;
                t += d.1;
                f += d.2;
            }
            let detection = match (t, f) {
                (0, 0) => 1.0,
                (0, _) => 0.0,
                _ => h as f64 / t as f64,
            };
            let metrics = Metrics {
                l1: normalized_l1(&preds, test.targets())?,
                precision: precision_rate(&leaves, &clean_leaves)?,
                xent: per_sample.iter().map(|o| o[k].xent).sum::<f64>() / per_sample.len() as f64,
                detection,
            };
            if !metrics.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite metric for mode {mode} at snr {snr}, repetition {rep}: {metrics:?}"
                )));
            }
            Ok(Cell { mode, snr, rep, metrics })
        })
        .collect()
}

/// Predictions on un-corrupted rows for modes that need no clean reference.
pub fn predict_rows<'r>(models: Models<'_>, rows: impl Iterator<Item = &'r [f64]>, mode: Mode) -> Result<Vec<f64>> {
    models.check(&[mode])?;
    let forest = models.forest;
    match mode {
        Mode::Plain => Ok(rows.map(|x| forest.predict(x)).collect()),
        Mode::RefinedOnly | Mode::Multipath => {
            let rec = Recoverer::new(forest, models.stack.expect("checked"))?;
            rows.map(|x| {
                let report: FlagReport = rec.recover(x)?;
                if mode == Mode::Multipath {
                    multipath_predict(forest, x, &report)
                } else {
                    Ok(forest.predict_from_leaves(&report.refined_leaves))
                }
            })
            .collect()
        }
        Mode::FeatureDaeBaseline => {
            let fdae = models.feature_dae.expect("checked");
            rows.map(|x| Ok(forest.predict(&fdae.forward(x)?))).collect()
        }
        Mode::MultipathKnownNoise => Err(Error::Config(
            "known-noise prediction needs the clean sample; use evaluate".into(),
        )),
    }
}

/// Models trained for one repetition, with scaled splits.
pub struct Pipeline {
    pub forest: Forest,
    pub stack: Option<DaeStack>,
    pub feature_dae: Option<DenoisingAutoencoder>,
    pub train: Dataset,
    pub test: Dataset,
    pub info: RepetitionInfo,
}

impl Pipeline {
    pub fn models(&self) -> Models<'_> {
        Models {
            forest: &self.forest,
            stack: self.stack.as_ref(),
            feature_dae: self.feature_dae.as_ref(),
        }
    }
}

/// Splits, scales and trains everything repetition `rep` needs.
pub fn train_pipeline(data: &Dataset, cfg: &ExperimentConfig, rep: usize) -> Result<Pipeline> {
    cfg.validate()?;
    let rep_seed = seed::derive(cfg.seed, &[rep as u64]);
    let sampled = data.subsample(cfg.max_rows, seed::derive(rep_seed, &[1]));
    let (train_raw, test_raw) = sampled.split(cfg.train_fraction, seed::derive(rep_seed, &[2]))?;
    let scaler = MinMaxScaler::fit(&train_raw);
    let train = scaler.transform(&train_raw)?;
    let test = scaler.transform(&test_raw)?;

    let (forest_rows, eval_rows) = if cfg.entropy_fraction > 0.0 {
        let (a, b) = train.split(1.0 - cfg.entropy_fraction, seed::derive(rep_seed, &[8]))?;
        (a, Some(b))
    } else {
        (train.clone(), None)
    };
    let pool = candidate_pool_size(forest_rows.len(), cfg.trees, cfg.overlap_ratio);
    let subset_size = ((cfg.subset_fraction * pool as f64).round() as usize).max(1);
    let plan = make_subsets(&forest_rows, cfg.trees, cfg.overlap_ratio, subset_size, seed::derive(rep_seed, &[3]))?;
    let forest_cfg = ForestConfig {
        tree_count: cfg.trees,
        max_depth: cfg.depth,
        min_leaf_samples: cfg.min_leaf,
        candidates: cfg.split_candidates,
        seed: seed::derive(rep_seed, &[4]),
    };
    let mut forest = train_forest(&forest_rows, &plan, &forest_cfg)?;
    forest.scaler = Some(scaler);

    let (mut entropy_before, mut entropy_after) = (None, None);
    if forest.len() >= 2 {
        let eval = eval_rows.as_ref().unwrap_or(&forest_rows);
        let samples: Vec<&[f64]> = eval.rows().collect();
        let report = entropy_report(&forest, &samples)?;
        entropy_before = Some(report.average_normalized());
        if cfg.keep_fraction < 1.0 {
            let (kept, idx) = select_trees(&forest, &report, cfg.keep_fraction)?;
            let mean: f64 = idx.iter().map(|&t| report.normalized_mean[t]).sum::<f64>() / idx.len() as f64;
            entropy_after = Some(mean);
            forest = kept;
        } else {
            entropy_after = entropy_before;
        }
    }

    let stack = if cfg.needs_path_dae() {
        let dae_cfg = dae::TrainConfig {
            seed: seed::derive(rep_seed, &[5]),
            ..cfg.dae.clone()
        };
        Some(dae::train_stack(&train, &forest, &dae_cfg, cfg.per_depth)?)
    } else {
        None
    };
    let feature_dae = if cfg.modes.contains(&Mode::FeatureDaeBaseline) {
        let dae_cfg = dae::TrainConfig {
            seed: seed::derive(rep_seed, &[6]),
            ..cfg.dae.clone()
        };
        Some(dae::train_feature_dae(&train, &dae_cfg)?)
    } else {
        None
    };

    let info = RepetitionInfo {
        rep,
        rows_used: sampled.len(),
        train_rows: train.len(),
        test_rows: test.len(),
        trees_trained: cfg.trees,
        trees_kept: forest.len(),
        entropy_before,
        entropy_after,
    };
    Ok(Pipeline {
        forest,
        stack,
        feature_dae,
        train,
        test,
        info,
    })
}

/// Runs every repetition of `cfg` on an already loaded dataset.
pub fn run_on_dataset(data: &Dataset, cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = Report {
        dataset: data.name.clone(),
        ..Report::default()
    };
    for rep in 0..cfg.repetitions {
        let p = train_pipeline(data, cfg, rep)?;
        let rep_seed = seed::derive(cfg.seed, &[rep as u64]);
        for (si, &snr) in cfg.snr_grid.iter().enumerate() {
            let noise_seed = seed::derive(rep_seed, &[7, si as u64]);
            let cells = evaluate(p.models(), &p.test, p.train.column_means(), snr, noise_seed, rep, &cfg.modes)?;
            report.cells.extend(cells);
        }
        report.repetitions.push(p.info);
    }
    Ok(report)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let data = load_csv(&cfg.data, cfg.target)?;
    run_on_dataset(&data, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn synthetic(rows: usize) -> Dataset {
        let mut rng = seed::rng(40, &[]);
        let xs: Vec<Vec<f64>> = (0..rows).map(|_| (0..5).map(|_| rng.gen_range(0.0..10.0)).collect()).collect();
        let ys: Vec<f64> = xs.iter().map(|r| 20.0 + 3.0 * r[0] + 2.0 * r[1] - r[2] + 0.5 * r[3] * r[4]).collect();
        Dataset::new("synthetic", xs, ys).unwrap()
    }

    fn quick(modes: Vec<Mode>) -> ExperimentConfig {
        ExperimentConfig {
            trees: 6,
            depth: 3,
            snr_grid: vec![0.0, 0.4],
            modes,
            max_rows: 300,
            dae: dae::TrainConfig {
                epochs: 5,
                ..dae::TrainConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn reports_are_reproducible_and_consistent() {
        let data = synthetic(400);
        let cfg = ExperimentConfig {
            repetitions: 2,
            keep_fraction: 0.7,
            ..quick(Mode::ALL.to_vec())
        };
        let a = run_on_dataset(&data, &cfg).unwrap();
        let b = run_on_dataset(&data, &cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.cells.len(), 2 * 2 * 5);
        assert_eq!(a.repetitions[0].rows_used, 300);
        assert_eq!(a.repetitions[0].trees_kept, 5);
        for agg in a.aggregates() {
            let vals: Vec<f64> = a
                .cells
                .iter()
                .filter(|c| c.mode == agg.mode && c.snr == agg.snr)
                .map(|c| c.metrics.l1)
                .collect();
            assert_eq!(agg.mean.l1, vals.iter().sum::<f64>() / vals.len() as f64);
        }
        // known-noise flags are a superset of the true onsets
        for c in a.cells.iter().filter(|c| c.mode == Mode::MultipathKnownNoise) {
            assert_eq!(c.metrics.detection, 1.0);
            assert_eq!(c.metrics.precision, 1.0);
        }
    }

    #[test]
    fn noise_free_plain_matches_across_model_sets() {
        let data = synthetic(300);
        let plain = run_on_dataset(&data, &quick(vec![Mode::Plain])).unwrap();
        let with_dae = run_on_dataset(&data, &quick(vec![Mode::Plain, Mode::Multipath])).unwrap();
        assert_eq!(plain.mean(Mode::Plain, 0.0), with_dae.mean(Mode::Plain, 0.0));
        let clean = plain.mean(Mode::Plain, 0.0).unwrap();
        assert_eq!(clean.precision, 1.0);
        assert_eq!(clean.xent, 0.0);
        assert_eq!(clean.detection, 1.0);
    }

    #[test]
    fn missing_models_are_reported() {
        let data = synthetic(100);
        let p = train_pipeline(&data, &quick(vec![Mode::Plain]), 0).unwrap();
        let err = evaluate(p.models(), &p.test, p.train.column_means(), 0.2, 1, 0, &[Mode::Multipath]);
        assert!(matches!(err, Err(Error::Config(_))));
        assert!(predict_rows(p.models(), p.test.rows(), Mode::MultipathKnownNoise).is_err());
        let preds = predict_rows(p.models(), p.test.rows(), Mode::Plain).unwrap();
        assert_eq!(preds.len(), p.test.len());
    }
}
