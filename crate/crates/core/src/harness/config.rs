use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dae::TrainConfig;
use crate::data::TargetColumn;
use crate::error::{Error, Result};
use crate::forest::SplitCandidates;
use crate::treeselect::trained_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Plain,
    RefinedOnly,
    Multipath,
    MultipathKnownNoise,
    FeatureDaeBaseline,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Plain,
        Mode::RefinedOnly,
        Mode::Multipath,
        Mode::MultipathKnownNoise,
        Mode::FeatureDaeBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::RefinedOnly => "refined_only",
            Mode::Multipath => "multipath",
            Mode::MultipathKnownNoise => "multipath_known_noise",
            Mode::FeatureDaeBaseline => "feature_dae_baseline",
        }
    }

    /// Whether the mode consults the path autoencoders.
    pub fn needs_path_dae(self) -> bool {
        matches!(self, Mode::RefinedOnly | Mode::Multipath)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "plain" => Ok(Mode::Plain),
            "refined" | "refined_only" => Ok(Mode::RefinedOnly),
            "multipath" => Ok(Mode::Multipath),
            "known_noise" | "multipath_known_noise" => Ok(Mode::MultipathKnownNoise),
            "feature_dae" | "feature_dae_baseline" => Ok(Mode::FeatureDaeBaseline),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    pub target: TargetColumn,
    pub trees: usize,
    pub depth: usize,
    pub min_leaf: usize,
    pub split_candidates: SplitCandidates,
    pub overlap_ratio: f64,
    /// Share of trees kept by entropy selection; 1.0 disables selection.
    pub keep_fraction: f64,
    /// Share of the training split set aside to score tree entropies;
    /// 0 scores them on the training rows.
    pub entropy_fraction: f64,
    /// Bootstrap subset size relative to a tree's candidate pool.
    pub subset_fraction: f64,
    pub dae: TrainConfig,
    pub per_depth: bool,
    pub snr_grid: Vec<f64>,
    pub modes: Vec<Mode>,
    pub train_fraction: f64,
    pub max_rows: usize,
    pub seed: u64,
    pub repetitions: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: PathBuf::new(),
            target: TargetColumn::Last,
            trees: 15,
            depth: 4,
            min_leaf: 1,
            split_candidates: SplitCandidates::AllDimensions,
            overlap_ratio: 1.0,
            keep_fraction: 0.7,
            entropy_fraction: 0.2,
            subset_fraction: 1.0,
            dae: TrainConfig::default(),
            per_depth: false,
            snr_grid: vec![0.0, 0.125, 0.25, 0.375, 0.5],
            modes: vec![Mode::Plain, Mode::Multipath],
            train_fraction: 0.8,
            max_rows: 2000,
            seed: 0,
            repetitions: 1,
        }
    }
}

/// Forest size `(trees, depth)` used for a known benchmark dataset, counted
/// after tree selection.
pub fn preset_forest(name: &str) -> Option<(usize, usize)> {
    match name {
        "protein" => Some((40, 4)),
        "concrete" => Some((15, 4)),
        "concrete_degradation" => Some((25, 4)),
        "music" => Some((35, 4)),
        "energy" => Some((20, 4)),
        "airfoil" => Some((20, 4)),
        _ => None,
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split([',', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

impl ExperimentConfig {
    /// Defaults for a named benchmark dataset. Enough trees are trained
    /// for selection to leave the preset forest size.
    pub fn preset(name: &str) -> Result<Self> {
        let (kept, depth) = preset_forest(name).ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
        let base = ExperimentConfig::default();
        Ok(ExperimentConfig {
            trees: trained_count(base.keep_fraction, kept),
            depth,
            ..base
        })
    }

    /// Parses `key = value` lines; `#` starts a comment. A `preset` key is
    /// applied first regardless of its position; without an explicit
    /// `trees`, the trained count is then matched to `keep` so the preset
    /// size survives selection. A relative `data` path is resolved against
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = k.trim().to_string();
            if pairs.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }
        let preset = pairs.remove("preset");
        let mut cfg = match &preset {
            Some(name) => Self::preset(name)?,
            None => Self::default(),
        };
        for (key, value) in &pairs {
            let (k, v) = (key.as_str(), value.as_str());
            match k {
                "data" => {
                    let p = PathBuf::from(v);
                    cfg.data = match base_dir {
                        Some(base) if p.is_relative() => base.join(p),
                        _ => p,
                    };
                }
                "target_col" => cfg.target = v.parse()?,
                "trees" => cfg.trees = parse(k, v)?,
                "depth" => cfg.depth = parse(k, v)?,
                "min_leaf" => cfg.min_leaf = parse(k, v)?,
                "split_dims" => cfg.split_candidates = v.parse()?,
                "overlap" => cfg.overlap_ratio = parse(k, v)?,
                "keep" => cfg.keep_fraction = parse(k, v)?,
                "entropy_fraction" => cfg.entropy_fraction = parse(k, v)?,
                "subset_fraction" => cfg.subset_fraction = parse(k, v)?,
                "noise_levels" => cfg.dae.noise_levels = parse_list(k, v)?,
                "epochs" => cfg.dae.epochs = parse(k, v)?,
                "lr" => cfg.dae.learning_rate = parse(k, v)?,
                "batch" => cfg.dae.batch_size = parse(k, v)?,
                "patience" => cfg.dae.patience = parse(k, v)?,
                "per_depth" => cfg.per_depth = parse_bool(k, v)?,
                "snr" => cfg.snr_grid = parse_list(k, v)?,
                "modes" => cfg.modes = parse_list(k, v)?,
                "train_fraction" => cfg.train_fraction = parse(k, v)?,
                "max_rows" => cfg.max_rows = parse(k, v)?,
                "seed" => cfg.seed = parse(k, v)?,
                "reps" | "repetitions" => cfg.repetitions = parse(k, v)?,
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        if let Some((kept, _)) = preset.as_deref().and_then(preset_forest) {
            if !pairs.contains_key("trees") && cfg.keep_fraction > 0.0 && cfg.keep_fraction <= 1.0 {
                cfg.trees = trained_count(cfg.keep_fraction, kept);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.trees == 0 {
            return bad("trees must be positive");
        }
        if !(0.0..=1.0).contains(&self.overlap_ratio) {
            return bad("overlap must lie in [0, 1]");
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return bad("keep must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.entropy_fraction) {
            return bad("entropy_fraction must lie in [0, 1)");
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction.is_finite()) {
            return bad("subset_fraction must be positive");
        }
        if self.snr_grid.is_empty() || self.snr_grid.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return bad("snr grid must be a non-empty subset of [0, 1]");
        }
        if self.modes.is_empty() {
            return bad("at least one mode is required");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.max_rows < 10 {
            return bad("max_rows must be at least 10");
        }
        self.dae.validate()
    }

    pub fn needs_path_dae(&self) -> bool {
        self.modes.iter().any(|m| m.needs_path_dae())
    }
}
