//! Dataset ingestion, scaling, bootstrap subset plans and test-time noise.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Numeric feature matrix (row-major) with a target vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    features: Vec<f64>,
    dim: usize,
    targets: Vec<f64>,
    column_means: Vec<f64>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("no rows".into()));
        }
        if rows.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::Data("at least one feature column is required".into()));
        }
        let mut features = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Data(format!(
                    "row {} has {} features, expected {}",
                    i + 1,
                    row.len(),
                    dim
                )));
            }
            features.extend_from_slice(row);
        }
        Ok(Self::from_flat(name.into(), features, dim, targets))
    }

    fn from_flat(name: String, features: Vec<f64>, dim: usize, targets: Vec<f64>) -> Self {
        let rows = targets.len();
        let mut column_means = vec![0.0; dim];
        for row in features.chunks_exact(dim) {
            for (m, v) in column_means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut column_means {
            *m /= rows as f64;
        }
        Dataset {
            name,
            features,
            dim,
            targets,
            column_means,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn column_means(&self) -> &[f64] {
        &self.column_means
    }

    /// New dataset made of the given rows (repeats allowed), in order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            targets.push(self.targets[i]);
        }
        Dataset::from_flat(self.name.clone(), features, self.dim, targets)
    }

    /// Seeded shuffle split; the first part holds `round(fraction * M)` rows.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Config(format!("split fraction {fraction} outside [0, 1]")));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut seed::rng(seed, &[0x5911]));
        let cut = (fraction * self.len() as f64).round() as usize;
        let (a, b) = order.split_at(cut);
        if a.is_empty() || b.is_empty() {
            return Err(Error::Data(format!(
                "split of {} rows at {fraction} leaves an empty side",
                self.len()
            )));
        }
        Ok((self.select(a), self.select(b)))
    }

    /// Seeded subsample without replacement down to at most `max_rows` rows.
    pub fn subsample(&self, max_rows: usize, seed: u64) -> Dataset {
        if self.len() <= max_rows {
            return self.clone();
        }
        let mut picked = index::sample(&mut seed::rng(seed, &[0x5ab5]), self.len(), max_rows).into_vec();
        picked.sort_unstable();
        self.select(&picked)
    }

    pub fn map_features(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Dataset {
        let features: Vec<f64> = self.rows().flat_map(f).collect();
        Dataset::from_flat(self.name.clone(), features, self.dim, self.targets.clone())
    }
}

/// Which CSV column holds the regression target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TargetColumn {
    #[default]
    Last,
    Index(usize),
}

impl FromStr for TargetColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "last" => Ok(TargetColumn::Last),
            other => other
                .parse()
                .map(TargetColumn::Index)
                .map_err(|_| Error::Config(format!("target column must be an index or 'last', got {s:?}"))),
        }
    }
}

impl fmt::Display for TargetColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetColumn::Last => f.write_str("last"),
            TargetColumn::Index(i) => write!(f, "{i}"),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, target: TargetColumn) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(&name, &text, target)
}

/// Parses comma-separated text. A first row whose leading cell is not a
/// number is treated as a header.
pub fn parse_csv(name: &str, text: &str, target: TargetColumn) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("row {}: {e}", i + 1)))?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        records.push((i + 1, rec));
    }
    if let Some((_, first)) = records.first() {
        let lead = first.get(0).unwrap_or("");
        if lead.parse::<f64>().is_err() {
            records.remove(0);
        }
    }
    if records.is_empty() {
        return Err(Error::Data("no rows".into()));
    }

    let width = records[0].1.len();
    if width < 2 {
        return Err(Error::Data(format!("need at least 2 columns, found {width}")));
    }
    let target_idx = match target {
        TargetColumn::Last => width - 1,
        TargetColumn::Index(i) if i < width => i,
        TargetColumn::Index(i) => {
            return Err(Error::Config(format!("target column {i} out of range for {width} columns")))
        }
    };

    let mut rows = Vec::with_capacity(records.len());
    let mut targets = Vec::with_capacity(records.len());
    for (line, rec) in &records {
        if rec.len() != width {
            return Err(Error::Data(format!(
                "row {line} has {} columns, expected {width}",
                rec.len()
            )));
        }
        let mut row = Vec::with_capacity(width - 1);
        for (col, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row: *line,
                    column: col + 1,
                    value: cell.to_string(),
                })?;
            if col == target_idx {
                targets.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    Dataset::new(name, rows, targets)
}

/// Per-column min-max scaling to `[0, 1]`, fit on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(data: &Dataset) -> Self {
        let mut min = vec![f64::INFINITY; data.dim()];
        let mut max = vec![f64::NEG_INFINITY; data.dim()];
        for row in data.rows() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        MinMaxScaler { min, max }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.min.len() {
            return Err(Error::Shape(format!(
                "scaler fit on {} columns, data has {}",
                self.min.len(),
                data.dim()
            )));
        }
        Ok(data.map_features(|r| self.transform_row(r)))
    }
}

/// Bootstrap subsets for `T` trees with a controlled share of common rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetPlan {
    pub subsets: Vec<Vec<usize>>,
    /// Candidate pool each subset was drawn from (shared pool plus the tree's own block).
    pub pools: Vec<Vec<usize>>,
    pub overlap_ratio: f64,
    pub seed: u64,
}

impl SubsetPlan {
    pub fn tree_count(&self) -> usize {
        self.subsets.len()
    }
}

fn ceil_count(ratio: f64, m: usize) -> usize {
    ((ratio * m as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Smallest candidate pool a tree gets from [`make_subsets`] for `m` rows.
pub fn candidate_pool_size(m: usize, tree_count: usize, overlap_ratio: f64) -> usize {
    let shared = ceil_count(overlap_ratio, m).min(m);
    shared + (m - shared) / tree_count.max(1)
}

/// Draws a shared pool of `ceil(overlap_ratio * M)` rows, splits the rest
/// into `tree_count` disjoint blocks, and bootstraps each subset from its
/// block plus the shared pool.
pub fn make_subsets(
    dataset: &Dataset,
    tree_count: usize,
    overlap_ratio: f64,
    subset_size: usize,
    seed: u64,
) -> Result<SubsetPlan> {
    if tree_count == 0 {
        return Err(Error::Config("tree count must be positive".into()));
    }
    if subset_size == 0 {
        return Err(Error::Config("subset size must be positive".into()));
    }
    if !(0.0..=1.0).contains(&overlap_ratio) {
        return Err(Error::Config(format!("overlap ratio {overlap_ratio} outside [0, 1]")));
    }
    let m = dataset.len();
    let shared_len = ceil_count(overlap_ratio, m).min(m);
    let rest = m - shared_len;
    if rest < tree_count && shared_len < m {
        return Err(Error::Data(format!(
            "{rest} non-shared rows cannot fill {tree_count} disjoint blocks"
        )));
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut seed::rng(seed, &[0xb007]));
    let (shared, remaining) = order.split_at(shared_len);

    let mut pools = Vec::with_capacity(tree_count);
    let mut subsets = Vec::with_capacity(tree_count);
    let base = remaining.len() / tree_count;
    let extra = remaining.len() % tree_count;
    let mut start = 0;
    for t in 0..tree_count {
        let len = base + usize::from(t < extra);
        let block = &remaining[start..start + len];
        start += len;
        let mut pool: Vec<usize> = shared.iter().chain(block).copied().collect();
        pool.sort_unstable();
        let mut rng = seed::rng(seed, &[0xb007, t as u64]);
        let subset = (0..subset_size).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
        subsets.push(subset);
        pools.push(pool);
    }
    Ok(SubsetPlan {
        subsets,
        pools,
        overlap_ratio,
        seed,
    })
}

/// Mean-replacement corruption of a fraction of feature dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Fraction of dimensions replaced, in `[0, 1]`.
    pub snr: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(snr: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&snr) {
            return Err(Error::Config(format!("noise fraction {snr} outside [0, 1]")));
        }
        Ok(NoiseSpec { snr, seed })
    }
}

/// `round(snr * dim)` with halves rounded up.
pub fn corrupted_count(snr: f64, dim: usize) -> usize {
    ((snr * dim as f64 + 0.5 + 1e-9).floor() as usize).min(dim)
}

/// Replaces `corrupted_count(snr, D)` distinct dimensions with their column
/// mean. Returns the corrupted vector and the sorted corrupted dimensions.
pub fn inject_noise(x: &[f64], spec: NoiseSpec, column_means: &[f64]) -> Result<(Vec<f64>, Vec<usize>)> {
    if x.len() != column_means.len() {
        return Err(Error::Shape(format!(
            "sample has {} dimensions, means have {}",
            x.len(),
            column_means.len()
        )));
    }
    let k = corrupted_count(spec.snr, x.len());
    if k == 0 {
        return Ok((x.to_vec(), Vec::new()));
    }
    let mut rng = seed::rng(spec.seed, &[0x401e]);
    let mut dims = index::sample(&mut rng, x.len(), k).into_vec();
    dims.sort_unstable();
    let mut out = x.to_vec();
    for &d in &dims {
        out[d] = column_means[d];
    }
    Ok((out, dims))
}

/// Writes `sample_index,corrupted_dims` rows, dimensions separated by `;`.
pub fn write_noise_ground_truth<W: Write>(mut out: W, rows: &[(usize, Vec<usize>)]) -> std::io::Result<()> {
    writeln!(out, "sample_index,corrupted_dims")?;
    for (i, dims) in rows {
        let joined: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
        writeln!(out, "{i},{}", joined.join(";"))?;
    }
    Ok(())
}
