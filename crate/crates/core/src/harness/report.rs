use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::Mode;
use super::metrics::mean_std;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub l1: f64,
    pub precision: f64,
    pub xent: f64,
    pub detection: f64,
}

impl Metrics {
    fn fields(&self) -> [f64; 4] {
        [self.l1, self.precision, self.xent, self.detection]
    }

    fn from_fields(f: [f64; 4]) -> Self {
        Metrics {
            l1: f[0],
            precision: f[1],
            xent: f[2],
            detection: f[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.fields().iter().all(|v| v.is_finite())
    }
}

/// Metrics of one (mode, snr, repetition) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mode: Mode,
    pub snr: f64,
    pub rep: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mode: Mode,
    pub snr: f64,
    pub count: usize,
    pub mean: Metrics,
    pub std: Metrics,
}

/// What was trained in one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionInfo {
    pub rep: usize,
    pub rows_used: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub trees_trained: usize,
    pub trees_kept: usize,
    /// Average normalized cross-entropy of the trained forest, before selection.
    pub entropy_before: Option<f64>,
    /// The same over the kept trees.
    pub entropy_after: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub dataset: String,
    pub cells: Vec<Cell>,
    pub repetitions: Vec<RepetitionInfo>,
}

impl Report {
    /// Mean and standard deviation per (mode, snr), in first-seen order.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut keys: Vec<(Mode, f64)> = Vec::new();
        for c in &self.cells {
            if !keys.iter().any(|&(m, s)| m == c.mode && s == c.snr) {
                keys.push((c.mode, c.snr));
            }
        }
        keys.into_iter()
            .map(|(mode, snr)| {
                let group: Vec<&Cell> = self.cells.iter().filter(|c| c.mode == mode && c.snr == snr).collect();
                let mut mean = [0.0; 4];
                let mut std = [0.0; 4];
                for i in 0..4 {
                    let vals: Vec<f64> = group.iter().map(|c| c.metrics.fields()[i]).collect();
                    (mean[i], std[i]) = mean_std(&vals);
                }
                Aggregate {
                    mode,
                    snr,
                    count: group.len(),
                    mean: Metrics::from_fields(mean),
                    std: Metrics::from_fields(std),
                }
            })
            .collect()
    }

    pub fn mean(&self, mode: Mode, snr: f64) -> Option<Metrics> {
        self.aggregates()
            .into_iter()
            .find(|a| a.mode == mode && a.snr == snr)
            .map(|a| a.mean)
    }

    pub fn merge(&mut self, other: Report) {
        self.cells.extend(other.cells);
        self.repetitions.extend(other.repetitions);
    }

    /// `mode,snr,rep,l1,precision,xent,detection`; per-repetition rows
    /// followed by `mean` and `std` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "mode,snr,rep,l1,precision,xent,detection")?;
        let row = |out: &mut W, mode: Mode, snr: f64, rep: &str, m: &Metrics| {
            writeln!(
                out,
                "{mode},{snr},{rep},{},{},{},{}",
                m.l1, m.precision, m.xent, m.detection
            )
        };
        for c in &self.cells {
            row(&mut out, c.mode, c.snr, &c.rep.to_string(), &c.metrics)?;
        }
        for a in self.aggregates() {
            row(&mut out, a.mode, a.snr, "mean", &a.mean)?;
            row(&mut out, a.mode, a.snr, "std", &a.std)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(mode: Mode, snr: f64, rep: usize, l1: f64) -> Cell {
        Cell {
            mode,
            snr,
            rep,
            metrics: Metrics {
                l1,
                precision: 1.0,
                xent: 0.0,
                detection: 0.5,
            },
        }
    }

    #[test]
    fn aggregates_recompute_from_cells() {
        let report = Report {
            dataset: "x".into(),
            cells: vec![
                cell(Mode::Plain, 0.0, 0, 0.1),
                cell(Mode::Plain, 0.0, 1, 0.3),
                cell(Mode::Multipath, 0.0, 0, 0.2),
            ],
            repetitions: vec![],
        };
        let agg = report.aggregates();
        assert_eq!(agg.len(), 2);
        assert!((agg[0].mean.l1 - 0.2).abs() < 1e-15);
        assert!((agg[0].std.l1 - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(agg[1].std.l1, 0.0);
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "mode,snr,rep,l1,precision,xent,detection");
        assert_eq!(lines[1], "plain,0,0,0.1,1,0,0.5");
        assert_eq!(lines.len(), 1 + 3 + 4);
        assert!(lines[4].starts_with("plain,0,mean,"));
    }
}
