//! Denoising random forests.
//!
//! A regression forest whose test-time predictions are hardened against
//! corrupted input features. Each sample's traversal through the forest is
//! encoded as an indicator vector over tree nodes; a denoising autoencoder
//! trained on clean/noisy pairs of those vectors recovers the path a clean
//! sample would have taken. Decision nodes where the original and recovered
//! paths diverge are flagged, and the final estimate averages over every
//! path through the flagged nodes with weight `2^-k` for a path crossing `k`
//! flags.
//!
//! The pipeline, bottom up:
//!
//! - [`data`]: CSV ingestion, min-max scaling, overlap-controlled bootstrap
//!   subsets and mean-replacement noise.
//! - [`forest`]: SSE-reduction regression trees and their JSON form.
//! - [`treeselect`]: per-tree entropy / cross-entropy and low-entropy tree selection.
//! - [`indicator`]: binary and distance-weighted indicator vectors per depth.
//! - [`dae`]: the one-hidden-layer denoising autoencoder.
//! - [`recovery`]: DAE-driven path recovery and decision-node flagging.
//! - [`multipath`]: weighted multi-path estimation.
//! - [`harness`]: metrics, experiment orchestration and reports.

pub mod dae;
pub mod data;
pub mod error;
pub mod forest;
pub mod harness;
pub mod indicator;
pub mod multipath;
pub mod recovery;
pub mod seed;
pub mod treeselect;

pub use dae::{DaeStack, DenoisingAutoencoder, TrainConfig};
pub use data::{Dataset, MinMaxScaler, NoiseSpec, SubsetPlan};
pub use error::{Error, Result};
pub use forest::{Forest, ForestConfig, Node, NodeKind, TraversalPath, Tree};
pub use indicator::{IndicatorLayout, IndicatorVector};
pub use multipath::{PathSet, WeightedPath};
pub use recovery::FlagReport;
pub use treeselect::EntropyReport;
