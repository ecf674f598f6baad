//! Class-wise ensembling of object detectors.
//!
//! A pool of detectors is evaluated per class, the per-class AP matrix is
//! ranked, and for every class the detectors close enough to the best one
//! are pooled and suppressed with Soft-NMS. The crate also carries the AP
//! evaluation, a whole-model greedy baseline, a synthetic pool generator and
//! the file formats used by the `roe` binary.

pub mod baseline;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod experts;
pub mod formats;
pub mod model;
pub mod pipeline;
pub mod suppression;
pub mod synth;

pub use error::{Error, Result};
pub use evaluation::{ApMode, ApReport, EvalConfig, RankingMatrix};
pub use experts::{EnsembleOutput, ExpertSelection, RankedMatrix};
pub use model::{
    BoundingBox, Detection, DetectionSet, GroundTruthBox, GroundTruthDataset, PoolManifest,
};
pub use suppression::{SuppressionConfig, SuppressionMethod};
