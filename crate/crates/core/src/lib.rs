//! Loss estimators for multilabel classification when positive labels go
//! missing independently with known per-label propensities.

pub mod binary;
pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod labels;
pub mod multilabel;
pub mod numeric;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod propensity;
pub mod simulate;
pub mod train;

pub use binary::{BinaryLoss, BinaryVariant, Variant};
pub use data::{Example, SparseDataset};
pub use error::{Error, Result};
pub use labels::{apply_mask, indicator_vector, Propensities, ScoreVector, SparseLabels};
pub use multilabel::{MulticlassLoss, Reduction, ReductionKind, UpperBoundForm};
pub use train::{LinearModel, TrainConfig};
