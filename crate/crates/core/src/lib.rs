//! Desk-scale toolkit for studying how hard an example looks to a neural
//! classifier.
//!
//! The crate provides an angular hardness score computed from the angles
//! between an embedding and the rows of a bias-free final layer, a small
//! deterministic MLP trainer to produce those embeddings, synthetic Gaussian
//! datasets with exact oracle posteriors, rank-correlation statistics with
//! significance tests, per-epoch training-dynamics tables, and two
//! class-balanced self-training solvers (softmax-thresholded and
//! angular-thresholded).
//!
//! Everything is seeded and bit-reproducible: the same inputs and seeds give
//! byte-identical artifacts on every run.

// Validation deliberately writes `!(x > 0.0)` and friends: the negated form
// is true for NaN, which is exactly what the checks must catch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod selftrain;
pub mod stats;
pub mod synthdata;
pub mod tinynet;

pub use dynamics::{BinVariable, DynamicsTable, EpochRecord};
pub use error::{AvhError, Result};
pub use geometry::{ClassifierWeights, HardnessReport, SweepPoint};
pub use selftrain::{PortionSchedule, PseudoLabels, RoundStats, SelfTrainMode};
pub use stats::{BinTable, ComparisonReport, CorrMethod, CorrelationReport};
pub use synthdata::{DegradationSpec, DomainPair, LabeledDataset, MixtureParams};
pub use tinynet::{LossKind, Model, ModelSpec, TrainConfig};
