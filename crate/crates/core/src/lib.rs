//! Streaming mixture modelling for per-voxel feature vectors.
//!
//! Two families are supported: Gaussian mixtures and mixtures of
//! multiple-scaled Student t (MST) distributions, whose density factorizes
//! along a per-component orthonormal basis with one degrees-of-freedom
//! parameter per axis. Models are fitted by online EM over a single pass of a
//! sample stream; a batch EM reference implementation is included for
//! comparison. Fitted models score observations with a proximity measure used
//! for anomaly detection.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the matrix algebra they implement.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod special;
pub mod linalg;
pub mod mixture;
pub mod stats;
pub mod estep;
pub mod mstep;
pub mod batch;
pub mod online;
pub mod scoring;
pub mod selection;
pub mod datagen;
pub mod source;
pub mod fvs1;
pub mod model_io;
pub mod bench;

pub use error::{Error, Result};
pub use mixture::{Dataset, Family, GaussianComponent, MixtureModel, MstComponent};
pub use online::{fit_stream, init_state, EmConfig, EmState, FitReport, LearningRateSchedule};
pub use source::SampleSource;
pub use stats::SufficientStats;
