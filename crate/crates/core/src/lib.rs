//! Set-estimator classifiers built on adaptive dyadic partitions of `[0,1]^d`.
//!
//! The pipeline is: build an [`OccupancyForest`] from labeled samples, run the
//! budgeted energy dynamic program ([`dp::compute_energy`] or, with
//! hyperplane-decorated leaves, [`decorate::decorated_energy`]) once for all
//! split budgets, then pick a budget by hold-out model selection
//! ([`select::select_model`]). Synthetic distributions with known Bayes sets
//! live in [`oracle`] and are used to measure excess risk.

pub mod decorate;
pub mod dp;
pub mod empirical;
mod error;
pub mod experiment;
pub mod forest;
pub mod geometry;
pub mod io;
pub mod oracle;
pub mod select;

pub use crate::empirical::{Dataset, LabeledSample, SetClassifier};
pub use crate::error::{Error, Result};
pub use crate::forest::{CompleteTree, OccupancyForest, StoppingRule};
pub use crate::geometry::{DyadicCube, HCell, Hyperplane, Point, Side};
pub use crate::oracle::DistributionOracle;
pub use crate::select::{Algorithm, SelectionReport};
