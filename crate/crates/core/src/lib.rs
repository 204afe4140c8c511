//! Restricted Boltzmann machines trained against the entropy-smoothed
//! Wasserstein distance.
//!
//! The crate is organised around the pipeline it implements:
//!
//! * [`dataset`] turns MNIST / PLANTS raw files into split binary datasets.
//! * [`rbm`] holds the model, its free energy and conditionals, and the
//!   persistent Gibbs chains used to sample from it.
//! * [`ot`] solves the smoothed transport problem between two empirical
//!   measures on bit-vectors and extracts the centered dual potential.
//! * [`training`] combines the KL and Wasserstein gradients into the
//!   two-phase optimisation and the hyperparameter grid.
//! * [`evaluation`] estimates log-partition functions by annealed importance
//!   sampling, KL and smoothed Wasserstein scores, and PCA projections.
//! * [`tasks`] scores models on completion and denoising by exact
//!   enumeration of the reconstructions.

pub mod bits;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod math;
pub mod ot;
pub mod rbm;
pub mod tasks;
pub mod training;

pub use bits::BitVector;
pub use dataset::{BinaryDataset, GrayImage, Split};
pub use error::{Error, Result};
pub use evaluation::{AisEstimate, PcaProjection};
pub use ot::{CostSpec, EmpiricalMeasure, TransportPlanDual};
pub use rbm::{GibbsState, PcdSample, RbmParams};
pub use tasks::{MaskSpec, ScorableModel, TaskReport};
pub use training::{GradStats, Lambda, TrainConfig, TrainedModel};
