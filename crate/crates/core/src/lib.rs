//! Gibbs max-margin supervised topic models.
//!
//! Binary classification, regression and multi-task classifiers are trained
//! by collapsed Gibbs sampling over an augmented posterior: the hinge (or
//! epsilon-insensitive) loss is written as a scale mixture of Gaussians, so
//! every conditional is a standard distribution (Gaussian for the weights,
//! multinomial for topic assignments, inverse Gaussian for the augmentation
//! variables).

pub mod baseline;
pub mod binary;
pub mod corpus;
mod error;
pub mod metrics;
pub mod multitask;
pub mod oracle;
pub mod persistence;
pub mod posterior;
pub mod predict;
pub mod randkit;
pub mod regression;
pub mod synthetic;
pub mod topic_state;

pub use error::{Error, Result};
