//! Laboratory for studying how label smoothing interacts with knowledge
//! distillation on small dense networks.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which the experiment harness and all
//! file formats use.

// NaN-rejecting `!(x > y)` checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod binio;
pub mod error;
pub mod features;
pub mod geometry;
pub mod harness;
pub mod matrix;
pub mod nn;
pub mod objectives;
pub mod projection;
pub mod scalar;
pub mod smoothness;
pub mod synth;

pub use error::{LabError, Result};
pub use scalar::Scalar;

pub type Matrix = matrix::Matrix<f64>;
pub type Network = nn::NetworkParams<f64>;
pub type Layer = nn::DenseLayer<f64>;
pub type Trace = nn::ForwardTrace<f64>;
pub type Grads = nn::Gradients<f64>;
pub type Dataset = synth::LabeledDataset<f64>;
pub type Features = geometry::FeatureMatrix<f64>;
pub type Centroids = geometry::ClassCentroids<f64>;
pub type Distribution = objectives::SoftDistribution<f64>;
pub type Basis = projection::ProjectionBasis<f64>;
pub type Panel = projection::Projected2D<f64>;
pub type Profile = smoothness::SoftOutputProfile<f64>;
