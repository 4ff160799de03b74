//! Map matching of sparse GPS trajectories with a chain CRF over alternating
//! point states (candidate road segments) and path states (routes between
//! consecutive candidates), trained by regularized maximum likelihood with
//! ℓ1 feature selection.
//!
//! The numeric core ([`crf`], [`optim`], [`training`]) is generic over
//! [`Scalar`] (`f32` or `f64`); geometry and features are computed in `f64`.
//!
//! ```no_run
//! use crfmatch::{synth, experiment, lattice::LatticeConfig, optim::OptimOptions, Model64};
//!
//! let net = synth::generate_network(&synth::WorldSpec::default())?;
//! let trips = synth::generate_dataset(
//!     &net,
//!     &synth::BehaviorSpec::default(),
//!     &synth::NoiseSpec::default(),
//!     &synth::TripSpec::default(),
//! )?;
//! let run = experiment::run_protocol::<f64>(
//!     &net,
//!     &trips,
//!     &LatticeConfig::default(),
//!     &experiment::FeatureConfig::default(),
//!     &experiment::SplitConfig::default(),
//!     &experiment::SweepConfig::default(),
//!     &OptimOptions::default(),
//! )?;
//! let model: &Model64 = &run.l1_model;
//! println!("{} nonzero weights", model.nonzero());
//! # Ok::<(), crfmatch::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod crf;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod geometry;
pub mod lattice;
pub mod network;
pub mod optim;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod training;
pub mod trajectory;

pub use error::{Error, LatticeSite, Result};
pub use network::{RoadNetwork, SegmentId};
pub use scalar::Scalar;
pub use training::Model;
pub use trajectory::{GpsObservation, GroundTruth, Trajectory};

pub type Model64 = training::Model<f64>;
pub type Model32 = training::Model<f32>;
pub type Potentials64 = crf::Potentials<f64>;
pub type Potentials32 = crf::Potentials<f32>;
pub type TrainingExample64 = crf::TrainingExample<f64>;
pub type TrainingExample32 = crf::TrainingExample<f32>;
