//! Lookahead-weighted identification of linear dynamical operators.
//!
//! Fits time-invariant, switching, decomposed and time-varying linear models
//! by penalizing multi-step reconstruction error, alongside one-step and
//! rollout-refit baselines.

pub mod benchmarks;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod predict;
pub mod rng;
mod serde_mat;
pub mod solvers;
pub mod series;
pub mod synth;
pub mod weights;

pub use error::{Error, Result};
pub use model::{DecomposedModel, Dynamics, LinearModel, Model, SwitchingModel, TimeVaryingModel};
pub use predict::{PredictionMode, PredictionRequest, Rollout};
pub use series::TimeSeries;
