//! Leveraged weighted (LW) losses for partial label learning.
//!
//! The crate is organized bottom-up:
//!
//! - [`labelset`] and [`labelgen`]: candidate label sets and the label-specific
//!   generation model that produces them from supervised labels.
//! - [`losses`]: binary losses, the LW partial loss and its special cases, and
//!   the supervised losses the LW loss is compared against.
//! - [`weights`]: per-instance weighting parameters and their restricted-softmax
//!   refresh.
//! - [`model`] and [`train`]: linear / MLP score functions with hand-written
//!   backpropagation, SGD with momentum, and the iterative training loop.
//! - [`consistency`]: exhaustive-enumeration checks of the risk identities.
//! - [`data`]: IDX and CSV ingestion, synthetic Gaussian tasks, splitting.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); probabilities used
//! by the enumeration checks are generic over [`Field`], so they can also be
//! evaluated in exact rational arithmetic.

pub mod consistency;
pub mod data;
pub mod error;
pub mod labelgen;
pub mod labelset;
pub mod losses;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod train;
pub mod weights;

pub use error::{Error, Result};
pub use labelset::PartialLabelSet;
pub use scalar::{Field, NeumaierSum, Scalar};

/// Double-precision network, the default for experiments.
pub type Network = model::Network<f64>;
/// Single-precision network.
pub type Network32 = model::Network<f32>;
/// Double-precision LW configuration.
pub type LwConfig = losses::LwConfig<f64>;
/// Double-precision dataset.
pub type Dataset = data::Dataset<f64>;
/// Double-precision weight state.
pub type WeightState = weights::WeightState<f64>;
/// Double-precision trainer configuration.
pub type TrainerConfig = train::TrainerConfig<f64>;
/// Generation model with `f64` inclusion probabilities.
pub type GenerationModel = labelgen::GenerationModel<f64>;
