//! Word embeddings with graph-Laplacian priors.
//!
//! Word vectors (`rho`) and context vectors (`alpha`) are estimated by MAP
//! under a negative-sampling likelihood (CBOW or skip-gram) and a Gaussian
//! prior whose precision is `lambda1 * L + lambda0 * I` for the Laplacian `L`
//! of a user-supplied graph over the vectors. Chains over timesteps, complete
//! graphs over groups, translation pairs and dictionary pairs all fit this
//! form.
//!
//! The `parallel` feature (on by default) enables data-parallel gradient
//! shards; results are bit-identical for every thread count.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod export;
pub mod graph;
pub mod model;
pub mod par;
pub mod synth;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
