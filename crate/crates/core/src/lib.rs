//! Contrastive semi-supervised learning on hypergraphs.
//!
//! The crate is `no_std` (with `alloc`) and carries every numeric piece of
//! the model: hypergraph structural analytics, a small tape-based
//! reverse-mode differentiator, the adaptive view generator, the
//! homogeneity-weighted encoder, the joint loss with adaptive temperatures,
//! and a single-threaded training step. File formats, configuration files
//! and the command-line driver live in the companion `chgnn` crate.

#![no_std]

extern crate alloc;

pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod hypergraph;
pub mod losses;
pub mod model;
pub mod optim;
pub mod params;
pub mod rng;
pub mod sparse;
pub mod synthetic;
pub mod tensor;
pub mod viewgen;

pub use error::{Error, Result};
pub use hypergraph::{Hypergraph, SplitSpec, StructuralStats};
pub use losses::{LossReport, LossWeights, TemperatureConfig, TemperatureState};
pub use model::{ModelConfig, ModelState, OptimConfig};
pub use params::ParamStore;
pub use rng::RngState;
pub use tensor::{Matrix, Tape, Var};
