//! Path-dependent stochastic optimal control on path space.

pub mod bench;
pub mod bsde;
pub mod calculus;
pub mod control;
pub mod error;
pub mod path;
pub mod problems;
pub mod regression;
pub mod rng;
pub mod sde;
pub mod shjb;
pub mod stats;
pub mod viscosity;

pub use error::{Error, Result};
pub use path::{DiscretePath, HolderBallSpec};
