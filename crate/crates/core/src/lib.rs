//! Bayesian persuasion under ex ante and ex post constraints.

pub mod auction;
pub mod constraints;
pub mod error;
pub mod fixtures;
pub mod geometry;
mod linalg;
pub mod lp;
pub mod model;
pub mod objectives;
mod polytope;
pub mod solver;

pub use error::{Error, Result};
pub use model::*;
