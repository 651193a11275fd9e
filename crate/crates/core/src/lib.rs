//! Order-k stochastic duality for one-dimensional Markov generators.

pub mod cli;
pub mod config;
pub mod duality;
pub mod error;
pub mod evolution;
pub mod expr;
pub mod fractional;
pub mod grid;
pub mod model;
pub mod montecarlo;
pub mod options;
pub mod report;

pub use error::{Error, Result};
pub use grid::{Grid, GridFn, Sampling};
