pub mod error;
pub mod geometry;
mod lp;
pub mod maxent;
pub mod approximator;
pub mod baselines;
pub mod bench;
pub mod cli;
pub mod formats;
pub mod dynamics;

pub use error::{Error, Result};
