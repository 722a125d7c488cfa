//! Parameter sweeps for stochastic simulations: plan the cartesian product
//! of parameter values × replications, run it locally or as a SLURM array
//! job, then reduce the replications to quantile bands and grid views.

pub mod aggregate;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod plan;
pub mod pool;
pub mod refmodel;
pub mod report;
pub mod runner;
pub mod scalar;
pub mod slurm;

pub use error::{Error, Result};
pub use scalar::{Assignment, Scalar};
