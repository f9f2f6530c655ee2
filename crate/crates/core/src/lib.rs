//! Compound-Poisson approximation of pure-jump Lévy processes and of BSDEs
//! driven by them, with Monte Carlo machinery for measuring convergence rates.

pub mod error;
pub mod levy_measures;
pub mod path_sim;
pub mod bsde_solver;
pub mod config;
pub mod quad;
pub mod rates;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use levy_measures::{AtomRule, LevyModel, Moment};
