//! Discrete-event semiconductor fab simulation with learned lot dispatching.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: static fab descriptions (Minifab builder, model files, due dates)
//! * [`sim`]: the discrete-event engine and the [`sim::Dispatcher`] interface
//! * [`heuristics`]: FIFO, CR, SRPT, SPT, EDD and the hierarchical composite
//! * [`kpi`]: tardiness/throughput accounting, ES costs and PPO rewards
//! * [`policy`]: lot featurization, running normalization and the attention
//!   scoring network
//! * [`cmaes`]: the CMA-ES optimizer
//! * [`ppo`]: the PPO trainer
//! * [`harness`]: experiment orchestration, worker pool and CSV output

pub mod cmaes;
pub mod error;
pub mod harness;
pub mod heuristics;
pub mod kpi;
pub mod model;
pub mod policy;
pub mod ppo;
pub mod sim;

pub use error::{Error, Result};
