//! Simulator, training engine and social-dilemma analyzer for the InvestESG
//! climate-investment Markov game.

pub mod config;
pub mod dilemma;
pub mod env;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod training;

pub use config::{Algorithm, EnvConfig, TrainConfig};
pub use env::{EnvState, InvestEsgEnv, JointAction, StepOutcome};
pub use error::{Error, Result};
