//! Simulation and analysis of a driven cavity-QED system under continuous
//! homodyne monitoring: stochastic master equation trajectories, strong-driving
//! steady states, and the closed-form rates of information gain about the
//! quantum state (∝ sin²φ) and about the atom-cavity coupling (∝ cos²φ).

pub mod bayes;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod hilbert;
pub mod info_rates;
pub mod output;
pub mod stats;
pub mod steady_state;

pub use error::{Error, Result};
