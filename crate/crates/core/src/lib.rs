//! Collaborative spectrum sensing under cooperative data-falsification
//! attacks: posteriors, fusion, attacker best responses, punishment
//! thresholds, an MDP solver and a Monte Carlo simulator.

pub mod cli;
pub mod config;
pub mod direct;
pub mod error;
pub mod fusion;
pub mod indirect;
pub mod logmath;
pub mod mdp;
pub mod model;
pub mod oneshot;
pub mod posterior;
pub mod report;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use model::{CooperationCase, HeteroParams, ScenarioParams, TransmissionCase};
