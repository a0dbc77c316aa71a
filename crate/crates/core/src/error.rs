use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {}", join_violations(.0))]
    InvalidParams(Vec<Violation>),

    #[error("busy count {busy} exceeds group size {group}")]
    CountOutOfRange { busy: usize, group: usize },

    #[error("fusion threshold {threshold} outside [1, {group}]")]
    ThresholdOutOfRange { threshold: usize, group: usize },

    #[error("attacker count {attackers} outside [1, {max}]")]
    AttackersOutOfRange { attackers: usize, max: usize },

    #[error("inconsistent state or profile: {0}")]
    Inconsistent(String),

    #[error("{0} requires Case.NT")]
    RequiresNonAggressive(&'static str),

    #[error("honest and dishonest long-term rewards do not cross on (0, 1)")]
    NoCrossing,

    #[error("no finite punishment removes every attack")]
    NoFiniteThreshold,

    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
