use thiserror::Error;

use crate::model::{BranchId, BusId};

/// Errors produced by parsing, validation and the analysis pipeline.
#[derive(Debug, Error)]
pub enum GridError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate bus id {0}")]
    DuplicateBus(BusId),

    #[error("duplicate branch id {0}")]
    DuplicateBranch(BranchId),

    #[error("branch {branch} references unknown bus {bus}")]
    UnknownBus { branch: BranchId, bus: BusId },

    #[error("self-loop branch {0}: from and to bus are the same")]
    SelfLoopBranch(BranchId),

    #[error("branch {0} has zero reactance")]
    ZeroReactance(BranchId),

    #[error("branch {0} has non-positive rating")]
    InvalidRating(BranchId),

    #[error("generator at bus {bus}: {message}")]
    InvalidGenerator { bus: BusId, message: String },

    #[error("generator at bus {bus}: rebalanced output {output:.3} MW exceeds maximum {max:.3} MW")]
    GeneratorLimit { bus: BusId, output: f64, max: f64 },

    #[error("no slack bus designated")]
    MissingSlack,

    #[error("slack bus {0} is not in the bus table")]
    UnknownSlack(BusId),

    #[error("invalid scale factor {0}: factors must be positive and finite")]
    InvalidScaleFactor(f64),

    #[error("load scale override references unknown bus {0}")]
    UnknownOverrideBus(BusId),

    #[error("base power must be positive, got {0}")]
    InvalidBasePower(f64),

    #[error("network is split into {islands} islands; the analyzed island must contain every bus")]
    Disconnected { islands: usize },

    #[error("susceptance system is singular: {0}")]
    SingularSystem(String),

    #[error("outage of branch {0} would island the network")]
    IslandingOutage(BranchId),

    #[error("branch {0} is out of service")]
    BranchOutOfService(BranchId),

    #[error("unknown branch {0}")]
    UnknownBranch(BranchId),

    #[error("monitor set references out-of-service branch {0}")]
    MonitorOutOfService(BranchId),

    #[error("no contingencies evaluated: every outage column is invalid")]
    NoContingencies,

    #[error("candidate budget must be at least 1")]
    EmptyBudget,

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, GridError>;
