//! Timed aesthetic states: the experience script.
//!
//! A [`StateSequence`] is a versioned JSON document listing states, each a
//! duration plus an assignment of registered hyperparameters. A
//! [`StateMachine`] walks one or more sequences in order, driven by the
//! session tick, and accepts facilitator commands (hold, resume, skip and
//! live overrides).

mod machine;
mod registry;
mod sequence;

pub use machine::{MachineCommand, MachineEvent, MachineMode, ScheduledState, StateMachine};
pub use registry::{ParamDef, ParamRegistry, ParamSpec, ParamValue};
pub use sequence::{
    parse_sequence, reference_sequences, AestheticState, Phase, StateSequence, SEQUENCE_VERSION,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("document is not valid UTF-8")]
    Encoding,
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("sequence version {found} not supported (expected {expected})")]
    VersionMismatch { found: i64, expected: u32 },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("unregistered parameter {0:?}")]
    UnregisteredParameter(String),
    #[error("parameter {key:?}: {reason}")]
    OutOfRange { key: String, reason: String },
    #[error("invalid registry: {0}")]
    Registry(String),
    #[error("the state sequence has finished")]
    Finished,
    #[error("no states to run")]
    Empty,
}
