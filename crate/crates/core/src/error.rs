use crate::mdp::{ActionId, StateId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),

    #[error("state {state} is out of range (num_states = {num_states})")]
    InvalidState { state: StateId, num_states: usize },

    #[error("action {action} is not legal in state {state}")]
    IllegalAction { state: StateId, action: ActionId },

    #[error("cannot step from terminal state {state}; reset the environment first")]
    TerminalStep { state: StateId },

    #[error("state {given} does not match the environment's current state {current}")]
    StateMismatch { given: StateId, current: StateId },

    #[error("non-finite update target {value} at ({state}, {action})")]
    NonFiniteTarget {
        state: StateId,
        action: ActionId,
        value: f64,
    },

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error(
        "reward for ({state}, {action}) is not deterministic: stored {stored}, observed {observed}"
    )]
    RewardConflict {
        state: StateId,
        action: ActionId,
        stored: f64,
        observed: f64,
    },

    #[error("update event does not match this learner: {0}")]
    WrongEvent(&'static str),

    #[error("replay buffer holds {size} transitions, batch needs {batch}")]
    UnderfilledBuffer { size: usize, batch: usize },

    #[error("forward cache is stale: network changed since the forward pass")]
    StaleCache,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupt artifact: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl std::fmt::Display, found: impl std::fmt::Display) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
