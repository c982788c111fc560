use std::fmt;

use cfsim_core::builders::BuildError;
use cfsim_core::circuit::CircuitError;
use cfsim_core::dsl::DslError;
use cfsim_core::protocols::ProtocolError;
use cfsim_core::statespace::StateError;
use cfsim_core::tsvf::TsvfError;

/// Error with its process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Parse errors, bad flags, unknown names, empty ranges.
    Usage(String),
    /// A numeric invariant did not hold.
    Numeric(String),
    /// Post-selection on a zero-amplitude outcome.
    Undefined(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Numeric(_) => 3,
            Self::Undefined(_) => 4,
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Self::Usage(msg.to_string())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Numeric(m) | Self::Undefined(m) => f.write_str(m),
        }
    }
}

impl From<DslError> for Failure {
    fn from(e: DslError) -> Self {
        Self::Usage(e.to_string())
    }
}

impl From<StateError> for Failure {
    fn from(e: StateError) -> Self {
        match e {
            StateError::NotNormalized(_) => Self::Numeric(e.to_string()),
            StateError::EmptyBranch { .. } => Self::Undefined(e.to_string()),
            _ => Self::Usage(e.to_string()),
        }
    }
}

impl From<CircuitError> for Failure {
    fn from(e: CircuitError) -> Self {
        match e {
            CircuitError::State(s) => s.into(),
            e => Self::Usage(e.to_string()),
        }
    }
}

impl From<BuildError> for Failure {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Circuit(c) => c.into(),
            e => Self::Usage(e.to_string()),
        }
    }
}

impl From<TsvfError> for Failure {
    fn from(e: TsvfError) -> Self {
        match e {
            TsvfError::Circuit(c) => c.into(),
            TsvfError::State(s) => s.into(),
            e @ TsvfError::UndefinedWeakValues { .. } => Self::Undefined(e.to_string()),
            e => Self::Usage(e.to_string()),
        }
    }
}

impl From<ProtocolError> for Failure {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Build(b) => b.into(),
            ProtocolError::Circuit(c) => c.into(),
            ProtocolError::State(s) => s.into(),
            ProtocolError::Tsvf(t) => t.into(),
            e @ ProtocolError::EmptyBranch { .. } => Self::Undefined(e.to_string()),
            e => Self::Usage(e.to_string()),
        }
    }
}
