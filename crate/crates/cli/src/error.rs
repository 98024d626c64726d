//! Failure classes and their exit codes.

use std::fmt;

use roadfield_core::Error as CoreError;

#[derive(Debug)]
pub enum Failure {
    /// Bad or inconsistent configuration (exit 1).
    Config(anyhow::Error),
    /// A solver gave up (exit 2).
    Solver(anyhow::Error),
    /// One or more properties of the verify suite failed (exit 3).
    Property { failed: Vec<String> },
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Solver(_) => 2,
            Failure::Property { .. } => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Failure::Config(anyhow::anyhow!(msg.into()))
    }

    /// Classifies a core error, prefixing `context`.
    pub fn from_core(e: CoreError, context: impl fmt::Display) -> Self {
        let config = is_config_error(&e);
        let err = anyhow::Error::new(e).context(context.to_string());
        if config {
            Failure::Config(err)
        } else {
            Failure::Solver(err)
        }
    }
}

/// Errors the user fixes by editing the config.
pub fn is_config_error(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::InvalidModel { .. }
            | CoreError::InvalidGrid(_)
            | CoreError::Domain(_)
            | CoreError::TimeStep { .. }
            | CoreError::DriftGuard { .. }
            | CoreError::WindowTooSmall { .. }
    )
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "config error: {e:#}"),
            Failure::Solver(e) => write!(f, "solver failure: {e:#}"),
            Failure::Property { failed } => write!(f, "property failures: {}", failed.join(", ")),
        }
    }
}

impl std::error::Error for Failure {}

/// `anyhow` errors from config handling are configuration errors, unless they
/// wrap a core error of the solver class.
impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<CoreError>() {
            Some(core) if !is_config_error(core) => Failure::Solver(e),
            _ => Failure::Config(e),
        }
    }
}
