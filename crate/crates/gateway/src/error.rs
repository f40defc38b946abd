use mcs_core::engine::EngineError;
use mcs_core::scenario::ScenarioError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("malformed input: {0}")]
    Input(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("replay diverged: {0}")]
    ReplayMismatch(String),
    #[error("no active run")]
    Unavailable,
}

impl GatewayError {
    /// Stable machine-readable tag used in CLI diagnostics and API errors.
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::Config(_) => "invalid_config",
            GatewayError::Input(_) => "invalid_input",
            GatewayError::Engine(EngineError::InvalidConfig(_)) => "invalid_config",
            GatewayError::Engine(EngineError::InvalidPack(_)) => "invalid_input",
            GatewayError::Engine(_) => "engine_error",
            GatewayError::Scenario(_) => "invalid_input",
            GatewayError::Io(_) => "io_error",
            GatewayError::Json(_) => "invalid_input",
            GatewayError::ReplayMismatch(_) => "replay_mismatch",
            GatewayError::Unavailable => "unavailable",
        }
    }

    /// Process exit status: 2 for bad configuration or input, 3 for a
    /// replay that did not reproduce, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self.code() {
            "invalid_config" | "invalid_input" => 2,
            "replay_mismatch" => 3,
            _ => 1,
        }
    }
}
