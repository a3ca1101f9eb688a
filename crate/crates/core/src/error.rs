use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("numerical divergence at t = {t} s (dt = {dt} s): {detail}")]
    NumericalDivergence { t: f64, dt: f64, detail: String },

    #[error("unknown target `{0}`")]
    UnknownTarget(String),

    #[error("singular network: {0}")]
    SingularNetwork(String),

    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:e})")]
    PowerFlowDiverged { iterations: usize, mismatch: f64 },

    #[error("initialization failed: {0}")]
    InitFailure(String),

    #[error("comparison window is empty")]
    EmptyWindow,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl SimError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::UnknownTarget(_) => 2,
            SimError::NumericalDivergence { .. } => 3,
            SimError::Io(_) => 4,
            _ => 1,
        }
    }

    /// Short machine-readable category name.
    pub fn category(&self) -> &'static str {
        match self {
            SimError::NumericalDivergence { .. } => "numerical_divergence",
            SimError::UnknownTarget(_) => "unknown_target",
            SimError::SingularNetwork(_) => "singular_network",
            SimError::PowerFlowDiverged { .. } => "power_flow_diverged",
            SimError::InitFailure(_) => "init_failure",
            SimError::EmptyWindow => "empty_window",
            SimError::Config(_) => "config",
            SimError::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
