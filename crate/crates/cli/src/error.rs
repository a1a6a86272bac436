use syntax_smc::inference::InferenceError;
use syntax_smc::lm::remote::BridgeError;
use thiserror::Error;

/// Exit status 2: bad input or configuration.
pub const EXIT_INPUT: i32 = 2;
/// Exit status 3: the remote model could not be reached or misbehaved.
pub const EXIT_REMOTE: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("remote model: {0}")]
    Remote(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Remote(_) => EXIT_REMOTE,
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

macro_rules! input_errors {
    ($($t:ty),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        })*
    };
}

input_errors!(
    std::io::Error,
    serde_json::Error,
    syntax_smc::tree::TreeError,
    syntax_smc::tetratag::CodecError,
    syntax_smc::lm::LmError,
    syntax_smc::grammar::GrammarError,
    syntax_smc::taggers::TaggerError,
    syntax_smc::proposals::ProposalError,
    syntax_smc::oracle::OracleError,
    syntax_smc::metrics::MetricsError,
);

impl From<BridgeError> for CliError {
    fn from(e: BridgeError) -> Self {
        CliError::Remote(e.to_string())
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Remote(_) | InferenceError::BoundaryUndetected(_) => {
                CliError::Remote(e.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

/// Attaches a path to an I/O failure.
pub fn read(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}
