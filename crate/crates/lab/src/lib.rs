//! Configuration, parallel ensembles, file formats and experiment drivers
//! on top of `rotor-core`; the `rotorlab` binary is a thin shell over this.

pub mod config;
pub mod experiments;
pub mod json;
pub mod output;

/// Errors surfaced by the command line. `Usage` and `Config` map to exit
/// code 2; `Fail` and `Compute` to 1.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("check failed: {0}")]
    Fail(String),
    #[error("computation failed: {0}")]
    Compute(String),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Usage(_) | LabError::Config(_) => 2,
            LabError::Io(_) | LabError::Fail(_) | LabError::Compute(_) => 1,
        }
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}
