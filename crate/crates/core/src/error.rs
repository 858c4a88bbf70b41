use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("spawn failed after {attempts} attempts: {what}")]
    SpawnFailure { attempts: usize, what: String },
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("invalid mpc config: {0}")]
    MpcConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
