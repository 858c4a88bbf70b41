use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarlError {
    #[error(transparent)]
    Sim(#[from] safenav_core::SimError),
    #[error(transparent)]
    Nn(#[from] safenav_nn::NnError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = MarlError> = std::result::Result<T, E>;
