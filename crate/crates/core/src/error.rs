use cddp_milp::MilpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CddpError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("projection error at parameter {h}, scenario {omega}: {msg}")]
    Projection { h: usize, omega: usize, msg: String },
    #[error("member rejected: {0}")]
    Rejected(String),
    #[error("transport rebalance error: {0}")]
    Rebalance(String),
    #[error("model build error: {0}")]
    Build(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("oracle refused: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CddpError>;
