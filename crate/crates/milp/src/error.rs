use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("invalid bounds [{lb}, {ub}] for variable `{var}`")]
    BadBounds { var: String, lb: f64, ub: f64 },
    #[error("row `{row}` references unknown column {col}")]
    UnknownColumn { row: String, col: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("SOS1 set `{set}` contains non-binary variable `{var}`")]
    SosNotBinary { set: String, var: String },
    #[error("unknown variable names in solution file ({count} total): {first:?}")]
    UnknownNames { count: usize, first: Vec<String> },
    #[error("solution file line {line}: {msg}")]
    SolutionSyntax { line: usize, msg: String },
    #[error("imported solution infeasible: {0}")]
    Infeasible(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for MilpError {
    fn from(e: std::io::Error) -> Self {
        MilpError::Io(e.to_string())
    }
}
