//! Sparse LP/MILP engine: model representation, bounded revised simplex,
//! best-first branch and bound over binary columns, and LP-file interchange.

mod error;
pub mod lpfile;
mod lu;
mod model;
mod simplex;
mod solve;

pub use error::MilpError;
pub use lpfile::{export_lp_file, import_solution_file, read_solution, sanitize, to_lp_string, unsanitize};
pub use model::{
    Constraint, MilpModel, ModelStats, RowId, Sense, Sos1, VarId, VarKind, Variable, Violation,
};
pub use simplex::{DualityAudit, FEAS_TOL};
pub use solve::{
    gap_percent, solve_lp, solve_lp_limited, solve_milp, MilpLimits, MilpSolution, SolveStatus,
    INTEGRALITY_TOL,
};
