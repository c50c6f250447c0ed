//! Two-stage distributionally robust cross-dock door design: instances,
//! ambiguity sets, model builders, decomposition bounds and a brute-force
//! oracle.

pub mod ambiguity;
pub mod bounds;
pub mod error;
pub mod fixtures;
pub mod generator;
pub mod instance;
pub mod models;
pub mod oracle;
pub mod par;
pub mod report;
pub mod rng;
pub mod stats;

pub use error::{CddpError, Result};
