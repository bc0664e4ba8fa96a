//! Experiment orchestration: dataset ingestion, event simulation,
//! under-reporting and noise sweeps, forward smoke runs and comparison
//! against reference curves.

pub mod compare;
pub mod config;
mod error;
pub mod ingest;
pub mod io;
pub mod pipeline;
pub mod smoke;
pub mod sweep;

pub use error::{Error, Result};

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const INVARIANT: i32 = 2;
}
