//! File formats, experiment config, output writing and the thread-pool
//! executor for [`fedlab_core`]. The `fedlab` binary wraps these.

pub mod compare;
pub mod config;
mod error;
pub mod exec;
pub mod format;
pub mod run;

pub use error::{FormatError, Result, RunError};
