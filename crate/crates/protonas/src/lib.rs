//! File formats, configuration, parallel evaluation and the `protonas` command
//! line on top of `protonas-core`.

use std::path::PathBuf;

pub mod cli;
pub mod config;
pub mod formats;
pub mod parallel;
pub mod pipeline;

pub use config::{ResolvedRun, RunConfig};
pub use parallel::ParallelEvaluator;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, #[source] std::io::Error),
    #[error("{path}: {message}", path = .0.display(), message = .1)]
    Format(PathBuf, String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}
