//! Reading and writing configs, profiles, traces and benchmark tables, plus
//! trace comparison metrics.

mod config;
mod metrics;
mod tables;

pub use config::{load_config, load_config_with_seed, parse_config, to_json, write_config};
pub use metrics::{compare_traces, interpolate_linear, max_abs_error, mse, CellComparison, MetricsError};
pub use tables::{
    load_profile, parse_profile, read_trace, trace_header, write_benchmark, write_comparison, write_trace,
    TraceTable,
};

use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: schema error at `{field}`: {message}")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("{path}: invalid configuration: {message}")]
    Validation { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Table { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Profile {
        path: PathBuf,
        #[source]
        source: crate::sim::ProfileError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl IoError {
    fn fs(path: &Path, source: std::io::Error) -> Self {
        Self::Fs {
            path: path.to_path_buf(),
            source,
        }
    }

    fn table(path: &Path, message: impl Into<String>) -> Self {
        Self::Table {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}
