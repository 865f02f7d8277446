//! File formats, configuration and run orchestration around `chgnn-core`.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod report;
pub mod run;
pub mod splits;

pub use config::{load_config, TrainConfig};
pub use data::{load_dataset, Dataset, DatasetFile};
pub use error::{CliError, Result};
pub use run::Metrics;
