//! Configuration, runners and output plumbing behind the `ldlab` binary.

pub mod config;
pub mod output;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use output::{OutDir, Summary};
pub use pipeline::RunOptions;
