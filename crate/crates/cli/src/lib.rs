//! Command-line pipeline: simulate → parse → preprocess → segment → train → eval → report.

pub mod config;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod report;

pub use config::Config;
pub use error::{CliError, Result};
pub use pipeline::{Ctx, Method};
