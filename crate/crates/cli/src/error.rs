use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Process exit codes, one per error family.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const MISSING_FILE: i32 = 3;
    pub const FORMAT: i32 = 4;
    pub const CONFIG: i32 = 5;
    pub const SEGMENTATION_MISMATCH: i32 = 6;
    pub const IO: i32 = 7;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing input: {0}")]
    MissingFile(PathBuf),
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("config: {0}")]
    Config(String),
    #[error("segmentation mismatch: model trained on {model}s segments, test set uses {data}s")]
    SegmentationMismatch { model: u32, data: u32 },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MissingFile(_) => exit::MISSING_FILE,
            CliError::Format { .. } => exit::FORMAT,
            CliError::Config(_) => exit::CONFIG,
            CliError::SegmentationMismatch { .. } => exit::SEGMENTATION_MISMATCH,
            CliError::Io { .. } => exit::IO,
            CliError::Other(_) => exit::OTHER,
        }
    }

    pub fn format(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        }
    }

    pub fn other(e: impl std::fmt::Display) -> Self {
        CliError::Other(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| io_err(path, source))
}

pub fn read_text(path: &Path) -> Result<String> {
    let bytes = read(path)?;
    String::from_utf8(bytes).map_err(|e| CliError::format(path, e))
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| io_err(dir, source))?;
    }
    std::fs::write(path, bytes).map_err(|source| io_err(path, source))
}

pub fn io_err(path: &Path, source: io::Error) -> CliError {
    if source.kind() == io::ErrorKind::NotFound {
        CliError::MissingFile(path.to_path_buf())
    } else {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
