//! Batch front end: generation, single edits and parameter sweeps that write
//! PNG images, job JSON side files and CSV metrics.

pub mod args;
mod commands;
pub mod sweep;

use std::path::{Path, PathBuf};

pub use args::Cli;
pub use commands::run;

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Engine(#[from] brush_core::Error),
    #[error("cannot {action} {}: {source}", path.display())]
    File {
        action: &'static str,
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{failed} of {total} sweep cells failed")]
    Partial { failed: usize, total: usize },
}

fn is_backend(e: &brush_core::Error) -> bool {
    use brush_core::Error;
    match e {
        Error::Backend { .. } | Error::Timeout | Error::Protocol(_) => true,
        Error::InRun { source, .. } => is_backend(source),
        _ => false,
    }
}

impl CliError {
    /// 0 success, 1 partial sweep failure, 2 usage or validation, 3 backend
    /// or output failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Partial { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::Engine(e) if is_backend(e) => 3,
            CliError::Engine(_) => 2,
            CliError::File { action, .. } if *action == "read" => 2,
            CliError::File { .. } => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::File {
        action: "read",
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|source| CliError::File {
        action: "write",
        path: path.to_path_buf(),
        source,
    })
}

/// `c,h,w` → shape.
pub fn parse_shape(text: &str) -> CliResult<brush_core::Shape> {
    let dims: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("shape: expected `c,h,w`, got `{text}`")))?;
    match dims[..] {
        [c, h, w] => Ok(brush_core::Shape::new(c, h, w)?),
        _ => Err(CliError::Usage(format!(
            "shape: expected `c,h,w`, got `{text}`"
        ))),
    }
}
