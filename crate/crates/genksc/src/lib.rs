//! File formats, checkpoints and the command line front end for
//! [`genksc_core`].
//!
//! * [`idx`]: IDX image/label containers (MNIST, FashionMNIST).
//! * [`grid`]: traversal grids as binary PGM or PNG.
//! * [`config`]: flat `key = value` run configuration.
//! * [`report`]: line-based training reports.
//! * [`checkpoint`]: versioned binary training state.
//! * [`cli`]: the `genksc` subcommands.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod grid;
pub mod idx;
pub mod report;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{0}")]
    Io(String),
    #[error("truncated {0}")]
    Truncated(String),
    #[error("bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("unsupported checkpoint version {found}, this build reads version {supported}")]
    Version { found: u32, supported: u32 },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] genksc_core::Error),
}
