use std::io;

/// Errors of the file formats and the command line.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported maxval {0}, only 255 is read")]
    UnsupportedMaxval(u32),
    #[error("bad filter bank file: {0}")]
    BankFile(String),
    #[error(transparent)]
    Core(#[from] adaframe_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
