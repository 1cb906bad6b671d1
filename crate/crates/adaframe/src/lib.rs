//! File formats, experiment runners and the command line for `adaframe-core`.

pub mod adf1;
pub mod bankfile;
pub mod cli;
pub mod error;
pub mod pgm;
pub mod recovery;
pub mod report;

pub use adaframe_core as core;
pub use error::{Error, Result};
