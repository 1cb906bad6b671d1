//! Data-adaptive wavelet frames and bi-frames on periodic lattices.
//!
//! `no_std` with `alloc`. File formats, reports and the command line live in
//! the `adaframe` crate.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bank;
pub mod error;
pub mod generators;
pub mod learn;
pub mod linalg;
pub mod multilevel;
pub mod patches;
pub mod pipelines;
pub mod prox;
pub mod signal;
pub mod solvers;
pub mod transform;
pub mod uep;
pub mod wavelets;

pub use bank::{BankKind, CoeffSet, FilterBank, Role};
pub use error::{Error, Result};
pub use signal::{Filter, SamplingMatrix, Signal, MAX_DIMS};
