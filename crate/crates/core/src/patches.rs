//! Patch matrices: `W_A x` as a matrix product.
//!
//! For a bank geometry (full support, full sampling) the patch matrix `X` of
//! a batch has one row per output sample (all signals, all positions) and one
//! column per tap, so that the coefficient maps of filter `l` are column `l`
//! of `X · taps`, where `taps` is the bank's [`FilterBank::tap_matrix`].

use alloc::vec::Vec;

use crate::bank::FilterBank;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::signal::{divisible, Signal};
use crate::transform::sweep;

#[derive(Debug, Clone)]
pub struct Patches {
    pub x: Matrix,
    /// `Xᵀ X`.
    pub gram: Matrix,
    /// Output map shape of each signal in the batch.
    pub map_shapes: Vec<Vec<usize>>,
}

impl Patches {
    /// Patches for filters with the geometry of `bank`.
    pub fn new(batch: &[Signal], bank: &FilterBank) -> Result<Patches> {
        let support = bank.full_support();
        let step = bank.full_sampling();
        let n_taps: usize = support.iter().product();
        let mut rows = 0;
        let mut map_shapes = Vec::with_capacity(batch.len());
        for v in batch {
            if v.channels() != bank.channel_support() {
                return Err(Error::ChannelMismatch {
                    signal: v.channels(),
                    filter: bank.channel_support(),
                });
            }
            if v.ndim() != bank.ndim() {
                return Err(Error::DimensionMismatch(alloc::format!(
                    "signal {:?} vs {}-dimensional filters",
                    v.shape(),
                    bank.ndim()
                )));
            }
            if !divisible(v.shape(), bank.sampling().diag()) {
                return Err(Error::ShapeNotDivisible {
                    shape: v.shape().to_vec(),
                    factor: bank.sampling().diag().to_vec(),
                });
            }
            let shape: Vec<usize> = v
                .shape()
                .iter()
                .zip(bank.sampling().diag())
                .map(|(s, m)| s / m)
                .collect();
            rows += shape.iter().product::<usize>();
            map_shapes.push(shape);
        }
        if rows == 0 {
            return Err(Error::InvalidInput("empty training batch".into()));
        }
        let mut x = Matrix::zeros(rows, n_taps);
        let mut offset = 0;
        for (v, shape) in batch.iter().zip(&map_shapes) {
            let data = v.data();
            let cols = n_taps;
            let xd = x.data_mut();
            sweep(&v.full_shape(), &step, &support, |tap, row, base, last| {
                for (j, &off) in last.iter().enumerate() {
                    xd[(offset + row + j) * cols + tap] = data[base + off];
                }
            });
            offset += shape.iter().product::<usize>();
        }
        let gram = x.gram();
        Ok(Patches {
            x,
            gram,
            map_shapes,
        })
    }

    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    /// `X A` for an `R x m` tap matrix.
    pub fn apply(&self, taps: &Matrix) -> Matrix {
        self.x.matmul(taps)
    }

    /// `Xᵀ T` for a `rows x m` matrix.
    pub fn apply_t(&self, t: &Matrix) -> Matrix {
        self.x.tr_matmul(t)
    }
}

/// `Σ |entries|`.
pub fn l1(m: &Matrix) -> f64 {
    m.data().iter().map(|v| v.abs()).sum()
}
