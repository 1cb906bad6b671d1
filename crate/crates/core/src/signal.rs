//! Periodic arrays, finitely supported filters and diagonal sampling matrices.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Largest number of spatial axes. Three is reserved for channel-stacked images.
pub const MAX_DIMS: usize = 3;

fn check_shape(shape: &[usize], what: &str) -> Result<()> {
    if shape.is_empty() || shape.len() > MAX_DIMS {
        return Err(Error::InvalidInput(format!(
            "{what} must have 1..={MAX_DIMS} axes, got {}",
            shape.len()
        )));
    }
    if shape.contains(&0) {
        return Err(Error::InvalidInput(format!("{what} {shape:?} has a zero axis")));
    }
    Ok(())
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!(
            "{what} has a non-finite value at {i}"
        ))),
        None => Ok(()),
    }
}

/// A real d-dimensional signal with periodic boundary and an optional channel axis.
///
/// Data is row-major; with channels the layout is planar (channel-major), so
/// `data[c * spatial_len + i]` is sample `i` of channel `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    shape: Vec<usize>,
    channels: usize,
    data: Vec<f64>,
}

impl Signal {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        Self::with_channels(shape, 0, data)
    }

    /// `channels == 0` means a scalar signal.
    pub fn with_channels(shape: Vec<usize>, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(&shape, "signal shape")?;
        let expected = shape.iter().product::<usize>() * channels.max(1);
        if data.len() != expected {
            return Err(Error::InvalidInput(format!(
                "signal data has {} values, shape {shape:?} x {channels} channels needs {expected}",
                data.len()
            )));
        }
        check_finite(&data, "signal")?;
        Ok(Signal {
            shape,
            channels,
            data,
        })
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        Self::zeros_with_channels(shape, 0)
    }

    pub fn zeros_with_channels(shape: Vec<usize>, channels: usize) -> Self {
        let n = shape.iter().product::<usize>() * channels.max(1);
        Signal {
            shape,
            channels,
            data: vec![0.0; n],
        }
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(
            data.len(),
            shape.iter().product::<usize>() * channels.max(1)
        );
        Signal {
            shape,
            channels,
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of samples per channel.
    pub fn spatial_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.spatial_len();
        &self.data[c * n..(c + 1) * n]
    }

    /// Shape with the channel axis prepended when present.
    pub fn full_shape(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.shape.len() + 1);
        if self.channels > 0 {
            s.push(self.channels);
        }
        s.extend_from_slice(&self.shape);
        s
    }

    /// Reinterpret the channel axis as a leading spatial axis (channel-stacked signal).
    pub fn stack_channels(self) -> Result<Signal> {
        if self.channels == 0 {
            return Ok(self);
        }
        let shape = self.full_shape();
        check_shape(&shape, "stacked signal shape")?;
        Ok(Signal {
            shape,
            channels: 0,
            data: self.data,
        })
    }

    /// Inverse of [`Signal::stack_channels`]: the leading axis becomes the channel axis.
    pub fn unstack_channels(self) -> Result<Signal> {
        if self.channels != 0 || self.shape.len() < 2 {
            return Err(Error::UnsupportedCase(
                "unstacking needs a scalar signal with at least two axes",
            ));
        }
        let channels = self.shape[0];
        Ok(Signal {
            shape: self.shape[1..].to_vec(),
            channels,
            data: self.data,
        })
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Signal {
        Signal {
            shape: self.shape.clone(),
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_geometry(&self, other: &Signal) -> bool {
        self.shape == other.shape && self.channels == other.channels
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs_diff(&self, other: &Signal) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A finitely supported real filter on `{0..r_1-1} x ... x {0..r_d-1}`.
///
/// With `channel_support > 0` the filter is fully connected across that many
/// input channels; taps are stored channel-major like [`Signal`] data.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    support: Vec<usize>,
    channel_support: usize,
    taps: Vec<f64>,
}

impl Filter {
    pub fn new(support: Vec<usize>, taps: Vec<f64>) -> Result<Self> {
        Self::with_channels(support, 0, taps)
    }

    pub fn with_channels(support: Vec<usize>, channel_support: usize, taps: Vec<f64>) -> Result<Self> {
        check_shape(&support, "filter support")?;
        let expected = support.iter().product::<usize>() * channel_support.max(1);
        if taps.len() != expected {
            return Err(Error::InvalidInput(format!(
                "filter has {} taps, support {support:?} x {channel_support} channels needs {expected}",
                taps.len()
            )));
        }
        check_finite(&taps, "filter")?;
        Ok(Filter {
            support,
            channel_support,
            taps,
        })
    }

    /// 1D filter from its taps.
    pub fn from_taps(taps: &[f64]) -> Result<Self> {
        Self::new(vec![taps.len()], taps.to_vec())
    }

    pub fn delta(support: Vec<usize>) -> Self {
        let n = support.iter().product();
        let mut taps = vec![0.0; n];
        taps[0] = 1.0;
        Filter {
            support,
            channel_support: 0,
            taps,
        }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn channel_support(&self) -> usize {
        self.channel_support
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn taps_mut(&mut self) -> &mut [f64] {
        &mut self.taps
    }

    pub fn ndim(&self) -> usize {
        self.support.len()
    }

    /// Support with the channel axis prepended when present.
    pub fn full_support(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.support.len() + 1);
        if self.channel_support > 0 {
            s.push(self.channel_support);
        }
        s.extend_from_slice(&self.support);
        s
    }

    /// `â(0)`.
    pub fn tap_sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.taps.iter().map(|t| t * t).sum())
    }

    /// Taps reversed along every axis (the channel axis included).
    pub fn reversed(&self) -> Filter {
        let mut taps = self.taps.clone();
        taps.reverse();
        Filter {
            support: self.support.clone(),
            channel_support: self.channel_support,
            taps,
        }
    }

    /// Outer product of 1D filters, first factor varying slowest.
    pub fn tensor(factors: &[&Filter]) -> Result<Filter> {
        if factors.is_empty() || factors.iter().any(|f| f.ndim() != 1 || f.channel_support != 0) {
            return Err(Error::UnsupportedCase("tensor product of scalar 1D filters only"));
        }
        let mut support = Vec::new();
        let mut taps = vec![1.0];
        for f in factors {
            support.push(f.taps.len());
            let mut next = Vec::with_capacity(taps.len() * f.taps.len());
            for &a in &taps {
                for &b in &f.taps {
                    next.push(a * b);
                }
            }
            taps = next;
        }
        Filter::new(support, taps)
    }
}

/// Diagonal sampling matrix `M = Diag(M_1, ..., M_d)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SamplingMatrix(Vec<usize>);

impl SamplingMatrix {
    pub fn new(diag: Vec<usize>) -> Result<Self> {
        if diag.is_empty() || diag.len() > MAX_DIMS || diag.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "sampling diagonal {diag:?} must have 1..={MAX_DIMS} entries, all >= 1"
            )));
        }
        Ok(SamplingMatrix(diag))
    }

    pub fn uniform(dims: usize, factor: usize) -> Result<Self> {
        Self::new(vec![factor; dims])
    }

    pub fn identity(dims: usize) -> Self {
        SamplingMatrix(vec![1; dims])
    }

    pub fn diag(&self) -> &[usize] {
        &self.0
    }

    pub fn ndim(&self) -> usize {
        self.0.len()
    }

    /// `|det M|`.
    pub fn det(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&m| m == 1)
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Flat index to multi-index (row-major).
pub(crate) fn unravel(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for i in (0..shape.len()).rev() {
        out[i] = flat % shape[i];
        flat /= shape[i];
    }
}

pub(crate) fn divisible(shape: &[usize], factor: &[usize]) -> bool {
    shape.len() == factor.len() && shape.iter().zip(factor).all(|(s, m)| s % m == 0)
}
