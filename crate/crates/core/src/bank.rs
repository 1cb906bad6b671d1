use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::signal::{Filter, SamplingMatrix, Signal};

/// Tap sums at or below this magnitude count as zero when roles are inferred.
pub const ROLE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Lowpass,
    Highpass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankKind {
    Frame,
    BiframeDecomp,
    BiframeRecon,
}

/// `m` filters sharing one support, applied with one sampling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    filters: Vec<Filter>,
    sampling: SamplingMatrix,
    roles: Vec<Role>,
    kind: BankKind,
    lowpass_constrained: bool,
}

impl FilterBank {
    /// Roles are inferred from tap sums: nonzero mean means lowpass.
    pub fn new(filters: Vec<Filter>, sampling: SamplingMatrix, kind: BankKind) -> Result<Self> {
        let first = filters
            .first()
            .ok_or_else(|| Error::InvalidInput("filter bank needs at least one filter".into()))?;
        for f in &filters[1..] {
            if f.support() != first.support() || f.channel_support() != first.channel_support() {
                return Err(Error::DimensionMismatch(format!(
                    "filters must share support: {:?} vs {:?}",
                    first.support(),
                    f.support()
                )));
            }
        }
        if sampling.ndim() != first.ndim() {
            return Err(Error::DimensionMismatch(format!(
                "sampling matrix has {} axes, filters have {}",
                sampling.ndim(),
                first.ndim()
            )));
        }
        let roles = filters
            .iter()
            .map(|f| {
                if f.tap_sum().abs() > ROLE_TOLERANCE {
                    Role::Lowpass
                } else {
                    Role::Highpass
                }
            })
            .collect();
        Ok(FilterBank {
            filters,
            sampling,
            roles,
            kind,
            lowpass_constrained: false,
        })
    }

    pub fn with_roles(mut self, roles: Vec<Role>) -> Result<Self> {
        if roles.len() != self.filters.len() {
            return Err(Error::ArityMismatch {
                expected: self.filters.len(),
                found: roles.len(),
            });
        }
        self.roles = roles;
        Ok(self)
    }

    pub fn with_kind(mut self, kind: BankKind) -> Self {
        self.kind = kind;
        self
    }

    /// Flag the bank as lowpass-constrained: filter 0 lowpass, the rest highpass.
    pub fn mark_lowpass_constrained(mut self) -> Self {
        self.lowpass_constrained = true;
        self.roles = (0..self.filters.len())
            .map(|i| if i == 0 { Role::Lowpass } else { Role::Highpass })
            .collect();
        self
    }

    pub fn m(&self) -> usize {
        self.filters.len()
    }

    pub fn filters(&self) -> &[Filter] {
        &self.filters
    }

    pub fn filter(&self, l: usize) -> &Filter {
        &self.filters[l]
    }

    pub fn sampling(&self) -> &SamplingMatrix {
        &self.sampling
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn kind(&self) -> BankKind {
        self.kind
    }

    pub fn lowpass_constrained(&self) -> bool {
        self.lowpass_constrained
    }

    pub fn support(&self) -> &[usize] {
        self.filters[0].support()
    }

    pub fn channel_support(&self) -> usize {
        self.filters[0].channel_support()
    }

    pub fn ndim(&self) -> usize {
        self.filters[0].ndim()
    }

    /// Taps per filter, channel axis included.
    pub fn taps_per_filter(&self) -> usize {
        self.filters[0].taps().len()
    }

    /// Support with the channel axis prepended when present.
    pub fn full_support(&self) -> Vec<usize> {
        self.filters[0].full_support()
    }

    /// Sampling with the channel axis prepended; a fully connected channel axis
    /// is decimated by its own length.
    pub fn full_sampling(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.sampling.ndim() + 1);
        if self.channel_support() > 0 {
            s.push(self.channel_support());
        }
        s.extend_from_slice(self.sampling.diag());
        s
    }

    /// `|det M|` of the full sampling lattice (channel axis included).
    pub fn lattice_det(&self) -> usize {
        self.full_sampling().iter().product()
    }

    /// True when filter 0 is the only lowpass filter.
    pub fn has_single_leading_lowpass(&self) -> bool {
        self.roles.first() == Some(&Role::Lowpass)
            && self.roles[1..].iter().all(|r| *r == Role::Highpass)
    }

    /// Taps as a `taps_per_filter x m` matrix, one filter per column.
    pub fn tap_matrix(&self) -> Matrix {
        let r = self.taps_per_filter();
        let mut mat = Matrix::zeros(r, self.m());
        for (l, f) in self.filters.iter().enumerate() {
            for (p, &t) in f.taps().iter().enumerate() {
                mat[(p, l)] = t;
            }
        }
        mat
    }

    /// Same geometry as `self`, taps taken from the columns of `taps`.
    pub fn with_tap_matrix(&self, taps: &Matrix) -> Result<FilterBank> {
        if taps.rows() != self.taps_per_filter() || taps.cols() != self.m() {
            return Err(Error::DimensionMismatch(format!(
                "tap matrix is {}x{}, bank needs {}x{}",
                taps.rows(),
                taps.cols(),
                self.taps_per_filter(),
                self.m()
            )));
        }
        let filters = (0..self.m())
            .map(|l| {
                Filter::with_channels(
                    self.support().to_vec(),
                    self.channel_support(),
                    taps.col(l),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut bank = FilterBank::new(filters, self.sampling.clone(), self.kind)?;
        if self.lowpass_constrained {
            bank = bank.mark_lowpass_constrained();
        }
        Ok(bank)
    }

    /// All taps, filter-major.
    pub fn flat_taps(&self) -> Vec<f64> {
        self.filters.iter().flat_map(|f| f.taps().iter().copied()).collect()
    }

    /// Same geometry, taps from a filter-major vector.
    pub fn with_flat_taps(&self, taps: &[f64]) -> Result<FilterBank> {
        let r = self.taps_per_filter();
        if taps.len() != r * self.m() {
            return Err(Error::DimensionMismatch(format!(
                "{} taps supplied, bank needs {}",
                taps.len(),
                r * self.m()
            )));
        }
        let mut mat = Matrix::zeros(r, self.m());
        for l in 0..self.m() {
            for p in 0..r {
                mat[(p, l)] = taps[l * r + p];
            }
        }
        self.with_tap_matrix(&mat)
    }

    pub fn frobenius_distance(&self, other: &FilterBank) -> f64 {
        libm::sqrt(
            self.flat_taps()
                .iter()
                .zip(other.flat_taps())
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        )
    }

    /// Tensor-product bank of a 1D bank with itself in `dims` dimensions.
    ///
    /// Filter order is row-major over the factor indices, so the product of
    /// the 1D lowpass filters comes first.
    pub fn tensor_power(&self, dims: usize) -> Result<FilterBank> {
        if self.ndim() != 1 || self.channel_support() != 0 {
            return Err(Error::UnsupportedCase("tensor power of a scalar 1D bank only"));
        }
        if dims == 1 {
            return Ok(self.clone());
        }
        let m = self.m();
        let count = m.pow(dims as u32);
        let mut filters = Vec::with_capacity(count);
        let mut idx = alloc::vec![0usize; dims];
        for flat in 0..count {
            crate::signal::unravel(flat, &alloc::vec![m; dims], &mut idx);
            let factors: Vec<&Filter> = idx.iter().map(|&i| &self.filters[i]).collect();
            filters.push(Filter::tensor(&factors)?);
        }
        let sampling = SamplingMatrix::uniform(dims, self.sampling.diag()[0])?;
        FilterBank::new(filters, sampling, self.kind)
    }
}

/// The `m` coefficient maps of a one-level decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSet {
    pub maps: Vec<Signal>,
}

impl CoeffSet {
    pub fn new(maps: Vec<Signal>) -> Self {
        CoeffSet { maps }
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn l1_norm(&self) -> f64 {
        self.maps.iter().map(Signal::l1_norm).sum()
    }

    pub fn energy(&self) -> f64 {
        self.maps.iter().map(Signal::energy).sum()
    }

    /// Stack the maps as channels of a single signal.
    pub fn into_channels(self) -> Result<Signal> {
        let first = self
            .maps
            .first()
            .ok_or_else(|| Error::InvalidInput("empty coefficient set".into()))?;
        let shape = first.shape().to_vec();
        let channels = self.maps.len();
        let mut data = Vec::with_capacity(first.data().len() * channels);
        for map in &self.maps {
            if map.shape() != shape.as_slice() || map.channels() != 0 {
                return Err(Error::ShapeMismatch {
                    left: shape,
                    right: map.shape().to_vec(),
                });
            }
            data.extend_from_slice(map.data());
        }
        Signal::with_channels(shape, channels, data)
    }

    /// Split a multi-channel signal into scalar maps.
    pub fn from_channels(signal: &Signal) -> CoeffSet {
        let shape = signal.shape().to_vec();
        let maps = (0..signal.channels().max(1))
            .map(|c| {
                let data = if signal.channels() == 0 {
                    signal.data().to_vec()
                } else {
                    signal.channel(c).to_vec()
                };
                Signal::from_parts_unchecked(shape.clone(), 0, data)
            })
            .collect();
        CoeffSet { maps }
    }
}
