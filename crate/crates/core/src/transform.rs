//! Sampling, transition and subdivision operators and the one-level transform.
//!
//! All convolutions are periodic. Filters are indexed from 0, so
//! `transition` computes `out(n) = Σ_k v(k) a(k - Mn)` (correlation form) and
//! `subdivision` computes `out(n) = |det M| Σ_k w(k) b(n - Mk)`.
//!
//! A channel axis is handled as one more leading axis whose sampling factor is
//! the channel count, so a filter with `channel_support = C` sums over all
//! channels and its lattice determinant includes the factor `C`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::bank::{BankKind, CoeffSet, FilterBank};
use crate::error::{Error, Result};
use crate::signal::{divisible, strides, unravel, Filter, SamplingMatrix, Signal};

/// Visit every (tap, coarse row) pair of a periodic lattice.
///
/// `visit(tap, coarse_row_start, fine_base, last_axis_offsets)`: the fine
/// sample hit by coarse index `coarse_row_start + j` and tap `tap` lives at
/// `fine_base + last_axis_offsets[j]`.
pub(crate) fn sweep(
    fine: &[usize],
    step: &[usize],
    support: &[usize],
    mut visit: impl FnMut(usize, usize, usize, &[usize]),
) {
    let d = fine.len();
    let coarse: Vec<usize> = fine.iter().zip(step).map(|(f, s)| f / s).collect();
    let fstr = strides(fine);
    let mut tables: Vec<Vec<usize>> = coarse.iter().map(|&c| vec![0; c]).collect();
    let ntaps: usize = support.iter().product();
    let outer_shape = &coarse[..d - 1];
    let outer: usize = outer_shape.iter().product();
    let last_len = coarse[d - 1];
    let mut p = vec![0; d];
    let mut idx = vec![0; d - 1];
    for tap in 0..ntaps {
        unravel(tap, support, &mut p);
        for i in 0..d {
            for (n, t) in tables[i].iter_mut().enumerate() {
                *t = ((step[i] * n + p[i]) % fine[i]) * fstr[i];
            }
        }
        for o in 0..outer {
            unravel(o, outer_shape, &mut idx);
            let base: usize = idx.iter().enumerate().map(|(i, &k)| tables[i][k]).sum();
            visit(tap, o * last_len, base, &tables[d - 1]);
        }
    }
}

fn with_channel_axis(channels: usize, rest: &[usize]) -> Vec<usize> {
    let mut v = Vec::with_capacity(rest.len() + 1);
    if channels > 0 {
        v.push(channels);
    }
    v.extend_from_slice(rest);
    v
}

/// `[v ↓_M](n) = v(Mn)`, applied per channel.
pub fn downsample(v: &Signal, m: &SamplingMatrix) -> Result<Signal> {
    if !divisible(v.shape(), m.diag()) {
        return Err(Error::ShapeNotDivisible {
            shape: v.shape().to_vec(),
            factor: m.diag().to_vec(),
        });
    }
    let out_shape: Vec<usize> = v.shape().iter().zip(m.diag()).map(|(s, f)| s / f).collect();
    let n_out: usize = out_shape.iter().product();
    let in_str = strides(v.shape());
    let mut idx = vec![0; out_shape.len()];
    let mut data = Vec::with_capacity(n_out * v.channels().max(1));
    for c in 0..v.channels().max(1) {
        let chan = if v.channels() == 0 { v.data() } else { v.channel(c) };
        for o in 0..n_out {
            unravel(o, &out_shape, &mut idx);
            let flat: usize = (0..idx.len()).map(|i| idx[i] * m.diag()[i] * in_str[i]).sum();
            data.push(chan[flat]);
        }
    }
    Ok(Signal::from_parts_unchecked(out_shape, v.channels(), data))
}

/// Zero-filling upsampling: `out(Mk) = v(k)`, zero elsewhere.
pub fn upsample(v: &Signal, m: &SamplingMatrix) -> Result<Signal> {
    if v.ndim() != m.ndim() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "signal has {} axes, sampling matrix {}",
            v.ndim(),
            m.ndim()
        )));
    }
    let out_shape: Vec<usize> = v.shape().iter().zip(m.diag()).map(|(s, f)| s * f).collect();
    let n_in = v.spatial_len();
    let n_out: usize = out_shape.iter().product();
    let out_str = strides(&out_shape);
    let mut idx = vec![0; out_shape.len()];
    let mut data = vec![0.0; n_out * v.channels().max(1)];
    for c in 0..v.channels().max(1) {
        let chan = if v.channels() == 0 { v.data() } else { v.channel(c) };
        for (k, &val) in chan.iter().enumerate().take(n_in) {
            unravel(k, v.shape(), &mut idx);
            let flat: usize = (0..idx.len()).map(|i| idx[i] * m.diag()[i] * out_str[i]).sum();
            data[c * n_out + flat] = val;
        }
    }
    Ok(Signal::from_parts_unchecked(out_shape, v.channels(), data))
}

/// Transition operator `(T_{a,M} v)(n) = Σ_k v(k) a(k - Mn)`, periodic in `k`.
pub fn transition(v: &Signal, a: &Filter, m: &SamplingMatrix) -> Result<Signal> {
    if v.channels() != a.channel_support() {
        return Err(Error::ChannelMismatch {
            signal: v.channels(),
            filter: a.channel_support(),
        });
    }
    if v.ndim() != a.ndim() || m.ndim() != v.ndim() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "signal {:?}, filter support {:?}, sampling {:?}",
            v.shape(),
            a.support(),
            m.diag()
        )));
    }
    if !divisible(v.shape(), m.diag()) {
        return Err(Error::ShapeNotDivisible {
            shape: v.shape().to_vec(),
            factor: m.diag().to_vec(),
        });
    }
    let fine = v.full_shape();
    let step = with_channel_axis(v.channels(), m.diag());
    let support = a.full_support();
    let out_shape: Vec<usize> = v.shape().iter().zip(m.diag()).map(|(s, f)| s / f).collect();
    let mut out = vec![0.0; out_shape.iter().product()];
    let taps = a.taps();
    let data = v.data();
    sweep(&fine, &step, &support, |tap, row, base, last| {
        let w = taps[tap];
        if w == 0.0 {
            return;
        }
        for (o, &off) in out[row..row + last.len()].iter_mut().zip(last) {
            *o += w * data[base + off];
        }
    });
    Ok(Signal::from_parts_unchecked(out_shape, 0, out))
}

/// Subdivision operator `(S_{b,M} w)(n) = |det M| Σ_k w(k) b(n - Mk)`, periodic in `n`.
///
/// A filter with channel support `C` yields a `C`-channel output and the
/// determinant includes the factor `C`.
pub fn subdivision(w: &Signal, b: &Filter, m: &SamplingMatrix) -> Result<Signal> {
    if w.channels() != 0 {
        return Err(Error::ChannelMismatch {
            signal: w.channels(),
            filter: 0,
        });
    }
    if w.ndim() != b.ndim() || m.ndim() != w.ndim() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "coefficients {:?}, filter support {:?}, sampling {:?}",
            w.shape(),
            b.support(),
            m.diag()
        )));
    }
    let channels = b.channel_support();
    let out_shape: Vec<usize> = w.shape().iter().zip(m.diag()).map(|(s, f)| s * f).collect();
    let fine = with_channel_axis(channels, &out_shape);
    let step = with_channel_axis(channels, m.diag());
    let det = (m.det() * channels.max(1)) as f64;
    let support = b.full_support();
    let mut out = vec![0.0; fine.iter().product()];
    let taps = b.taps();
    let coeffs = w.data();
    sweep(&fine, &step, &support, |tap, row, base, last| {
        let wb = det * taps[tap];
        if wb == 0.0 {
            return;
        }
        for (&c, &off) in coeffs[row..row + last.len()].iter().zip(last) {
            out[base + off] += wb * c;
        }
    });
    Ok(Signal::from_parts_unchecked(out_shape, channels, out))
}

/// One-level decomposition `W_A v = {T_{a_1} v, ..., T_{a_m} v}`.
pub fn decompose(v: &Signal, bank: &FilterBank) -> Result<CoeffSet> {
    let maps = bank
        .filters()
        .iter()
        .map(|a| transition(v, a, bank.sampling()))
        .collect::<Result<Vec<_>>>()?;
    Ok(CoeffSet::new(maps))
}

/// One-level reconstruction `R_B(v_1..v_m) = Σ_l S_{b_l} v_l`.
pub fn reconstruct(coeffs: &CoeffSet, bank: &FilterBank) -> Result<Signal> {
    if coeffs.len() != bank.m() {
        return Err(Error::ArityMismatch {
            expected: bank.m(),
            found: coeffs.len(),
        });
    }
    let first_shape = coeffs.maps[0].shape();
    if coeffs.maps.iter().any(|c| c.shape() != first_shape) {
        return Err(Error::DimensionMismatch(
            "coefficient maps have different shapes".into(),
        ));
    }
    let mut acc: Option<Signal> = None;
    for (w, b) in coeffs.maps.iter().zip(bank.filters()) {
        let s = subdivision(w, b, bank.sampling())?;
        match acc.as_mut() {
            None => acc = Some(s),
            Some(total) => {
                for (t, x) in total.data_mut().iter_mut().zip(s.data()) {
                    *t += x;
                }
            }
        }
    }
    Ok(acc.expect("bank has at least one filter"))
}

/// Reverse every filter along every axis (`b_l(·) = a_l(-·)` on the shifted support).
pub fn flip(bank: &FilterBank) -> FilterBank {
    let filters = bank.filters().iter().map(Filter::reversed).collect();
    FilterBank::new(filters, bank.sampling().clone(), BankKind::BiframeRecon)
        .expect("reversal preserves bank geometry")
}

/// The reconstruction bank that applies `|det M| W_Aᵀ`: the same taps used for synthesis.
///
/// With the correlation-form transition this is the perfect-reconstruction
/// partner of any bank satisfying the tight-frame identity, and it is the
/// "transposed filters" path of a deconvolutional network.
pub fn synthesis_bank(bank: &FilterBank) -> FilterBank {
    bank.clone().with_kind(BankKind::BiframeRecon)
}

/// `â(ξ) = Σ_k a(k) e^{-i k·ξ}` on the grid `ξ_j = 2π j / grid`, row-major.
///
/// For channel filters the grid covers the full support (channel axis first).
pub fn dft_filter(a: &Filter, grid: &[usize]) -> Result<Vec<Complex64>> {
    let support = a.full_support();
    if grid.len() != support.len() || grid.iter().zip(&support).any(|(g, r)| g < r) {
        return Err(Error::DimensionMismatch(alloc::format!(
            "DFT grid {grid:?} must cover support {support:?}"
        )));
    }
    let d = grid.len();
    let n: usize = grid.iter().product();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let mut j = vec![0; d];
    let mut p = vec![0; d];
    for (flat, o) in out.iter_mut().enumerate() {
        unravel(flat, grid, &mut j);
        let mut acc = Complex64::new(0.0, 0.0);
        for (tap, &t) in a.taps().iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            unravel(tap, &support, &mut p);
            let phase: f64 = (0..d)
                .map(|i| 2.0 * PI * ((p[i] * j[i]) % grid[i]) as f64 / grid[i] as f64)
                .sum();
            acc += Complex64::new(t * libm::cos(phase), -t * libm::sin(phase));
        }
        *o = acc;
    }
    Ok(out)
}
