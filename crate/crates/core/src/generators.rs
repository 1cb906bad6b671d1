//! Synthetic training signals.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bank::CoeffSet;
use crate::error::{Error, Result};
use crate::signal::Signal;
use crate::transform::{reconstruct, synthesis_bank};
use crate::wavelets::builtin_bank;

/// `±1` runs with lengths uniform in `[s, 2s]`, alternating sign. A tail
/// shorter than `s` is merged into the last run.
pub fn gen_staircase(length: usize, s: usize, seed: u64) -> Result<Signal> {
    if s == 0 || length < 2 * s {
        return Err(Error::InvalidInput(alloc::format!(
            "staircase needs s >= 1 and length >= 2s (length {length}, s {s})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let mut out = Vec::with_capacity(length);
    while out.len() < length {
        let mut run = rng.random_range(s..=2 * s);
        let left = length - out.len();
        if left < run + s {
            run = left;
        }
        out.extend(core::iter::repeat_n(sign, run));
        sign = -sign;
    }
    Signal::from_vec(out)
}

/// Signal synthesized by a built-in wavelet's perfect-reconstruction dual from
/// `⌊density · length⌋` standard normal coefficients at uniformly random
/// positions.
pub fn gen_sparse_wavelet_signal(name: &str, density: f64, length: usize, seed: u64) -> Result<Signal> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidInput(alloc::format!("density {density} not in (0, 1]")));
    }
    let bank = builtin_bank(name)?;
    let factor = bank.sampling().det();
    if length == 0 || !length.is_multiple_of(factor) {
        return Err(Error::ShapeNotDivisible {
            shape: vec![length],
            factor: bank.sampling().diag().to_vec(),
        });
    }
    let per_map = length / factor;
    let total = per_map * bank.m();
    let count = ((density * length as f64) as usize).min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![0.0; total];
    for i in sample(&mut rng, total, count) {
        coeffs[i] = rng.sample(StandardNormal);
    }
    let maps = coeffs
        .chunks(per_map)
        .map(|c| Signal::from_vec(c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    reconstruct(&CoeffSet::new(maps), &synthesis_bank(&bank))
}

/// `min` over signed permutations `π, s` of `sqrt(Σ_l ‖a_l - s_l b_{π(l)}‖²)`.
///
/// Filters are compared as flat tap vectors; the assignment is solved exactly
/// with the Hungarian method on the signed pairwise costs.
pub fn aligned_distance(learned: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64> {
    let n = learned.len();
    if n != reference.len() {
        return Err(Error::ArityMismatch {
            expected: reference.len(),
            found: n,
        });
    }
    let mut cost = vec![vec![0.0; n]; n];
    for (i, a) in learned.iter().enumerate() {
        for (j, b) in reference.iter().enumerate() {
            if a.len() != b.len() {
                return Err(Error::DimensionMismatch(alloc::format!(
                    "filters with {} and {} taps",
                    a.len(),
                    b.len()
                )));
            }
            let plus: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            let minus: f64 = a.iter().zip(b).map(|(x, y)| (x + y) * (x + y)).sum();
            cost[i][j] = plus.min(minus);
        }
    }
    let assignment = hungarian(&cost);
    Ok(libm::sqrt(assignment.iter().enumerate().map(|(i, &j)| cost[i][j]).sum()))
}

/// Minimum-cost perfect matching for a square cost matrix; `out[row] = col`.
pub(crate) fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}
