//! Perfect-reconstruction constraints between a decomposition bank `A` and a
//! reconstruction bank `B`:
//!
//! `Σ_l Σ_n a_l(Mn+γ) b_l(Mn+γ+k) = δ_k / |det M|` for every coset `γ` and lag `k`.
//!
//! All functions work on the full geometry of a bank (channel axis included
//! when present), so fully connected channel filters need no special casing.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::bank::FilterBank;
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::prox::{huber, huber_grad};
use crate::signal::{strides, unravel, Signal};
use crate::transform::{dft_filter, transition};

/// Huber width used to smooth `|x|` in [`penalty_value_grad`].
pub const PENALTY_SMOOTHING: f64 = 1e-3;

/// One constraint: lag `k` and coset representative `gamma`, per full axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SPair {
    pub k: Vec<isize>,
    pub gamma: Vec<usize>,
}

/// Lags in the order `0, 1, .., kmax, -1, -2, ..`.
fn lag_order(r: usize) -> impl Iterator<Item = isize> {
    let r = r as isize;
    (0..r).chain((1..r).map(|k| -k))
}

fn axis_pairs(r: usize, m: usize) -> Vec<(usize, isize)> {
    let mut out = Vec::new();
    for gamma in 0..m {
        for k in lag_order(r) {
            let hit = (0..r).any(|p| {
                p % m == gamma && {
                    let q = p as isize + k;
                    q >= 0 && q < r as isize
                }
            });
            if hit {
                out.push((gamma, k));
            }
        }
    }
    out
}

/// All `(k, γ)` for which some `n` puts both `Mn+γ` and `Mn+γ+k` inside the
/// support `{0..r-1}`; `γ` ranges over `{0..M_i-1}` per axis.
///
/// Rows are ordered by `γ` (row-major), then by `k` with each axis taking
/// lags `0, 1, .., -1, -2, ..` (row-major over axes).
pub fn enumerate_s(r: &[usize], m: &[usize]) -> Vec<SPair> {
    assert_eq!(r.len(), m.len(), "support and sampling must have the same rank");
    let d = r.len();
    let gammas: Vec<usize> = m.to_vec();
    let n_gamma: usize = gammas.iter().product();
    let lags: Vec<Vec<isize>> = r.iter().map(|&ri| lag_order(ri).collect()).collect();
    let lag_shape: Vec<usize> = lags.iter().map(Vec::len).collect();
    let n_lag: usize = lag_shape.iter().product();
    let axis_sets: Vec<Vec<(usize, isize)>> = (0..d).map(|i| axis_pairs(r[i], m[i])).collect();
    let mut g = vec![0; d];
    let mut ki = vec![0; d];
    let mut out = Vec::new();
    for gflat in 0..n_gamma {
        unravel(gflat, &gammas, &mut g);
        for kflat in 0..n_lag {
            unravel(kflat, &lag_shape, &mut ki);
            let k: Vec<isize> = (0..d).map(|i| lags[i][ki[i]]).collect();
            if (0..d).all(|i| axis_sets[i].contains(&(g[i], k[i]))) {
                out.push(SPair {
                    k,
                    gamma: g.clone(),
                });
            }
        }
    }
    out
}

/// `|S(r)| = Π μ_i (2 r_i - μ_i)` with `μ_i = min(r_i, M_i)`.
pub fn count_s(r: &[usize], m: &[usize]) -> usize {
    r.iter()
        .zip(m)
        .map(|(&ri, &mi)| {
            let mu = ri.min(mi);
            mu * (2 * ri - mu)
        })
        .product()
}

/// `Π (2 r_i - M_i) M_i`, which agrees with [`count_s`] whenever `r_i >= M_i`
/// on every axis and is meaningless (possibly non-positive) otherwise.
pub fn count_s_large_support(r: &[usize], m: &[usize]) -> i64 {
    r.iter()
        .zip(m)
        .map(|(&ri, &mi)| (2 * ri as i64 - mi as i64) * mi as i64)
        .product()
}

/// Equation count versus the unknowns of a joint `(A, B)` design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Feasibility {
    pub equations: usize,
    /// `2 m Π r_i`: taps of both banks.
    pub unknowns: usize,
    pub feasible: bool,
}

pub fn feasibility(r: &[usize], m_sampling: &[usize], m_filters: usize) -> Feasibility {
    let equations = count_s(r, m_sampling);
    let unknowns = 2 * m_filters * r.iter().product::<usize>();
    Feasibility {
        equations,
        unknowns,
        feasible: unknowns >= equations,
    }
}

fn check_pair(a: &FilterBank, b: &FilterBank) -> Result<()> {
    if a.m() != b.m()
        || a.full_support() != b.full_support()
        || a.full_sampling() != b.full_sampling()
    {
        return Err(Error::DimensionMismatch(alloc::format!(
            "banks differ: m {} vs {}, support {:?} vs {:?}, sampling {:?} vs {:?}",
            a.m(),
            b.m(),
            a.full_support(),
            b.full_support(),
            a.full_sampling(),
            b.full_sampling()
        )));
    }
    Ok(())
}

/// Left-hand sides of all constraints, indexed `[γ][k + r - 1]` (row-major
/// over full axes). Entries outside `S(r)` are zero.
fn constraint_sums(a: &FilterBank, b: &FilterBank) -> (Vec<f64>, usize, Vec<usize>) {
    let support = a.full_support();
    let sampling = a.full_sampling();
    let d = support.len();
    let lag_shape: Vec<usize> = support.iter().map(|r| 2 * r - 1).collect();
    let lag_str = strides(&lag_shape);
    let n_lag: usize = lag_shape.iter().product();
    let gamma_str = strides(&sampling);
    let n_gamma: usize = sampling.iter().product();
    let n_taps: usize = support.iter().product();
    let coords: Vec<Vec<usize>> = (0..n_taps)
        .map(|t| {
            let mut c = vec![0; d];
            unravel(t, &support, &mut c);
            c
        })
        .collect();
    let mut acc = vec![0.0; n_gamma * n_lag];
    for (p, cp) in coords.iter().enumerate() {
        let g: usize = (0..d).map(|i| (cp[i] % sampling[i]) * gamma_str[i]).sum();
        for (q, cq) in coords.iter().enumerate() {
            let kidx: usize = (0..d)
                .map(|i| (cq[i] + support[i] - 1 - cp[i]) * lag_str[i])
                .sum();
            let s: f64 = a
                .filters()
                .iter()
                .zip(b.filters())
                .map(|(fa, fb)| fa.taps()[p] * fb.taps()[q])
                .sum();
            acc[g * n_lag + kidx] += s;
        }
    }
    (acc, n_lag, support)
}

/// Max-norm deviation from the constraints over every coset and lag.
///
/// Cosets that contain no support position still contribute their `k = 0`
/// equation `0 = 1/|det M|`, so supports smaller than `M` are reported as
/// infeasible rather than silently passing.
pub fn uep_residual_time(a: &FilterBank, b: &FilterBank) -> Result<f64> {
    check_pair(a, b)?;
    let (acc, n_lag, support) = constraint_sums(a, b);
    let det = a.lattice_det() as f64;
    let zero_lag: usize = {
        let lag_shape: Vec<usize> = support.iter().map(|r| 2 * r - 1).collect();
        let s = strides(&lag_shape);
        support.iter().zip(&s).map(|(r, st)| (r - 1) * st).sum()
    };
    Ok(acc
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let target = if i % n_lag == zero_lag { 1.0 / det } else { 0.0 };
            (v - target).abs()
        })
        .fold(0.0, f64::max))
}

/// Smallest grid with at least 64 points per axis (or the support size) that
/// the sampling factors divide.
pub fn default_grid(bank: &FilterBank) -> Vec<usize> {
    bank.full_support()
        .iter()
        .zip(bank.full_sampling())
        .map(|(&r, m)| {
            let want = r.max(64);
            want.div_ceil(m) * m
        })
        .collect()
}

/// `max_{ξ, ω} |Σ_l b̂_l(ξ) conj(â_l(ξ + 2πω)) - δ(ω)|` over the DFT grid and
/// `ω ∈ Ω_M = {j / M}`.
pub fn uep_residual_spectral(a: &FilterBank, b: &FilterBank, grid: &[usize]) -> Result<f64> {
    check_pair(a, b)?;
    let sampling = a.full_sampling();
    if grid.len() != sampling.len() || grid.iter().zip(&sampling).any(|(g, m)| g % m != 0) {
        return Err(Error::GridNotDivisible {
            grid: grid.to_vec(),
            factor: sampling,
        });
    }
    let d = grid.len();
    let ahat = a
        .filters()
        .iter()
        .map(|f| dft_filter(f, grid))
        .collect::<Result<Vec<_>>>()?;
    let bhat = b
        .filters()
        .iter()
        .map(|f| dft_filter(f, grid))
        .collect::<Result<Vec<_>>>()?;
    let gstr = strides(grid);
    let n: usize = grid.iter().product();
    let n_omega: usize = sampling.iter().product();
    let mut xi = vec![0; d];
    let mut om = vec![0; d];
    let mut worst = 0.0f64;
    for flat in 0..n {
        unravel(flat, grid, &mut xi);
        for o in 0..n_omega {
            unravel(o, &sampling, &mut om);
            let shifted: usize = (0..d)
                .map(|i| ((xi[i] + om[i] * grid[i] / sampling[i]) % grid[i]) * gstr[i])
                .sum();
            let mut s = Complex64::new(0.0, 0.0);
            for l in 0..a.m() {
                s += bhat[l][flat] * ahat[l][shifted].conj();
            }
            if o == 0 {
                s -= 1.0;
            }
            worst = worst.max(s.norm());
        }
    }
    Ok(worst)
}

/// Sums along the superdiagonals of `A Aᵀ` for the `r x m` tap matrix (1D, `M = 1`).
pub fn gram_diag_sums(a: &FilterBank) -> Result<Vec<f64>> {
    if a.ndim() != 1 || a.channel_support() != 0 || !a.sampling().is_identity() {
        return Err(Error::UnsupportedCase(
            "diagonal sums are defined for 1D scalar banks with M = 1",
        ));
    }
    let r = a.taps_per_filter();
    Ok((0..r)
        .map(|k| {
            a.filters()
                .iter()
                .map(|f| {
                    let t = f.taps();
                    (0..r - k).map(|p| t[p] * t[p + k]).sum::<f64>()
                })
                .sum()
        })
        .collect())
}

/// Which bank is held fixed when the bilinear constraints are written as a
/// linear system in the other one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixed {
    /// `H(A) vec(B) = f`.
    Decomposition,
    /// `K(B) vec(A) = f`.
    Reconstruction,
}

/// The constraints as a linear system in the free bank's taps.
///
/// Rows follow [`enumerate_s`]; columns are `(l, p)` with the filter index
/// outermost and the tap index in full row-major order.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub h: SparseMatrix,
    pub f: Vec<f64>,
    pub rows: Vec<SPair>,
}

impl LinearSystem {
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.h
            .matvec(x)
            .iter()
            .zip(&self.f)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `H(A)`: the constraint matrix acting on `vec(B)` for fixed `A`.
pub fn build_h(a: &FilterBank) -> LinearSystem {
    build_system(a, Fixed::Decomposition)
}

/// `H(A)` or `K(B)` depending on which bank is `fixed`.
pub fn build_system(fixed: &FilterBank, side: Fixed) -> LinearSystem {
    let support = fixed.full_support();
    let sampling = fixed.full_sampling();
    let d = support.len();
    let rows = enumerate_s(&support, &sampling);
    let lag_shape: Vec<usize> = support.iter().map(|r| 2 * r - 1).collect();
    let lag_str = strides(&lag_shape);
    let n_lag: usize = lag_shape.iter().product();
    let gamma_str = strides(&sampling);
    let mut lookup = vec![usize::MAX; sampling.iter().product::<usize>() * n_lag];
    for (row, pair) in rows.iter().enumerate() {
        let g: usize = (0..d).map(|i| pair.gamma[i] * gamma_str[i]).sum();
        let k: usize = (0..d)
            .map(|i| (pair.k[i] + support[i] as isize - 1) as usize * lag_str[i])
            .sum();
        lookup[g * n_lag + k] = row;
    }
    let n_taps: usize = support.iter().product();
    let coords: Vec<Vec<usize>> = (0..n_taps)
        .map(|t| {
            let mut c = vec![0; d];
            unravel(t, &support, &mut c);
            c
        })
        .collect();
    let mut triplets = Vec::new();
    for (p, cp) in coords.iter().enumerate() {
        let g: usize = (0..d).map(|i| (cp[i] % sampling[i]) * gamma_str[i]).sum();
        for (q, cq) in coords.iter().enumerate() {
            let kidx: usize = (0..d)
                .map(|i| (cq[i] + support[i] - 1 - cp[i]) * lag_str[i])
                .sum();
            let row = lookup[g * n_lag + kidx];
            debug_assert!(row != usize::MAX);
            for (l, f) in fixed.filters().iter().enumerate() {
                // term a_l(p) b_l(q)
                let (col, val) = match side {
                    Fixed::Decomposition => (l * n_taps + q, f.taps()[p]),
                    Fixed::Reconstruction => (l * n_taps + p, f.taps()[q]),
                };
                if val != 0.0 {
                    triplets.push((row, col, val));
                }
            }
        }
    }
    let det = fixed.lattice_det() as f64;
    let f = rows
        .iter()
        .map(|pair| if pair.k.iter().all(|&k| k == 0) { 1.0 / det } else { 0.0 })
        .collect();
    LinearSystem {
        h: SparseMatrix::from_triplets(rows.len(), fixed.m() * n_taps, triplets),
        f,
        rows,
    }
}

/// Summary of how well `(A, B)` satisfies the reconstruction constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct UepReport {
    pub time_residual: f64,
    pub spectral_residual: f64,
    pub equation_count: usize,
    pub unknown_count: usize,
    pub feasible: bool,
}

pub fn uep_report(a: &FilterBank, b: &FilterBank, grid: Option<&[usize]>) -> Result<UepReport> {
    let time_residual = uep_residual_time(a, b)?;
    let default = default_grid(a);
    let spectral_residual = uep_residual_spectral(a, b, grid.unwrap_or(&default))?;
    let feas = feasibility(&a.full_support(), &a.full_sampling(), a.m());
    Ok(UepReport {
        time_residual,
        spectral_residual,
        equation_count: feas.equations,
        unknown_count: feas.unknowns,
        feasible: feas.feasible,
    })
}

/// Smoothed `Σ ‖W_A x‖₁` plus `η Σ_k (Tr(AAᵀ, k) - δ_k)²` and its gradient
/// with respect to the filter-major taps (1D, `M = 1`).
///
/// `|y|` is replaced by `L_δ(y) / δ` with `δ = PENALTY_SMOOTHING`.
pub fn penalty_value_grad(a: &FilterBank, signals: &[Signal], eta: f64) -> Result<(f64, Vec<f64>)> {
    let sums = gram_diag_sums(a)?;
    let r = a.taps_per_filter();
    let delta = PENALTY_SMOOTHING;
    let mut value = 0.0;
    let mut grad = vec![0.0; a.m() * r];
    for x in signals {
        if x.ndim() != 1 || x.channels() != 0 {
            return Err(Error::UnsupportedCase("penalty objective takes 1D scalar signals"));
        }
        let n = x.data().len();
        for (l, f) in a.filters().iter().enumerate() {
            let y = transition(x, f, a.sampling())?;
            for (i, &yi) in y.data().iter().enumerate() {
                value += huber(yi, delta) / delta;
                let g = huber_grad(yi, delta) / delta;
                if g == 0.0 {
                    continue;
                }
                for p in 0..r {
                    grad[l * r + p] += g * x.data()[(i + p) % n];
                }
            }
        }
    }
    for (k, &t) in sums.iter().enumerate() {
        let e = t - if k == 0 { 1.0 } else { 0.0 };
        value += eta * e * e;
        for (l, f) in a.filters().iter().enumerate() {
            let taps = f.taps();
            for j in 0..r {
                let dt = if k == 0 {
                    2.0 * taps[j]
                } else {
                    let up = if j + k < r { taps[j + k] } else { 0.0 };
                    let down = if j >= k { taps[j - k] } else { 0.0 };
                    up + down
                };
                grad[l * r + j] += 2.0 * eta * e * dt;
            }
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bank::BankKind;
    use crate::linalg::random_orthogonal;
    use crate::signal::{Filter, SamplingMatrix};
    use crate::transform::{flip, synthesis_bank};
    use crate::wavelets::builtin_bank;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_s(r: &[usize], m: &[usize]) -> usize {
        // search n, k, γ over generous boxes
        let d = r.len();
        let mut count = 0;
        let n_gamma: usize = m.iter().product();
        let lag_box: Vec<usize> = r.iter().map(|&ri| 4 * ri + 1).collect();
        let n_lag: usize = lag_box.iter().product();
        let mut g = vec![0; d];
        let mut kk = vec![0; d];
        for gf in 0..n_gamma {
            unravel(gf, m, &mut g);
            for kf in 0..n_lag {
                unravel(kf, &lag_box, &mut kk);
                let ok = (0..d).all(|i| {
                    let k = kk[i] as isize - 2 * r[i] as isize;
                    (-(r[i] as isize) - 2..=r[i] as isize + 2).any(|n| {
                        let p = m[i] as isize * n + g[i] as isize;
                        p >= 0 && p < r[i] as isize && p + k >= 0 && p + k < r[i] as isize
                    })
                });
                if ok {
                    count += 1;
                }
            }
        }
        count
    }

    fn random_bank(rng: &mut ChaCha8Rng, m: usize, support: &[usize], sampling: &[usize]) -> FilterBank {
        let n: usize = support.iter().product();
        let filters = (0..m)
            .map(|_| Filter::new(support.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        FilterBank::new(filters, SamplingMatrix::new(sampling.to_vec()).unwrap(), BankKind::Frame).unwrap()
    }

    #[test]
    fn s_examples() {
        assert_eq!(enumerate_s(&[3], &[1]).len(), 5);
        assert_eq!(enumerate_s(&[2], &[2]).len(), 4);
        assert_eq!(enumerate_s(&[2, 2], &[2, 2]).len(), 16);
        assert_eq!(count_s(&[3], &[2]), 8);
        let f = feasibility(&[3], &[1], 2);
        assert_eq!((f.equations, f.unknowns, f.feasible), (5, 12, true));
        // 2 m r = count - 1 is infeasible
        let f = feasibility(&[3], &[2], 1);
        assert_eq!(f.equations, 8);
        assert!(f.feasible == (6 >= 8));
    }

    #[test]
    fn enumeration_matches_closed_form_and_brute_force() {
        for d in 1..=2 {
            for r in 1..=6 {
                for m in 1..=3 {
                    let rv = vec![r; d];
                    let mv = vec![m; d];
                    let n = enumerate_s(&rv, &mv).len();
                    assert_eq!(n, count_s(&rv, &mv), "r={r} M={m} d={d}");
                    assert_eq!(n, brute_force_s(&rv, &mv), "r={r} M={m} d={d}");
                    if r >= m {
                        assert_eq!(n as i64, count_s_large_support(&rv, &mv));
                    }
                }
            }
        }
        // mixed axes
        assert_eq!(enumerate_s(&[3, 2], &[2, 1]).len(), brute_force_s(&[3, 2], &[2, 1]));
    }

    #[test]
    fn builtin_residuals() {
        for name in ["haar", "bspline-linear", "db2", "db3", "db5", "db12", "db24"] {
            let a = builtin_bank(name).unwrap();
            let b = synthesis_bank(&a);
            let t = uep_residual_time(&a, &b).unwrap();
            assert!(t <= 1e-12, "{name}: {t}");
            let s = uep_residual_spectral(&a, &b, &default_grid(&a)).unwrap();
            assert!(s <= 1e-10, "{name}: {s}");
        }
        let bs = builtin_bank("bspline-linear").unwrap();
        assert!(uep_residual_time(&bs, &synthesis_bank(&bs)).unwrap() <= 1e-15);
        let haar = builtin_bank("haar").unwrap();
        assert_eq!(uep_residual_time(&haar, &synthesis_bank(&haar)).unwrap(), 0.0);
    }

    #[test]
    fn reversed_taps_are_not_a_dual_for_asymmetric_banks() {
        let a = builtin_bank("db2").unwrap();
        assert!(uep_residual_time(&a, &flip(&a)).unwrap() > 1e-2);
    }

    #[test]
    fn scaled_orthogonal_columns_satisfy_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for r in [2, 3, 5] {
            let u = random_orthogonal(r, &mut rng);
            let filters = (0..r)
                .map(|i| {
                    let col: Vec<f64> = u.col(i).iter().map(|v| v / libm::sqrt(r as f64)).collect();
                    Filter::from_taps(&col).unwrap()
                })
                .collect();
            let a = FilterBank::new(filters, SamplingMatrix::identity(1), BankKind::Frame).unwrap();
            assert!(uep_residual_time(&a, &synthesis_bank(&a)).unwrap() < 1e-14);
            let sums = gram_diag_sums(&a).unwrap();
            assert!((sums[0] - 1.0).abs() < 1e-14);
            assert!(sums[1..].iter().all(|s| s.abs() < 1e-14));
        }
    }

    #[test]
    fn zero_reconstruction_bank_has_unit_spectral_residual() {
        let a = builtin_bank("haar").unwrap();
        let zero = a.with_flat_taps(&[0.0; 4]).unwrap();
        let s = uep_residual_spectral(&a, &zero, &[64]).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(matches!(
            uep_residual_spectral(&a, &zero, &[63]),
            Err(Error::GridNotDivisible { .. })
        ));
    }

    #[test]
    fn gram_diag_sums_single_filter_and_brute_force() {
        let one = FilterBank::new(vec![Filter::from_taps(&[1.0]).unwrap()], SamplingMatrix::identity(1), BankKind::Frame).unwrap();
        assert_eq!(gram_diag_sums(&one).unwrap(), vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_bank(&mut rng, 3, &[4], &[1]);
        let t = a.tap_matrix();
        let aat = t.matmul(&t.transpose());
        let sums = gram_diag_sums(&a).unwrap();
        for k in 0..4 {
            let s: f64 = (0..4 - k).map(|i| aat[(i, i + k)]).sum();
            assert!((s - sums[k]).abs() < 1e-14);
        }
        assert!(matches!(gram_diag_sums(&builtin_bank("haar").unwrap()), Err(Error::UnsupportedCase(_))));
    }

    #[test]
    fn h_matrix_small_example() {
        // m = 2, r = 3, M = 1
        let a = FilterBank::new(
            vec![
                Filter::from_taps(&[1.0, 2.0, 3.0]).unwrap(),
                Filter::from_taps(&[4.0, 5.0, 6.0]).unwrap(),
            ],
            SamplingMatrix::identity(1),
            BankKind::BiframeDecomp,
        )
        .unwrap();
        let sys = build_h(&a);
        let h = sys.h.to_dense();
        assert_eq!((h.rows(), h.cols()), (5, 6));
        assert_eq!(h.row(0), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        // k = 1: b(p) pairs with a(p - 1)
        assert_eq!(h.row(1), &[0.0, 1.0, 2.0, 0.0, 4.0, 5.0]);
        assert_eq!(h.row(2), &[0.0, 0.0, 1.0, 0.0, 0.0, 4.0]);
        assert_eq!(h.row(3), &[2.0, 3.0, 0.0, 5.0, 6.0, 0.0]);
        assert_eq!(h.row(4), &[3.0, 0.0, 0.0, 6.0, 0.0, 0.0]);
        assert_eq!(sys.f, vec![1.0, 0.0, 0.0, 0.0, 0.0]);

        let delta = FilterBank::new(vec![Filter::delta(vec![1])], SamplingMatrix::identity(1), BankKind::Frame).unwrap();
        let sys = build_h(&delta);
        assert_eq!(sys.h.to_dense().data(), &[1.0]);
        assert_eq!(sys.f, vec![1.0]);
    }

    #[test]
    fn h_times_synthesis_bank_is_f_for_tight_frames() {
        for name in ["haar", "bspline-linear", "db3"] {
            let a = builtin_bank(name).unwrap();
            for dims in 1..=2 {
                let a = a.tensor_power(dims).unwrap();
                let sys = build_h(&a);
                assert!(sys.residual(&a.flat_taps()) < 1e-12, "{name} d={dims}");
            }
        }
    }

    #[test]
    fn system_matches_direct_sums_on_random_banks() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (support, sampling) in [(vec![3], vec![1]), (vec![4], vec![2]), (vec![3, 2], vec![2, 1]), (vec![2, 3], vec![2, 3])] {
            let a = random_bank(&mut rng, 3, &support, &sampling);
            let b = random_bank(&mut rng, 3, &support, &sampling);
            let from_h = build_system(&a, Fixed::Decomposition).h.matvec(&b.flat_taps());
            let from_k = build_system(&b, Fixed::Reconstruction).h.matvec(&a.flat_taps());
            let rows = enumerate_s(&support, &sampling);
            assert_eq!(rows.len(), from_h.len());
            for (i, pair) in rows.iter().enumerate() {
                // direct summation of the constraint left side
                let d = support.len();
                let n_taps: usize = support.iter().product();
                let mut direct = 0.0;
                let mut cp = vec![0; d];
                for p in 0..n_taps {
                    unravel(p, &support, &mut cp);
                    if (0..d).any(|j| cp[j] % sampling[j] != pair.gamma[j]) {
                        continue;
                    }
                    let cq: Vec<isize> = (0..d).map(|j| cp[j] as isize + pair.k[j]).collect();
                    if (0..d).any(|j| cq[j] < 0 || cq[j] >= support[j] as isize) {
                        continue;
                    }
                    let q = (0..d).fold(0usize, |acc, j| acc * support[j] + cq[j] as usize);
                    for l in 0..3 {
                        direct += a.filter(l).taps()[p] * b.filter(l).taps()[q];
                    }
                }
                assert!((direct - from_h[i]).abs() < 1e-12);
                assert!((direct - from_k[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn time_and_spectral_residuals_agree_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let a = random_bank(&mut rng, 2, &[4], &[2]);
            let b = random_bank(&mut rng, 2, &[4], &[2]);
            let t = uep_residual_time(&a, &b).unwrap();
            let s = uep_residual_spectral(&a, &b, &[64]).unwrap();
            // each spectral value is a finite sum of |S| lagged time residuals
            assert!(s <= 64.0 * t + 1e-12);
            assert!(t <= s + 1e-12);
        }
    }

    #[test]
    fn support_smaller_than_sampling_is_infeasible() {
        let a = FilterBank::new(vec![Filter::from_taps(&[1.0]).unwrap()], SamplingMatrix::new(vec![2]).unwrap(), BankKind::Frame).unwrap();
        assert_eq!(count_s(&[1], &[2]), 1);
        assert!(count_s_large_support(&[1], &[2]) <= 0);
        assert!(uep_residual_time(&a, &a).unwrap() >= 0.5);
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_bank(&mut rng, 2, &[3], &[1]);
        let x = Signal::from_vec((0..32).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (_, grad) = penalty_value_grad(&a, core::slice::from_ref(&x), 3.0).unwrap();
        let taps = a.flat_taps();
        let h = 1e-6;
        for i in 0..taps.len() {
            let mut up = taps.clone();
            up[i] += h;
            let mut dn = taps.clone();
            dn[i] -= h;
            let fu = penalty_value_grad(&a.with_flat_taps(&up).unwrap(), core::slice::from_ref(&x), 3.0).unwrap().0;
            let fd = penalty_value_grad(&a.with_flat_taps(&dn).unwrap(), core::slice::from_ref(&x), 3.0).unwrap().0;
            let fdg = (fu - fd) / (2.0 * h);
            assert!((fdg - grad[i]).abs() <= 1e-4 * fdg.abs().max(1.0), "{i}: {fdg} vs {}", grad[i]);
        }
    }

    #[test]
    fn penalty_with_zero_eta_is_the_smoothed_l1() {
        let a = builtin_bank("haar").unwrap().with_kind(BankKind::Frame);
        let a = FilterBank::new(a.filters().to_vec(), SamplingMatrix::identity(1), BankKind::Frame).unwrap();
        let x = Signal::from_vec(vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let (v, _) = penalty_value_grad(&a, core::slice::from_ref(&x), 0.0).unwrap();
        let c = crate::transform::decompose(&x, &a).unwrap();
        let expect: f64 = c.maps.iter().flat_map(|m| m.data().iter()).map(|&y| huber(y, PENALTY_SMOOTHING) / PENALTY_SMOOTHING).sum();
        assert!((v - expect).abs() < 1e-12);
        // the orthogonal Haar pair with M = 1 is in the constraint set: no penalty
        let (v2, _) = penalty_value_grad(&a, core::slice::from_ref(&x), 1e6).unwrap();
        assert!((v2 - expect).abs() < 1e-9);
    }
}
