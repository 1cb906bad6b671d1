//! Built-in filter banks: Haar, the linear B-spline tight frame and Daubechies wavelets.
//!
//! Daubechies filters are computed by spectral factorization of the
//! half-band polynomial followed by a Newton polish of the orthogonality
//! equations, so no tabulated decimals are involved. Taps are normalized to
//! sum 1 (squared norm 1/2), the scaling that makes `{h, g}` with `M = 2` a
//! tight frame for the transform conventions of this crate.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::bank::{BankKind, FilterBank};
use crate::error::{Error, Result};
use crate::linalg::{lu_solve, Matrix};
use crate::signal::{Filter, SamplingMatrix};

/// Names accepted by [`builtin_bank`].
pub const BUILTIN_NAMES: &[&str] = &["haar", "bspline-linear", "db2", "db3", "db5", "db12", "db24"];

/// A built-in 1D bank with `M = 2`.
pub fn builtin_bank(name: &str) -> Result<FilterBank> {
    let sampling = SamplingMatrix::new(vec![2])?;
    match name {
        "haar" | "db1" => daubechies_bank(1),
        "bspline-linear" => {
            let s = libm::sqrt(2.0) / 4.0;
            let filters = vec![
                Filter::from_taps(&[0.25, 0.5, 0.25])?,
                Filter::from_taps(&[s, 0.0, -s])?,
                Filter::from_taps(&[-0.25, 0.5, -0.25])?,
            ];
            FilterBank::new(filters, sampling, BankKind::Frame)
        }
        _ => match name.strip_prefix("db").and_then(|n| n.parse::<usize>().ok()) {
            Some(n) if (1..=30).contains(&n) => daubechies_bank(n),
            _ => Err(Error::UnknownBankName(name.into())),
        },
    }
}

/// Built-in bank extended to `dims` dimensions by tensor products.
pub fn builtin_bank_nd(name: &str, dims: usize) -> Result<FilterBank> {
    builtin_bank(name)?.tensor_power(dims)
}

/// Two-filter orthogonal bank `{h, g}`, `g(n) = (-1)^n h(L-1-n)`.
pub fn daubechies_bank(n: usize) -> Result<FilterBank> {
    let h = daubechies_lowpass(n)?;
    let len = h.len();
    let g: Vec<f64> = (0..len)
        .map(|k| if k % 2 == 0 { h[len - 1 - k] } else { -h[len - 1 - k] })
        .collect();
    FilterBank::new(
        vec![Filter::from_taps(&h)?, Filter::from_taps(&g)?],
        SamplingMatrix::new(vec![2])?,
        BankKind::Frame,
    )
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// All roots of a real polynomial (coefficients in increasing degree) by the
/// Aberth-Ehrlich iteration, each polished by Newton steps.
fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let radius = 1.0 + coeffs[..deg].iter().map(|c| (c / lead).abs()).fold(0.0, f64::max);
    let mut z: Vec<Complex64> = (0..deg)
        .map(|k| {
            let t = 2.0 * core::f64::consts::PI * (k as f64 + 0.25) / deg as f64 + 0.4;
            Complex64::from_polar(0.5 * radius.min(4.0), t)
        })
        .collect();
    for _ in 0..2000 {
        let mut moved = 0.0f64;
        for k in 0..deg {
            let (p, dp) = horner(coeffs, z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..deg)
                .filter(|&j| j != k)
                .map(|j| Complex64::new(1.0, 0.0) / (z[k] - z[j]))
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            z[k] -= step;
            moved = moved.max(step.norm() / z[k].norm().max(1e-300));
        }
        if moved < 1e-15 {
            break;
        }
    }
    for r in z.iter_mut() {
        for _ in 0..5 {
            let (p, dp) = horner(coeffs, *r);
            if dp.norm() == 0.0 {
                break;
            }
            *r -= p / dp;
        }
    }
    z
}

/// Daubechies lowpass filter with `n` vanishing moments (`2n` taps, sum 1).
pub fn daubechies_lowpass(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("Daubechies order must be at least 1".into()));
    }
    // |ĥ(ξ)|² = cos^{2n}(ξ/2) P(sin²(ξ/2)),  P(y) = Σ_{k<n} C(n-1+k, k) y^k
    let p: Vec<f64> = (0..n).map(|k| binomial(n - 1 + k, k)).collect();
    let one = Complex64::new(1.0, 0.0);
    let mut q = vec![one];
    for y in poly_roots(&p) {
        // z + 1/z = 2 - 4y; keep the root inside the unit circle
        let b = Complex64::new(2.0, 0.0) - y * 4.0;
        let disc = (b * b - 4.0).sqrt();
        let (z1, z2) = ((b + disc) / 2.0, (b - disc) / 2.0);
        let zk = if z1.norm() < z2.norm() { z1 } else { z2 };
        let mut next = vec![Complex64::new(0.0, 0.0); q.len() + 1];
        for (i, &c) in q.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * zk;
        }
        q = next;
    }
    let mut q: Vec<f64> = q.iter().map(|c| c.re).collect();
    let sum_q: f64 = q.iter().sum();
    q.iter_mut().for_each(|c| *c /= sum_q);
    let mut h = binomial_conv(n, q.len()).matvec(&q);
    polish_orthogonality(&mut h, n);
    let residual = orthogonality_residual(&h, n);
    if residual > 1e-12 {
        return Err(Error::NotConverged {
            iterations: 0,
            residual,
        });
    }
    Ok(h)
}

/// Matrix of convolution with `((1+z)/2)^n`, so that `h = C q` keeps `n`
/// vanishing moments for every `q`.
fn binomial_conv(n: usize, qlen: usize) -> Matrix {
    let b: Vec<f64> = (0..=n)
        .map(|k| binomial(n, k) / libm::pow(2.0, n as f64))
        .collect();
    Matrix::from_fn(n + qlen, qlen, |i, j| {
        if i >= j && i - j <= n {
            b[i - j]
        } else {
            0.0
        }
    })
}

fn orthogonality_equations(h: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let s: f64 = (0..h.len().saturating_sub(2 * k)).map(|i| h[i] * h[i + 2 * k]).sum();
            if k == 0 {
                s - 0.5
            } else {
                s
            }
        })
        .collect()
}

fn orthogonality_residual(h: &[f64], n: usize) -> f64 {
    let sum: f64 = h.iter().sum();
    orthogonality_equations(h, n)
        .iter()
        .fold((sum - 1.0).abs(), |m, e| m.max(e.abs()))
}

/// `Σ (-1)^i P_j(x_i) h(i)` for Legendre polynomials `P_j`, `j < n`, on
/// `x_i ∈ [-1, 1]`: a well-conditioned form of the vanishing-moment conditions.
fn moment_rows(len: usize, n: usize) -> Matrix {
    let mut rows = Matrix::zeros(n, len);
    for i in 0..len {
        let x = if len > 1 { 2.0 * i as f64 / (len - 1) as f64 - 1.0 } else { 0.0 };
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let (mut p0, mut p1) = (1.0, x);
        for j in 0..n {
            let pj = if j == 0 {
                1.0
            } else if j == 1 {
                x
            } else {
                let pj = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = pj;
                pj
            };
            rows[(j, i)] = sign * pj;
        }
    }
    rows
}

/// Newton iteration on `Σ h(i) h(i+2k) = δ_k / 2` together with the vanishing moments.
fn polish_orthogonality(h: &mut Vec<f64>, n: usize) {
    let len = h.len();
    let moments = moment_rows(len, n);
    let system = |h: &[f64]| -> Vec<f64> {
        let mut e = orthogonality_equations(h, n);
        e.extend(moments.matvec(h));
        e
    };
    for _ in 0..20 {
        let e = system(h);
        let before = e.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if before < 1e-17 {
            return;
        }
        let jac = Matrix::from_fn(2 * n, len, |k, j| {
            if k >= n {
                return moments[(k - n, j)];
            }
            let up = if j + 2 * k < len { h[j + 2 * k] } else { 0.0 };
            let down = if j >= 2 * k { h[j - 2 * k] } else { 0.0 };
            if k == 0 {
                2.0 * h[j]
            } else {
                up + down
            }
        });
        let Some(step) = lu_solve(&jac, &e) else {
            return;
        };
        let trial: Vec<f64> = h.iter().zip(&step).map(|(a, s)| a - s).collect();
        let after = system(&trial).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(after < before) {
            return;
        }
        *h = trial;
    }
}

/// Human-readable list of names for error messages.
pub fn builtin_names() -> alloc::string::String {
    BUILTIN_NAMES.join(", ")
}
