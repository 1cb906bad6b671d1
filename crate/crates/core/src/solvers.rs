//! Sub-solvers used by the learning algorithms: conjugate gradients, the
//! orthogonal Procrustes map, and the constrained filter updates.

use alloc::vec;
use alloc::vec::Vec;

use crate::bank::FilterBank;
use crate::error::{Error, Result};
use crate::linalg::{dot, jacobi_svd, norm2, Cholesky, Matrix, SparseMatrix};
use crate::patches::Patches;
use crate::uep::{build_system, enumerate_s, Fixed, LinearSystem};

/// Iteration cap and relative tolerance for an iterative sub-solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverBudget {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl SolverBudget {
    pub fn new(max_iterations: usize, tolerance: f64) -> Result<Self> {
        if max_iterations == 0 || !(tolerance >= 0.0) {
            return Err(Error::InvalidInput(
                "solver budget needs at least one iteration and a non-negative tolerance".into(),
            ));
        }
        Ok(SolverBudget {
            max_iterations,
            tolerance,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    /// Best iterate seen (smallest residual).
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

impl CgOutcome {
    pub fn into_result(self) -> Result<Vec<f64>> {
        if self.converged {
            Ok(self.x)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                residual: self.relative_residual,
            })
        }
    }
}

/// Conjugate gradients for a symmetric positive semi-definite operator.
pub fn cg_solve(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    x0: Option<&[f64]>,
    budget: &SolverBudget,
) -> CgOutcome {
    let n = rhs.len();
    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        return CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r: Vec<f64> = if x0.is_some() {
        let ax = apply(&x);
        rhs.iter().zip(&ax).map(|(b, a)| b - a).collect()
    } else {
        rhs.to_vec()
    };
    let mut rel = norm2(&r) / bnorm;
    let mut best = (rel, x.clone());
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut it = 0;
    while it < budget.max_iterations && rel > budget.tolerance {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        it += 1;
        rel = libm::sqrt(rr_new) / bnorm;
        if rel < best.0 {
            best = (rel, x.clone());
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    CgOutcome {
        converged: best.0 <= budget.tolerance,
        relative_residual: best.0,
        x: best.1,
        iterations: it,
    }
}

#[derive(Debug, Clone)]
pub struct Procrustes {
    pub p: Matrix,
    /// A singular value below `1e-12`: the minimizer is not unique.
    pub rank_deficient: bool,
}

/// `argmin ‖P - Y‖_F` over `PᵀP = I`: `P = U Vᵀ` from the thin SVD of `Y`.
pub fn procrustes(y: &Matrix) -> Result<Procrustes> {
    if y.rows() < y.cols() {
        return Err(Error::DimensionMismatch(alloc::format!(
            "procrustes needs rows >= cols, got {}x{}",
            y.rows(),
            y.cols()
        )));
    }
    let svd = jacobi_svd(y);
    let rank_deficient = svd.singular_values.iter().any(|&s| s < 1e-12);
    Ok(Procrustes {
        p: svd.u.matmul(&svd.v.transpose()),
        rank_deficient,
    })
}

/// Filter-major vector of an `R x m` tap matrix.
pub(crate) fn flat_of(taps: &Matrix) -> Vec<f64> {
    let (r, m) = (taps.rows(), taps.cols());
    let mut out = vec![0.0; r * m];
    for p in 0..r {
        for l in 0..m {
            out[l * r + p] = taps[(p, l)];
        }
    }
    out
}

pub(crate) fn matrix_of(flat: &[f64], r: usize, m: usize) -> Matrix {
    Matrix::from_fn(r, m, |p, l| flat[l * r + p])
}

/// `tr(Aᵀ G A) - 2 tr(Aᵀ C)`: `‖X A - T‖²` up to the constant `‖T‖²` when
/// `G = XᵀX`, `C = XᵀT`.
pub(crate) fn quadratic_value(gram: &Matrix, cross: &Matrix, taps: &Matrix) -> f64 {
    let ga = gram.matmul(taps);
    ga.data()
        .iter()
        .zip(taps.data())
        .zip(cross.data())
        .map(|((g, a), c)| a * g - 2.0 * a * c)
        .sum()
}

/// Perfect-reconstruction constraints of a tight frame (`B = A`), with each
/// symmetric pair of equations kept once, plus optional zero-mean rows for
/// filters `2..m`.
#[derive(Debug, Clone)]
pub struct TightConstraints {
    keep: Vec<usize>,
    lowpass: bool,
}

impl TightConstraints {
    pub fn new(bank: &FilterBank, lowpass: bool) -> Self {
        let support = bank.full_support();
        let sampling = bank.full_sampling();
        let rows = enumerate_s(&support, &sampling);
        let keep = rows
            .iter()
            .enumerate()
            .filter(|(_, pair)| {
                let partner_k: Vec<isize> = pair.k.iter().map(|k| -k).collect();
                let partner_g: Vec<usize> = pair
                    .gamma
                    .iter()
                    .zip(&pair.k)
                    .zip(&sampling)
                    .map(|((&g, &k), &m)| (g as isize + k).rem_euclid(m as isize) as usize)
                    .collect();
                (&pair.gamma, &pair.k) <= (&partner_g, &partner_k)
            })
            .map(|(i, _)| i)
            .collect();
        TightConstraints { keep, lowpass }
    }

    pub fn lowpass(&self) -> bool {
        self.lowpass
    }

    pub fn len(&self, bank: &FilterBank) -> usize {
        self.keep.len() + if self.lowpass { bank.m() - 1 } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty() && !self.lowpass
    }

    pub fn value(&self, a: &FilterBank) -> Vec<f64> {
        let sys = build_system(a, Fixed::Decomposition);
        let lhs = sys.h.matvec(&a.flat_taps());
        let mut out: Vec<f64> = self.keep.iter().map(|&i| lhs[i] - sys.f[i]).collect();
        if self.lowpass {
            out.extend(a.filters()[1..].iter().map(|f| f.tap_sum()));
        }
        out
    }

    pub fn residual(&self, a: &FilterBank) -> f64 {
        self.value(a).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Dense Jacobian with respect to the filter-major taps.
    pub fn jacobian(&self, a: &FilterBank) -> Matrix {
        let h = build_system(a, Fixed::Decomposition).h;
        let k = build_system(a, Fixed::Reconstruction).h;
        let n = a.m() * a.taps_per_filter();
        let rows = self.len(a);
        let mut j = Matrix::zeros(rows, n);
        let hd = h.to_dense();
        let kd = k.to_dense();
        for (row, &i) in self.keep.iter().enumerate() {
            for c in 0..n {
                j[(row, c)] = hd[(i, c)] + kd[(i, c)];
            }
        }
        if self.lowpass {
            let r = a.taps_per_filter();
            for l in 1..a.m() {
                let row = self.keep.len() + l - 1;
                for p in 0..r {
                    j[(row, l * r + p)] = 1.0;
                }
            }
        }
        j
    }

    /// Minimum-norm Gauss-Newton corrections back onto the constraint set.
    /// Fails when the residual does not drop below `tol`.
    pub fn restore(&self, a: &FilterBank, tol: f64) -> Result<FilterBank> {
        let mut cur = a.clone();
        let mut taps = cur.flat_taps();
        let mut res = self.residual(&cur);
        let mut stalls = 0;
        for _ in 0..60 {
            if res <= 1e-15 {
                break;
            }
            let c = self.value(&cur);
            let j = self.jacobian(&cur);
            let jjt = j.matmul(&j.transpose());
            let scale = (0..jjt.rows()).map(|i| jjt[(i, i)]).fold(0.0, f64::max);
            let (chol, _) = Cholesky::factor_shifted(&jjt, 1e-13 * scale.max(1e-300));
            let y = chol.solve(&c);
            let delta = j.tr_matvec(&y);
            let trial_taps: Vec<f64> = taps.iter().zip(&delta).map(|(t, d)| t - d).collect();
            let trial = cur.with_flat_taps(&trial_taps)?;
            let trial_res = self.residual(&trial);
            if trial_res < res {
                stalls = if trial_res > 0.5 * res { stalls + 1 } else { 0 };
                cur = trial;
                taps = trial_taps;
                res = trial_res;
                // past the rounding floor, or linear convergence that will not reach tol
                if (stalls > 0 && res <= tol) || stalls > 8 {
                    break;
                }
            } else {
                break;
            }
        }
        if res <= tol {
            Ok(cur)
        } else {
            Err(Error::ConstraintStalled { residual: res })
        }
    }
}

/// Feasibility required of every accepted constrained step.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-6;
/// Target of the Gauss-Newton projection inside constrained steps.
pub const PROJECTION_TOLERANCE: f64 = 1e-10;
/// Warm starts further than this from feasibility are rejected.
pub const WARM_START_LIMIT: f64 = 1e-2;

/// `argmin_A ‖W_A x - D + Breg‖²` over tight frames (optionally with the
/// zero-mean highpass constraint).
///
/// Each iteration takes the equality-constrained quadratic step for the
/// linearized constraints, restores feasibility by Gauss-Newton projection
/// and backtracks until the objective decreases, so the returned bank never
/// has a larger objective than `a0`.
pub fn constrained_a_step(
    patches: &Patches,
    d: &Matrix,
    breg: &Matrix,
    a0: &FilterBank,
    constraints: &TightConstraints,
    budget: &SolverBudget,
) -> Result<FilterBank> {
    let target = d.sub(breg);
    let cross = patches.apply_t(&target);
    constrained_a_step_gram(&patches.gram, &cross, a0, constraints, budget)
}

/// [`constrained_a_step`] with `G = XᵀX` and `C = XᵀT` precomputed.
pub fn constrained_a_step_gram(
    gram: &Matrix,
    cross: &Matrix,
    a0: &FilterBank,
    constraints: &TightConstraints,
    budget: &SolverBudget,
) -> Result<FilterBank> {
    let start_res = constraints.residual(a0);
    if start_res > WARM_START_LIMIT {
        return Err(Error::InfeasibleStart {
            residual: start_res,
        });
    }
    let r = a0.taps_per_filter();
    let m = a0.m();
    let mut h = gram.clone();
    h.scale(2.0);
    let trace = (0..r).map(|i| h[(i, i)]).sum::<f64>().max(1e-300);
    let (chol, _) = Cholesky::factor_shifted(&h, 1e-10 * trace / r as f64);
    let hinv = |v: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(v.len());
        for l in 0..m {
            out.extend(chol.solve(&v[l * r..(l + 1) * r]));
        }
        out
    };

    let mut a = if start_res > CONSTRAINT_TOLERANCE {
        constraints.restore(a0, PROJECTION_TOLERANCE)?
    } else {
        a0.clone()
    };
    let mut q = quadratic_value(gram, cross, &a.tap_matrix());
    for _ in 0..budget.max_iterations {
        let taps = a.tap_matrix();
        let mut grad = gram.matmul(&taps);
        grad.add_scaled(-1.0, cross);
        grad.scale(2.0);
        let g = flat_of(&grad);
        let c = constraints.value(&a);
        let j = constraints.jacobian(&a);
        let s = j.rows();
        let hg = hinv(&g);
        let mut hjt = Matrix::zeros(s, m * r);
        for i in 0..s {
            hjt.row_mut(i).copy_from_slice(&hinv(j.row(i)));
        }
        let schur = j.matmul(&hjt.transpose());
        let jhg = j.matvec(&hg);
        let rhs: Vec<f64> = c.iter().zip(&jhg).map(|(ci, v)| ci - v).collect();
        let scale = (0..s).map(|i| schur[(i, i)]).fold(0.0, f64::max).max(1e-300);
        let (sc, _) = Cholesky::factor_shifted(&schur, 1e-12 * scale);
        let lambda = sc.solve(&rhs);
        let corr = hjt.tr_matvec(&lambda);
        let delta: Vec<f64> = hg.iter().zip(&corr).map(|(a, b)| -(a + b)).collect();
        let flat = a.flat_taps();
        let dn = norm2(&delta);
        if dn <= budget.tolerance * norm2(&flat).max(1e-300) {
            break;
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial_taps: Vec<f64> = flat.iter().zip(&delta).map(|(x, d)| x + t * d).collect();
            if let Ok(trial) = a
                .with_flat_taps(&trial_taps)
                .and_then(|b| constraints.restore(&b, PROJECTION_TOLERANCE))
            {
                let tq = quadratic_value(gram, cross, &trial.tap_matrix());
                if tq < q {
                    a = trial;
                    q = tq;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(a)
}

/// Data for the unit-sphere filter update of the critically sampled learner:
/// `η ‖X A - T‖² + λ ‖K(B) vec(A) - f + C‖²`.
pub struct SphereProblem<'a> {
    pub gram: &'a Matrix,
    /// `Xᵀ T`.
    pub cross: &'a Matrix,
    /// `‖T‖²`, so reported values are the true objective.
    pub target_norm2: f64,
    pub eta: f64,
    pub lambda: f64,
    /// `K(B)` with `B` held fixed.
    pub system: &'a LinearSystem,
    pub dual: &'a [f64],
}

impl SphereProblem<'_> {
    pub fn value(&self, taps: &Matrix) -> f64 {
        let fit = quadratic_value(self.gram, self.cross, taps) + self.target_norm2;
        let k = self.system.h.matvec(&flat_of(taps));
        let pen: f64 = k
            .iter()
            .zip(&self.system.f)
            .zip(self.dual)
            .map(|((k, f), c)| (k - f + c) * (k - f + c))
            .sum();
        self.eta * fit + self.lambda * pen
    }

    fn gradient(&self, taps: &Matrix) -> Matrix {
        let mut g = self.gram.matmul(taps);
        g.add_scaled(-1.0, self.cross);
        g.scale(2.0 * self.eta);
        let k = self.system.h.matvec(&flat_of(taps));
        let resid: Vec<f64> = k
            .iter()
            .zip(&self.system.f)
            .zip(self.dual)
            .map(|((k, f), c)| 2.0 * self.lambda * (k - f + c))
            .collect();
        let back = matrix_of(&self.system.h.tr_matvec(&resid), taps.rows(), taps.cols());
        g.add_scaled(1.0, &back);
        g
    }
}

pub(crate) fn normalize_columns(taps: &mut Matrix) {
    for l in 0..taps.cols() {
        let n = norm2(&taps.col(l));
        if n > 0.0 {
            for p in 0..taps.rows() {
                taps[(p, l)] /= n;
            }
        }
    }
}

/// Projected gradient descent on the sphere-constrained objective; each trial
/// renormalizes every column and is accepted only if the objective drops.
pub fn unit_sphere_a_step(problem: &SphereProblem<'_>, a0: &Matrix, budget: &SolverBudget) -> Matrix {
    let mut a = a0.clone();
    normalize_columns(&mut a);
    let mut val = problem.value(&a);
    // curvature bound of the smooth part as the initial step
    let gscale = (0..problem.gram.rows())
        .map(|i| problem.gram[(i, i)])
        .sum::<f64>()
        .max(1e-300);
    let mut t = 1.0 / (2.0 * problem.eta * gscale + 2.0 * problem.lambda * problem.system.h.rows() as f64);
    for _ in 0..budget.max_iterations {
        let g = problem.gradient(&a);
        let gn = g.frobenius();
        if gn <= budget.tolerance {
            break;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let mut trial = a.clone();
            trial.add_scaled(-t, &g);
            normalize_columns(&mut trial);
            let tv = problem.value(&trial);
            if tv < val {
                a = trial;
                val = tv;
                accepted = true;
                t *= 2.0;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    a
}

/// Minimum-norm solution of `H x = f` via CG on `H Hᵀ y = f`, `x = Hᵀ y`,
/// with a dense Cholesky fallback when CG stalls.
pub fn min_norm_solve(h: &SparseMatrix, f: &[f64], tol: f64) -> Vec<f64> {
    let budget = SolverBudget {
        max_iterations: 20 * h.rows().max(10),
        tolerance: 1e-15,
    };
    let out = cg_solve(|y| h.matvec(&h.tr_matvec(y)), f, None, &budget);
    let x = h.tr_matvec(&out.x);
    let res = residual_inf(h, &x, f);
    if res <= tol {
        return x;
    }
    let g = h.outer_gram();
    let scale = (0..g.rows()).map(|i| g[(i, i)]).fold(0.0, f64::max).max(1e-300);
    let (chol, _) = Cholesky::factor_shifted(&g, 1e-14 * scale);
    let mut y = chol.solve(f);
    let mut x2 = h.tr_matvec(&y);
    // iterative refinement
    for _ in 0..3 {
        let r: Vec<f64> = f.iter().zip(h.matvec(&x2)).map(|(a, b)| a - b).collect();
        let dy = chol.solve(&r);
        for (yi, d) in y.iter_mut().zip(&dy) {
            *yi += d;
        }
        x2 = h.tr_matvec(&y);
    }
    if residual_inf(h, &x2, f) < res {
        x2
    } else {
        x
    }
}

pub fn residual_inf(h: &SparseMatrix, x: &[f64], f: &[f64]) -> f64 {
    h.matvec(x)
        .iter()
        .zip(f)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}
