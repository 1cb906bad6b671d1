//! Filter learning: tight frames by split Bregman over the perfect
//! reconstruction constraints, the penalty relaxation, redundant and
//! critically sampled bi-frames, reconstruction-filter design and the
//! lowpass constraint.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bank::{BankKind, FilterBank};
use crate::error::{Error, Result};
use crate::linalg::{norm2, random_orthogonal, Cholesky, Matrix};
use crate::patches::{l1, Patches};
use crate::prox::{hard, huber_prox, shrink};
use crate::signal::{Filter, SamplingMatrix, Signal};
use crate::solvers::{
    cg_solve, constrained_a_step_gram, flat_of, matrix_of, min_norm_solve, normalize_columns, procrustes,
    residual_inf, unit_sphere_a_step, SolverBudget, SphereProblem, TightConstraints, CONSTRAINT_TOLERANCE,
    PROJECTION_TOLERANCE,
};
use crate::transform::decompose;
use crate::uep::{build_h, build_system, penalty_value_grad, uep_residual_time, Fixed};
use crate::wavelets::builtin_bank_nd;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sparsity {
    L1,
    L0,
    /// Huber penalty with the given `δ`.
    Huber(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    RandomOrthogonal,
    WaveletBank(String),
    Explicit(FilterBank),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub m: usize,
    pub support: Vec<usize>,
    /// 0 for scalar filters, otherwise the channel count the filters span.
    pub channels: usize,
    pub sampling: SamplingMatrix,
    pub eta: f64,
    pub lambda: f64,
    pub sparsity: Sparsity,
    pub init: Init,
    pub max_outer: usize,
    pub rel_tolerance: f64,
    pub lowpass_constraint: bool,
    pub seed: u64,
    /// Budget of each constrained filter update inside an outer iteration.
    pub inner: SolverBudget,
    /// Budget of the conjugate-gradient solves.
    pub cg: SolverBudget,
}

impl LearnConfig {
    pub fn new(m: usize, support: Vec<usize>, sampling: SamplingMatrix) -> Self {
        LearnConfig {
            m,
            support,
            channels: 0,
            sampling,
            eta: 1e2,
            lambda: 1e3,
            sparsity: Sparsity::L1,
            init: Init::RandomOrthogonal,
            max_outer: 200,
            rel_tolerance: 1e-6,
            lowpass_constraint: false,
            seed: 0,
            inner: SolverBudget {
                max_iterations: 3,
                tolerance: 1e-10,
            },
            cg: SolverBudget {
                max_iterations: 500,
                tolerance: 1e-12,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidInput("need at least one filter".into()));
        }
        if self.support.is_empty() || self.support.contains(&0) {
            return Err(Error::InvalidInput(format!("bad support {:?}", self.support)));
        }
        if self.support.len() != self.sampling.ndim() {
            return Err(Error::DimensionMismatch(format!(
                "support {:?} vs sampling {:?}",
                self.support,
                self.sampling.diag()
            )));
        }
        if !(self.eta > 0.0) || !(self.lambda > 0.0) {
            return Err(Error::InvalidInput("eta and lambda must be positive".into()));
        }
        if let Sparsity::Huber(d) = self.sparsity {
            if !(d > 0.0) {
                return Err(Error::InvalidInput("huber delta must be positive".into()));
            }
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidInput("max_outer must be at least 1".into()));
        }
        Ok(())
    }

    fn taps_per_filter(&self) -> usize {
        self.support.iter().product::<usize>() * self.channels.max(1)
    }

    fn template(&self, kind: BankKind) -> Result<FilterBank> {
        let r = self.taps_per_filter();
        let filters = (0..self.m)
            .map(|_| Filter::with_channels(self.support.clone(), self.channels, vec![0.0; r]))
            .collect::<Result<Vec<_>>>()?;
        FilterBank::new(filters, self.sampling.clone(), kind)
    }

    fn prox(&self, y: f64) -> f64 {
        let t = 1.0 / self.eta;
        match self.sparsity {
            Sparsity::L1 => shrink(y, t),
            Sparsity::L0 => hard(y, libm::sqrt(2.0 * t)),
            Sparsity::Huber(d) => huber_prox(y, t, d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// `Σ ‖W_A x‖₁` of the iterate.
    pub objective: f64,
    /// Constraint residual of the iterate (UEP, orthogonality or `‖HB - f‖∞`).
    pub residual: f64,
    pub rel_change: f64,
    /// The iterate improved on every earlier one and became the running result.
    pub accepted: bool,
    /// Filter-major taps of the iterate.
    pub taps: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearnTrace {
    pub rows: Vec<TraceRow>,
}

impl LearnTrace {
    fn push(&mut self, iteration: usize, objective: f64, residual: f64, rel_change: f64, accepted: bool, taps: Vec<f64>) {
        self.rows.push(TraceRow {
            iteration,
            objective,
            residual,
            rel_change,
            accepted,
            taps,
        });
    }

    /// Objectives of the accepted iterates, in order.
    pub fn accepted_objectives(&self) -> Vec<f64> {
        self.rows.iter().filter(|r| r.accepted).map(|r| r.objective).collect()
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.rows.iter().filter(|r| r.accepted).map(|r| r.objective).next_back()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,objective,residual,relChange,accepted\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{}\n",
                r.iteration, r.objective, r.residual, r.rel_change, r.accepted as u8
            ));
        }
        out
    }
}

/// `Σ_x Σ_l ‖T_{a_l} x‖₁` evaluated through the transform.
pub fn sparsity_objective(batch: &[Signal], bank: &FilterBank) -> Result<f64> {
    let mut total = 0.0;
    for x in batch {
        total += decompose(x, bank)?.l1_norm();
    }
    Ok(total)
}

pub fn init_bank(cfg: &LearnConfig) -> Result<FilterBank> {
    cfg.validate()?;
    let bank = match &cfg.init {
        Init::RandomOrthogonal => {
            let r = cfg.taps_per_filter();
            if cfg.m > r {
                return Err(Error::InvalidInput(format!(
                    "{} orthogonal columns do not fit in {} taps",
                    cfg.m, r
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let u = random_orthogonal(r, &mut rng);
            let s = 1.0 / libm::sqrt(r as f64);
            let taps = Matrix::from_fn(r, cfg.m, |p, l| u[(p, l)] * s);
            cfg.template(BankKind::Frame)?.with_tap_matrix(&taps)?
        }
        Init::WaveletBank(name) => {
            let b = builtin_bank_nd(name, cfg.support.len())?;
            check_geometry(&b, cfg)?;
            b
        }
        Init::Explicit(b) => {
            check_geometry(b, cfg)?;
            b.clone()
        }
    };
    Ok(bank)
}

/// Seeded random tight frame: a random isometry times one random degree-one
/// paraunitary factor `I - P + z_i^{-1} P` per extra polyphase tap along each
/// axis, so the filters use their whole support.
///
/// Needs `M | r` and `m >= |det M|` (channel axis included).
pub fn random_tight_frame(cfg: &LearnConfig) -> Result<FilterBank> {
    cfg.validate()?;
    let template = cfg.template(BankKind::Frame)?;
    let support = template.full_support();
    let sampling = template.full_sampling();
    let det: usize = sampling.iter().product();
    let m = cfg.m;
    if m < det || support.iter().zip(&sampling).any(|(r, f)| r % f != 0) {
        return Err(Error::UnsupportedCase(
            "random tight frames need M to divide the support and m >= |det M|",
        ));
    }
    let poly: Vec<usize> = support.iter().zip(&sampling).map(|(r, f)| r / f).collect();
    let count: usize = poly.iter().product();
    let pstrides = crate::signal::strides(&poly);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let u = random_orthogonal(m, &mut rng);
    // e[n] is m x det, stored row-major per polyphase index n
    let mut e = vec![Matrix::zeros(m, det); count];
    e[0] = Matrix::from_fn(m, det, |i, j| u[(i, j)]);
    for (axis, &len) in poly.iter().enumerate() {
        for _ in 1..len {
            let v: Vec<f64> = {
                let g = Matrix::random_normal(m, 1, &mut rng);
                let n = norm2(g.data());
                g.data().iter().map(|x| x / n).collect()
            };
            let mut next = vec![Matrix::zeros(m, det); count];
            let mut idx = vec![0usize; poly.len()];
            for (n, cur) in e.iter().enumerate() {
                crate::signal::unravel(n, &poly, &mut idx);
                // (I - P) e[n] + P e[n - e_axis]
                let proj = |mat: &Matrix| -> Matrix {
                    let vt = mat.tr_matvec(&v);
                    Matrix::from_fn(m, det, |i, j| v[i] * vt[j])
                };
                let mut out = cur.clone();
                out.add_scaled(-1.0, &proj(cur));
                if idx[axis] > 0 {
                    out.add_scaled(1.0, &proj(&e[n - pstrides[axis]]));
                }
                next[n] = out;
            }
            e = next;
        }
    }
    let r = template.taps_per_filter();
    let scale = 1.0 / libm::sqrt(det as f64);
    let mut taps = Matrix::zeros(r, m);
    let tstrides = crate::signal::strides(&support);
    let mut nidx = vec![0usize; poly.len()];
    let mut gidx = vec![0usize; poly.len()];
    for (n, mat) in e.iter().enumerate() {
        crate::signal::unravel(n, &poly, &mut nidx);
        for g in 0..det {
            crate::signal::unravel(g, &sampling, &mut gidx);
            let pos: usize = (0..poly.len())
                .map(|ax| (nidx[ax] * sampling[ax] + gidx[ax]) * tstrides[ax])
                .sum();
            for l in 0..m {
                taps[(pos, l)] = mat[(l, g)] * scale;
            }
        }
    }
    template.with_tap_matrix(&taps)
}

fn check_geometry(b: &FilterBank, cfg: &LearnConfig) -> Result<()> {
    if b.m() != cfg.m
        || b.support() != cfg.support.as_slice()
        || b.sampling() != &cfg.sampling
        || b.channel_support() != cfg.channels
    {
        return Err(Error::DimensionMismatch(format!(
            "initial bank has m={}, support {:?}, sampling {:?}; config asks m={}, support {:?}, sampling {:?}",
            b.m(),
            b.support(),
            b.sampling().diag(),
            cfg.m,
            cfg.support,
            cfg.sampling.diag()
        )));
    }
    Ok(())
}

/// Project filters `2..m` onto zero mean and mark the bank as lowpass
/// constrained.
pub fn enforce_lowpass(a: &FilterBank) -> Result<FilterBank> {
    if a.m() < 2 {
        return Err(Error::InvalidInput("lowpass constraint needs at least two filters".into()));
    }
    let mut taps = a.tap_matrix();
    let r = taps.rows();
    for l in 1..a.m() {
        let mean = taps.col(l).iter().sum::<f64>() / r as f64;
        for p in 0..r {
            taps[(p, l)] -= mean;
        }
    }
    let out = a.with_tap_matrix(&taps)?;
    check_lowpass(&out)?;
    Ok(out.mark_lowpass_constrained())
}

fn check_lowpass(a: &FilterBank) -> Result<()> {
    let s = a.filters()[0].tap_sum();
    if s.abs() < 1e-10 {
        return Err(Error::LowpassDegenerate { tap_sum: s });
    }
    Ok(())
}

/// Project onto the tight-frame set; when Gauss-Newton stalls from `a`,
/// restart from a randomly mixed lazy frame.
fn feasible_start(a: &FilterBank, cons: &TightConstraints, seed: u64) -> Result<FilterBank> {
    let first = match cons.restore(a, PROJECTION_TOLERANCE) {
        Ok(b) => return Ok(b),
        Err(e) => e,
    };
    let support = a.full_support();
    let sampling = a.full_sampling();
    let det: usize = sampling.iter().product();
    let (r, m) = (a.taps_per_filter(), a.m());
    if det > m || support.iter().zip(&sampling).any(|(s, f)| s < f) {
        return Err(first);
    }
    let mut lazy = Matrix::zeros(r, m);
    let strides = crate::signal::strides(&support);
    let mut gamma = vec![0usize; sampling.len()];
    for g in 0..det {
        crate::signal::unravel(g, &sampling, &mut gamma);
        let pos: usize = gamma.iter().zip(&strides).map(|(a, b)| a * b).sum();
        lazy[(pos, g)] = 1.0 / libm::sqrt(det as f64);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let q = random_orthogonal(m, &mut rng);
    let mixed = lazy.matmul(&q);
    let scale = 1.0 / libm::sqrt(r as f64);
    for attempt in 0..6 {
        let mut trial = mixed.clone();
        let noise = Matrix::random_normal(r, m, &mut rng);
        trial.add_scaled(scale / (1 << attempt) as f64, &noise);
        if let Ok(b) = cons.restore(&a.with_tap_matrix(&trial)?, PROJECTION_TOLERANCE) {
            return Ok(b);
        }
    }
    cons.restore(&a.with_tap_matrix(&mixed)?, PROJECTION_TOLERANCE)
}

fn rel_change(new: &[f64], old: &[f64]) -> f64 {
    let d: f64 = new.iter().zip(old).map(|(a, b)| (a - b) * (a - b)).sum();
    libm::sqrt(d) / norm2(old).max(1e-300)
}

fn check_batch(batch: &[Signal]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty training batch".into()));
    }
    Ok(())
}

/// Tight frame learning by split Bregman.
///
/// Returns the iterate with the smallest objective; the trace marks it and
/// every earlier improvement as accepted.
pub fn learn_frame(batch: &[Signal], cfg: &LearnConfig) -> Result<(FilterBank, LearnTrace)> {
    check_batch(batch)?;
    let mut a = init_bank(cfg)?.with_kind(BankKind::Frame);
    if cfg.lowpass_constraint && a.m() < 2 {
        return Err(Error::InvalidInput("lowpass constraint needs at least two filters".into()));
    }
    let patches = Patches::new(batch, &a)?;
    let cons = TightConstraints::new(&a, cfg.lowpass_constraint);
    if cons.residual(&a) > CONSTRAINT_TOLERANCE && cfg.init == Init::RandomOrthogonal {
        if let Ok(b) = random_tight_frame(cfg) {
            a = b;
        }
    }
    if cons.residual(&a) > CONSTRAINT_TOLERANCE {
        a = feasible_start(&a, &cons, cfg.seed)?;
    }
    if cfg.lowpass_constraint {
        check_lowpass(&a)?;
        a = a.mark_lowpass_constrained();
    }
    let mut xa = patches.apply(&a.tap_matrix());
    let obj0 = l1(&xa);
    let mut trace = LearnTrace::default();
    trace.push(0, obj0, cons.residual(&a), 0.0, true, a.flat_taps());
    let mut best = (obj0, a.clone());
    let mut u = Matrix::zeros(xa.rows(), xa.cols());
    for k in 1..=cfg.max_outer {
        let mut d = xa.clone();
        d.add_scaled(1.0, &u);
        d.data_mut().iter_mut().for_each(|v| *v = cfg.prox(*v));
        let target = d.sub(&u);
        let cross = patches.apply_t(&target);
        let next = constrained_a_step_gram(&patches.gram, &cross, &a, &cons, &cfg.inner)?;
        xa = patches.apply(&next.tap_matrix());
        u.add_scaled(1.0, &xa);
        u.add_scaled(-1.0, &d);
        let obj = l1(&xa);
        let change = rel_change(&next.flat_taps(), &a.flat_taps());
        let accepted = obj < best.0;
        if accepted {
            best = (obj, next.clone());
        }
        trace.push(k, obj, cons.residual(&next), change, accepted, next.flat_taps());
        if !obj.is_finite() || obj > 1e3 * obj0 {
            return Err(Error::Diverged {
                iteration: k,
                objective: obj,
            });
        }
        a = next;
        if change < cfg.rel_tolerance {
            break;
        }
    }
    if cfg.lowpass_constraint {
        check_lowpass(&best.1)?;
    }
    Ok((best.1, trace))
}

/// Run [`learn_frame`] from `restarts` seeds (`cfg.seed`, `cfg.seed + 1`, ...)
/// and keep the run with the smallest objective. Returns the winning seed.
pub fn learn_frame_restarts(
    batch: &[Signal],
    cfg: &LearnConfig,
    restarts: usize,
) -> Result<(FilterBank, LearnTrace, u64)> {
    let mut best: Option<(f64, FilterBank, LearnTrace, u64)> = None;
    let mut last_err = None;
    for i in 0..restarts.max(1) {
        let mut c = cfg.clone();
        c.seed = cfg.seed.wrapping_add(i as u64);
        match learn_frame(batch, &c) {
            Ok((bank, trace)) => {
                let obj = trace.final_objective().unwrap_or(f64::INFINITY);
                if best.as_ref().is_none_or(|b| obj < b.0) {
                    best = Some((obj, bank, trace, c.seed));
                }
            }
            Err(e) if e.is_numerical() || matches!(e, Error::ConstraintStalled { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    match best {
        Some((_, bank, trace, seed)) => Ok((bank, trace, seed)),
        None => Err(last_err.unwrap_or(Error::InvalidInput("no restarts".into()))),
    }
}

/// Penalty relaxation: BFGS with Armijo backtracking on the smoothed sparsity
/// term plus `η Σ_k (Tr(AAᵀ, k) - δ_k)²` (1D, `M = 1`).
///
/// The constraint is not enforced; the trace reports the UEP residual reached.
/// Accepted rows are the steps that lowered the penalized objective.
pub fn learn_frame_penalty(batch: &[Signal], cfg: &LearnConfig) -> Result<(FilterBank, LearnTrace)> {
    check_batch(batch)?;
    if cfg.support.len() != 1 || !cfg.sampling.is_identity() || cfg.channels != 0 {
        return Err(Error::UnsupportedCase("penalty learning is for 1D filters with M = 1"));
    }
    let eta = cfg.eta;
    let mut a = init_bank(cfg)?.with_kind(BankKind::Frame);
    let n = a.m() * a.taps_per_filter();
    let (mut f, mut g) = penalty_value_grad(&a, batch, eta)?;
    let mut x = a.flat_taps();
    let mut trace = LearnTrace::default();
    let residual = |b: &FilterBank| uep_residual_time(b, b);
    trace.push(0, sparsity_objective(batch, &a)?, residual(&a)?, 0.0, true, x.clone());
    let mut hinv = Matrix::identity(n);
    hinv.scale(1.0 / norm2(&g).max(1.0));
    for k in 1..=cfg.max_outer {
        let mut p: Vec<f64> = hinv.matvec(&g).iter().map(|v| -v).collect();
        let mut slope: f64 = p.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            hinv = Matrix::identity(n);
            hinv.scale(1.0 / norm2(&g).max(1.0));
            p = g.iter().map(|v| -v / norm2(&g).max(1.0)).collect();
            slope = p.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                break;
            }
        }
        let mut t = 1.0;
        let mut step = None;
        for _ in 0..50 {
            let xt: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + t * b).collect();
            let bt = a.with_flat_taps(&xt)?;
            let (ft, gt) = penalty_value_grad(&bt, batch, eta)?;
            if ft <= f + 1e-4 * t * slope {
                step = Some((xt, bt, ft, gt));
                break;
            }
            t *= 0.5;
        }
        let Some((xt, bt, ft, gt)) = step else { break };
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * norm2(&s) * norm2(&y) {
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        let change = rel_change(&xt, &x);
        let df = f - ft;
        x = xt;
        a = bt;
        f = ft;
        g = gt;
        trace.push(k, sparsity_objective(batch, &a)?, residual(&a)?, change, true, x.clone());
        if change < cfg.rel_tolerance && df <= cfg.rel_tolerance * f.abs().max(1.0) {
            break;
        }
    }
    Ok((a, trace))
}

fn bfgs_update(hinv: &mut Matrix, s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = hinv.matvec(y);
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            hinv[(i, j)] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Householder reflector whose first column is `ones / √r`; the remaining
/// columns are an orthonormal basis of the zero-mean vectors.
fn dc_basis(r: usize) -> Matrix {
    let u = 1.0 / libm::sqrt(r as f64);
    let mut v = vec![-u; r];
    v[0] += 1.0;
    let vv: f64 = v.iter().map(|x| x * x).sum();
    if vv == 0.0 {
        return Matrix::identity(r);
    }
    Matrix::from_fn(r, r, |i, j| if i == j { 1.0 } else { 0.0 } - 2.0 * v[i] * v[j] / vv)
}

/// Orthonormal-column projection; with `lowpass` the first column is pinned
/// to the normalized constant filter and the rest are confined to zero mean.
fn orthonormal_projection(y: &Matrix, lowpass: bool) -> Result<Matrix> {
    if !lowpass {
        return Ok(procrustes(y)?.p);
    }
    let (r, m) = (y.rows(), y.cols());
    let q = dc_basis(r);
    let q_rest = Matrix::from_fn(r, r - 1, |i, j| q[(i, j + 1)]);
    let y_rest = Matrix::from_fn(r, m - 1, |i, j| y[(i, j + 1)]);
    let p_rest = q_rest.matmul(&procrustes(&q_rest.tr_matmul(&y_rest))?.p);
    let u = 1.0 / libm::sqrt(r as f64);
    Ok(Matrix::from_fn(r, m, |i, j| if j == 0 { u } else { p_rest[(i, j - 1)] }))
}

fn orthogonality_residual(p: &Matrix) -> f64 {
    p.gram().sub(&Matrix::identity(p.cols())).frobenius()
}

/// Redundant bi-frame decomposition filters with orthonormal columns.
/// Pair with [`design_recon_filters`].
pub fn learn_biframe_decomp(batch: &[Signal], cfg: &LearnConfig) -> Result<(FilterBank, LearnTrace)> {
    check_batch(batch)?;
    let init = init_bank(cfg)?.with_kind(BankKind::BiframeDecomp);
    let r = init.taps_per_filter();
    let m = init.m();
    if m > r {
        return Err(Error::InvalidInput(format!("{m} orthonormal filters do not fit in {r} taps")));
    }
    if cfg.lowpass_constraint && m < 2 {
        return Err(Error::InvalidInput("lowpass constraint needs at least two filters".into()));
    }
    let patches = Patches::new(batch, &init)?;
    let (eta, lambda) = (cfg.eta, cfg.lambda);
    let mut p = orthonormal_projection(&init.tap_matrix(), cfg.lowpass_constraint)?;
    let mut a = p.clone();
    let mut xa = patches.apply(&a);
    let mut f = Matrix::zeros(xa.rows(), m);
    let mut c = Matrix::zeros(r, m);
    let obj0 = l1(&patches.apply(&p));
    let mut trace = LearnTrace::default();
    trace.push(0, obj0, orthogonality_residual(&p), 0.0, true, flat_of(&p));
    let mut best = (obj0, p.clone());
    let mut normal = patches.gram.clone();
    normal.scale(eta);
    for i in 0..r {
        normal[(i, i)] += lambda;
    }
    for k in 1..=cfg.max_outer {
        let mut d = xa.clone();
        d.add_scaled(1.0, &f);
        d.data_mut().iter_mut().for_each(|v| *v = cfg.prox(*v));
        let mut rhs = patches.apply_t(&d.sub(&f));
        rhs.scale(eta);
        rhs.add_scaled(lambda, &p.sub(&c));
        for l in 0..m {
            let col = rhs.col(l);
            let start = a.col(l);
            let out = cg_solve(|v| normal.matvec(v), &col, Some(&start), &cfg.cg);
            a.set_col(l, &out.x);
        }
        let mut y = a.clone();
        y.add_scaled(1.0, &c);
        let next = orthonormal_projection(&y, cfg.lowpass_constraint)?;
        xa = patches.apply(&a);
        f.add_scaled(1.0, &xa);
        f.add_scaled(-1.0, &d);
        c.add_scaled(1.0, &a.sub(&next));
        let obj = l1(&patches.apply(&next));
        let change = next.sub(&p).frobenius() / p.frobenius().max(1e-300);
        let accepted = obj < best.0;
        if accepted {
            best = (obj, next.clone());
        }
        trace.push(k, obj, orthogonality_residual(&next), change, accepted, flat_of(&next));
        if !obj.is_finite() || obj > 1e3 * obj0 {
            return Err(Error::Diverged {
                iteration: k,
                objective: obj,
            });
        }
        p = next;
        if change < cfg.rel_tolerance {
            break;
        }
    }
    let mut bank = init.with_tap_matrix(&best.1)?;
    if cfg.lowpass_constraint {
        check_lowpass(&bank)?;
        bank = bank.mark_lowpass_constrained();
    }
    Ok((bank, trace))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReconMode {
    MinNorm,
    /// Total-variation design with per-filter norm target `α`.
    Tv(f64),
}

/// Equality bound every designed reconstruction bank meets.
pub const RECON_TOLERANCE: f64 = 1e-8;

/// Reconstruction filters `B` with `H(A) B = f` for a given decomposition
/// bank.
pub fn design_recon_filters(a: &FilterBank, mode: ReconMode) -> Result<FilterBank> {
    let sys = build_h(a);
    let x = min_norm_solve(&sys.h, &sys.f, RECON_TOLERANCE * 1e-2);
    let res = residual_inf(&sys.h, &x, &sys.f);
    if res > RECON_TOLERANCE {
        return Err(Error::InconsistentSystem { residual: res });
    }
    let x = match mode {
        ReconMode::MinNorm => x,
        ReconMode::Tv(alpha) => {
            if !(alpha > 0.0) {
                return Err(Error::InvalidInput("tv norm target must be positive".into()));
            }
            tv_design(a, &sys.h, &sys.f, x, alpha)?
        }
    };
    Ok(a.with_flat_taps(&x)?.with_kind(BankKind::BiframeRecon))
}

/// Affine projection onto `{x : H x = f}` with a cached factorization of `HHᵀ`.
struct AffineProjector<'a> {
    h: &'a crate::linalg::SparseMatrix,
    f: &'a [f64],
    chol: Cholesky,
}

impl<'a> AffineProjector<'a> {
    fn new(h: &'a crate::linalg::SparseMatrix, f: &'a [f64]) -> Self {
        let g = h.outer_gram();
        let scale = (0..g.rows()).map(|i| g[(i, i)]).fold(0.0, f64::max).max(1e-300);
        let (chol, _) = Cholesky::factor_shifted(&g, 1e-14 * scale);
        AffineProjector { h, f, chol }
    }

    fn project(&self, x: &mut [f64]) {
        for _ in 0..3 {
            let r: Vec<f64> = self.h.matvec(x).iter().zip(self.f).map(|(a, b)| a - b).collect();
            let y = self.chol.solve(&r);
            for (xi, d) in x.iter_mut().zip(self.h.tr_matvec(&y)) {
                *xi -= d;
            }
        }
    }
}

/// Forward differences of every filter along every axis of its support.
fn grad_ops(a: &FilterBank) -> Vec<(usize, usize)> {
    let support = a.full_support();
    let r = a.taps_per_filter();
    let strides = crate::signal::strides(&support);
    let mut pairs = Vec::new();
    let mut idx = vec![0usize; support.len()];
    for l in 0..a.m() {
        for p in 0..r {
            crate::signal::unravel(p, &support, &mut idx);
            for (ax, &s) in strides.iter().enumerate() {
                if idx[ax] + 1 < support[ax] {
                    pairs.push((l * r + p, l * r + p + s));
                }
            }
        }
    }
    pairs
}

fn tv_design(
    a: &FilterBank,
    h: &crate::linalg::SparseMatrix,
    f: &[f64],
    mut x: Vec<f64>,
    alpha: f64,
) -> Result<Vec<f64>> {
    let proj = AffineProjector::new(h, f);
    let pairs = grad_ops(a);
    let r = a.taps_per_filter();
    let mu = 10.0;
    let mut d = vec![0.0; pairs.len()];
    let mut e = vec![0.0; pairs.len()];
    let diff = |x: &[f64]| -> Vec<f64> { pairs.iter().map(|&(i, j)| x[j] - x[i]).collect() };
    // ‖∇‖² ≤ 4 × (axes)
    let step = 1.0 / (4.0 * a.full_support().len() as f64 * mu);
    for _ in 0..300 {
        let g = diff(&x);
        for k in 0..d.len() {
            d[k] = shrink(g[k] + e[k], 1.0 / mu);
        }
        for _ in 0..5 {
            let g = diff(&x);
            let mut grad = vec![0.0; x.len()];
            for (k, &(i, j)) in pairs.iter().enumerate() {
                let w = mu * (g[k] - d[k] + e[k]);
                grad[j] += w;
                grad[i] -= w;
            }
            for (xi, gi) in x.iter_mut().zip(&grad) {
                *xi -= step * gi;
            }
            proj.project(&mut x);
        }
        let g = diff(&x);
        for k in 0..e.len() {
            e[k] += g[k] - d[k];
        }
        for l in 0..a.m() {
            let blk = &mut x[l * r..(l + 1) * r];
            let n = norm2(blk);
            if n > 0.0 {
                let s = 1.0 + 0.5 * (alpha / n - 1.0);
                blk.iter_mut().for_each(|v| *v *= s);
            }
        }
        proj.project(&mut x);
    }
    let res = residual_inf(h, &x, f);
    if res > RECON_TOLERANCE {
        return Err(Error::InconsistentSystem { residual: res });
    }
    Ok(x)
}

/// Jointly learned critically sampled pair `(A, B)` with unit-norm
/// decomposition filters.
///
/// A final Gauss-Newton pass on `(A, B)` drives `H(A) B = f` and the unit
/// norms to machine precision from wherever the splitting loop ends.
pub fn learn_biframe_critical(
    batch: &[Signal],
    cfg: &LearnConfig,
) -> Result<(FilterBank, FilterBank, LearnTrace)> {
    check_batch(batch)?;
    let init = init_bank(cfg)?.with_kind(BankKind::BiframeDecomp);
    let r = init.taps_per_filter();
    let m = init.m();
    let patches = Patches::new(batch, &init)?;
    let (eta, lambda) = (cfg.eta, cfg.lambda);
    let mut a = init.tap_matrix();
    if cfg.lowpass_constraint {
        a = enforce_lowpass(&init)?.tap_matrix();
    }
    normalize_columns(&mut a);
    let bank_of = |t: &Matrix| init.with_tap_matrix(t);
    let mut b = least_squares_recon(&bank_of(&a)?, None, &cfg.cg);
    let mut xa = patches.apply(&a);
    let mut fd = Matrix::zeros(xa.rows(), m);
    let h0 = build_h(&bank_of(&a)?);
    let mut c = vec![0.0; h0.f.len()];
    let obj0 = l1(&xa);
    let mut trace = LearnTrace::default();
    trace.push(0, obj0, h0.residual(&b), 0.0, true, flat_of(&a));
    let mut best = (f64::INFINITY, a.clone(), b.clone());
    if h0.residual(&b) <= 1e-2 {
        best = (obj0, a.clone(), b.clone());
    }
    for k in 1..=cfg.max_outer {
        let mut d = xa.clone();
        d.add_scaled(1.0, &fd);
        d.data_mut().iter_mut().for_each(|v| *v = cfg.prox(*v));
        let t = d.sub(&fd);
        let cross = patches.apply_t(&t);
        let bbank = bank_of(&matrix_of(&b, r, m))?;
        let ksys = build_system(&bbank, Fixed::Reconstruction);
        let problem = SphereProblem {
            gram: &patches.gram,
            cross: &cross,
            target_norm2: t.frobenius() * t.frobenius(),
            eta,
            lambda,
            system: &ksys,
            dual: &c,
        };
        let mut next = unit_sphere_a_step(&problem, &a, &cfg.inner);
        if cfg.lowpass_constraint {
            next = enforce_lowpass(&bank_of(&next)?)?.tap_matrix();
            normalize_columns(&mut next);
        }
        let abank = bank_of(&next)?;
        b = least_squares_recon(&abank, Some((&b, &c)), &cfg.cg);
        xa = patches.apply(&next);
        fd.add_scaled(1.0, &xa);
        fd.add_scaled(-1.0, &d);
        let hsys = build_h(&abank);
        let hb = hsys.h.matvec(&b);
        for i in 0..c.len() {
            c[i] += hb[i] - hsys.f[i];
        }
        let res = hsys.residual(&b);
        let obj = l1(&xa);
        let change = next.sub(&a).frobenius() / a.frobenius().max(1e-300);
        // only iterates that are close to perfect reconstruction compete
        let accepted = res <= 1e-2 && obj < best.0;
        if accepted {
            best = (obj, next.clone(), b.clone());
        }
        trace.push(k, obj, res, change, accepted, flat_of(&next));
        if !obj.is_finite() || obj > 1e3 * obj0 {
            return Err(Error::Diverged {
                iteration: k,
                objective: obj,
            });
        }
        a = next;
        if change < cfg.rel_tolerance {
            break;
        }
    }
    if !best.0.is_finite() {
        best = (l1(&patches.apply(&a)), a, b);
    }
    let (am, bv) = polish_pair(&init, &best.1, &best.2, cfg.lowpass_constraint)?;
    let abank = bank_of(&am)?;
    let res = build_h(&abank).residual(&bv);
    if res > 1e-2 {
        return Err(Error::ConstraintStalled { residual: res });
    }
    let mut abank = abank;
    if cfg.lowpass_constraint {
        check_lowpass(&abank)?;
        abank = abank.mark_lowpass_constrained();
    }
    let bbank = abank.with_flat_taps(&bv)?.with_kind(BankKind::BiframeRecon);
    Ok((abank.with_kind(BankKind::BiframeDecomp), bbank, trace))
}

/// `argmin_b ‖H(A) b - f + C‖²` by CG on the normal equations, warm started.
fn least_squares_recon(a: &FilterBank, warm: Option<(&Vec<f64>, &Vec<f64>)>, budget: &SolverBudget) -> Vec<f64> {
    let sys = build_h(a);
    let target: Vec<f64> = match warm {
        Some((_, c)) => sys.f.iter().zip(c.iter()).map(|(f, c)| f - c).collect(),
        None => sys.f.clone(),
    };
    let rhs = sys.h.tr_matvec(&target);
    let start = warm.map(|(b, _)| b.as_slice());
    cg_solve(|v| sys.h.tr_matvec(&sys.h.matvec(v)), &rhs, start, budget).x
}

/// Gauss-Newton (minimum-norm steps) on `H(A) b = f`, `‖a_l‖² = 1` and, when
/// asked, zero sums of filters `2..m`.
fn polish_pair(template: &FilterBank, a: &Matrix, b: &[f64], lowpass: bool) -> Result<(Matrix, Vec<f64>)> {
    let r = a.rows();
    let m = a.cols();
    let n = r * m;
    let mut av = flat_of(a);
    let mut bv = b.to_vec();
    let eval = |av: &[f64], bv: &[f64]| -> Result<(Vec<f64>, Matrix)> {
        let abank = template.with_flat_taps(av)?;
        let bbank = template.with_flat_taps(bv)?;
        let hsys = build_h(&abank);
        let ksys = build_system(&bbank, Fixed::Reconstruction);
        let mut c: Vec<f64> = hsys.h.matvec(bv).iter().zip(&hsys.f).map(|(a, b)| a - b).collect();
        let eqs = c.len();
        let extra = m + if lowpass { m - 1 } else { 0 };
        let mut j = Matrix::zeros(eqs + extra, 2 * n);
        let kd = ksys.h.to_dense();
        let hd = hsys.h.to_dense();
        for i in 0..eqs {
            j.row_mut(i)[..n].copy_from_slice(kd.row(i));
            j.row_mut(i)[n..].copy_from_slice(hd.row(i));
        }
        for l in 0..m {
            let blk = &av[l * r..(l + 1) * r];
            c.push(0.5 * (blk.iter().map(|v| v * v).sum::<f64>() - 1.0));
            for p in 0..r {
                j[(eqs + l, l * r + p)] = blk[p];
            }
        }
        if lowpass {
            for l in 1..m {
                c.push(av[l * r..(l + 1) * r].iter().sum());
                for p in 0..r {
                    j[(eqs + m + l - 1, l * r + p)] = 1.0;
                }
            }
        }
        Ok((c, j))
    };
    let inf = |c: &[f64]| c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (mut c, mut j) = eval(&av, &bv)?;
    let mut res = inf(&c);
    for _ in 0..50 {
        if res <= 1e-14 {
            break;
        }
        let jjt = j.matmul(&j.transpose());
        let scale = (0..jjt.rows()).map(|i| jjt[(i, i)]).fold(0.0, f64::max).max(1e-300);
        let (chol, _) = Cholesky::factor_shifted(&jjt, 1e-12 * scale);
        let delta = j.tr_matvec(&chol.solve(&c));
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..20 {
            let na: Vec<f64> = av.iter().zip(&delta[..n]).map(|(x, d)| x - t * d).collect();
            let nb: Vec<f64> = bv.iter().zip(&delta[n..]).map(|(x, d)| x - t * d).collect();
            let (nc, nj) = eval(&na, &nb)?;
            let nres = inf(&nc);
            if nres < res {
                av = na;
                bv = nb;
                c = nc;
                j = nj;
                res = nres;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let mut am = matrix_of(&av, r, m);
    // exact unit norms; the equations absorb the tiny rescale
    normalize_columns(&mut am);
    Ok((am, bv))
}

#[cfg(test)]
mod tests;
