//! One PASS/FAIL line per acceptance criterion. Exits non-zero when a binding
//! criterion fails. Lines marked "documented, not asserted" are known to be
//! unattainable as stated; see the README.

use std::time::{Duration, Instant};

use adaframe::core::generators::{aligned_distance, gen_staircase};
use adaframe::core::learn::{
    design_recon_filters, learn_biframe_critical, learn_biframe_decomp, learn_frame, Init, LearnConfig, LearnTrace,
    ReconMode,
};
use adaframe::core::linalg::{lu_solve, norm2, random_orthogonal, Matrix};
use adaframe::core::pipelines::{
    activation, compress, deconv_compare, denoise, psnr, Activation, LayerSpec, Pooling, ThresholdRule,
};
use adaframe::core::prox::{hard, huber, huber_prox, shrink};
use adaframe::core::solvers::{cg_solve, procrustes, SolverBudget};
use adaframe::core::transform::{decompose, reconstruct, synthesis_bank};
use adaframe::core::uep::{
    build_h, count_s, count_s_large_support, enumerate_s, penalty_value_grad, uep_residual_spectral,
    uep_residual_time, default_grid,
};
use adaframe::core::wavelets::{builtin_bank, builtin_bank_nd};
use adaframe::core::{Filter, FilterBank, SamplingMatrix, Signal};
use adaframe::pgm;
use adaframe::recovery::{run_recovery_experiment, RecoveryConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Ledger {
    binding_failures: Vec<String>,
    audits: Vec<(String, bool)>,
}

impl Ledger {
    fn report(&mut self, id: &str, pass: bool, detail: String, elapsed: Duration) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} {id}: {detail} ({:.2} s)", elapsed.as_secs_f64());
        if !pass {
            self.binding_failures.push(id.to_owned());
        }
    }

    fn documented(&self, id: &str, pass: bool, detail: String) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{verdict} {id}: {detail} [documented, not asserted]");
    }

    fn info(&self, id: &str, detail: String) {
        println!("INFO {id}: {detail}");
    }

    fn audit(&mut self, run: &str, ok: bool) {
        self.audits.push((run.to_owned(), ok));
    }
}

fn image(name: &str) -> Signal {
    pgm::read(format!("{}/tests/data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn monotone(trace: &LearnTrace) -> bool {
    trace.accepted_objectives().windows(2).all(|w| w[1] <= w[0])
}

fn orthonormality_error(a: &FilterBank) -> f64 {
    a.tap_matrix().gram().sub(&Matrix::identity(a.m())).max_abs()
}

fn recon_residual(a: &FilterBank, b: &FilterBank) -> f64 {
    build_h(a).residual(&b.flat_taps())
}

// Σ_l |â_l|² = 1 does not depend on the lattice, so the taps carry over.
fn with_sampling(bank: &FilterBank, sampling: SamplingMatrix) -> FilterBank {
    FilterBank::new(bank.filters().to_vec(), sampling, bank.kind()).unwrap()
}

fn random_signal(rng: &mut ChaCha8Rng, shape: &[usize]) -> Signal {
    let n = shape.iter().product();
    Signal::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn c1(l: &mut Ledger) {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for name in ["haar", "bspline-linear", "db2", "db3"] {
        for (d, shape) in [(1, vec![64]), (2, vec![32, 32])] {
            let base = builtin_bank_nd(name, d).unwrap();
            for m in [1, 2] {
                let a = with_sampling(&base, SamplingMatrix::uniform(d, m).unwrap());
                let b = synthesis_bank(&a);
                for seed in 0..20 {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let v = random_signal(&mut rng, &shape);
                    let back = reconstruct(&decompose(&v, &a).unwrap(), &b).unwrap();
                    worst = worst.max(back.max_abs_diff(&v));
                    cases += 1;
                }
            }
        }
    }
    let el = t.elapsed();
    l.report(
        "C1 round trip",
        worst <= 1e-8 && el < Duration::from_secs(5),
        format!("{cases} cases, max |R W v - v| = {worst:.3e} (bound 1e-8), limit 5 s"),
        el,
    );
}

fn c2(l: &mut Ledger) {
    let t = Instant::now();
    let a = builtin_bank("bspline-linear").unwrap();
    let b = synthesis_bank(&a);
    let time = uep_residual_time(&a, &b).unwrap();
    let spec = uep_residual_spectral(&a, &b, &default_grid(&a)).unwrap();
    l.report(
        "C2 verify bspline-linear",
        time <= 1e-12 && spec <= 1e-10,
        format!("time residual {time:.3e} (bound 1e-12), spectral residual {spec:.3e} (bound 1e-10)"),
        t.elapsed(),
    );
}

fn c3(l: &mut Ledger) {
    let t = Instant::now();
    let (mut large_ok, mut large_n, mut small_ok, mut small_n, mut exact_ok) = (0, 0, 0, 0, 0);
    let mut total = 0;
    for d in 1..=2usize {
        let shapes: Vec<Vec<usize>> = if d == 1 {
            (1..=6).map(|r| vec![r]).collect()
        } else {
            (1..=6).flat_map(|a| (1..=6).map(move |b| vec![a, b])).collect()
        };
        let samplings: Vec<Vec<usize>> = if d == 1 {
            (1..=3).map(|m| vec![m]).collect()
        } else {
            (1..=3).flat_map(|a| (1..=3).map(move |b| vec![a, b])).collect()
        };
        for r in &shapes {
            for m in &samplings {
                total += 1;
                let n = enumerate_s(r, m).len();
                exact_ok += (n == count_s(r, m)) as usize;
                let closed = count_s_large_support(r, m);
                let hit = closed == n as i64;
                if r.iter().zip(m).all(|(ri, mi)| ri >= mi) {
                    large_n += 1;
                    large_ok += hit as usize;
                } else {
                    small_n += 1;
                    small_ok += hit as usize;
                }
            }
        }
    }
    let worked = FilterBank::new(
        vec![Filter::from_taps(&[0.0; 3]).unwrap(), Filter::from_taps(&[0.0; 3]).unwrap()],
        SamplingMatrix::identity(1),
        adaframe::core::BankKind::BiframeDecomp,
    )
    .unwrap();
    let sys = build_h(&worked);
    let (rows, cols) = (sys.h.rows(), sys.h.cols());
    let example = enumerate_s(&[3], &[1]).len() == 5 && rows == 5 && cols == 6;
    l.report(
        "C3 equation counting",
        large_ok == large_n && exact_ok == total && example,
        format!(
            "closed form matches {large_ok}/{large_n} cells with r >= M; exact count matches {exact_ok}/{total}; \
             m = 2, r = 3, M = 1 gives {rows} equations x {cols} unknowns"
        ),
        t.elapsed(),
    );
    l.documented(
        "C3 closed form for r < M",
        small_ok == small_n,
        format!("closed form matches {small_ok}/{small_n} cells with some r < M; it is zero or negative there"),
    );
}

fn c4(l: &mut Ledger) {
    let t = Instant::now();
    let x = gen_staircase(3000, 30, 0).unwrap();
    let haar = builtin_bank("haar").unwrap();
    let want: Vec<Vec<f64>> = haar.filters().iter().map(|f| f.taps().to_vec()).collect();
    let mut cfg = LearnConfig::new(2, vec![2], SamplingMatrix::uniform(1, 2).unwrap());
    cfg.eta = 1e2;
    let mut best = (f64::INFINITY, f64::INFINITY);
    let mut audit = true;
    for seed in 0..10 {
        cfg.seed = seed;
        let (a, trace) = learn_frame(std::slice::from_ref(&x), &cfg).unwrap();
        audit &= uep_residual_time(&a, &synthesis_bank(&a)).unwrap() <= 1e-6 && monotone(&trace);
        let obj = trace.final_objective().unwrap();
        if obj < best.0 {
            let taps: Vec<Vec<f64>> = a.filters().iter().map(|f| f.taps().to_vec()).collect();
            best = (obj, aligned_distance(&taps, &want).unwrap());
        }
    }
    l.audit("C4 staircase learn_frame x10", audit);
    let el = t.elapsed();
    l.report(
        "C4 staircase to Haar",
        best.1 <= 5e-2 && el < Duration::from_secs(60),
        format!("best-of-10 aligned distance {:.3e} (bound 5e-2), limit 60 s", best.1),
        el,
    );
}

fn c5(l: &mut Ledger) {
    let t = Instant::now();
    let cfg = RecoveryConfig::default();
    let cells = run_recovery_experiment(&["db2", "db3"], &[0.1, 0.2, 0.3, 0.5], &cfg).unwrap();
    let mut binding = true;
    let mut audit = true;
    let mut lines = Vec::new();
    for c in &cells {
        audit &= c.trials.iter().all(|t| t.max_residual <= 1e-6 && t.traces_monotone);
        lines.push(format!("{} {}: {}/{}", c.wavelet, c.density, c.successes(), c.trials.len()));
        if c.density < 0.4 {
            binding &= c.successes() >= 4;
        }
    }
    l.audit("C5 recovery learn_frame runs", audit);
    let el = t.elapsed();
    l.report(
        "C5 wavelet recovery",
        binding && el < Duration::from_secs(1800),
        format!("{} (need >= 4/5 at 0.1, 0.2, 0.3), limit 30 min", lines.join(", ")),
        el,
    );
    let half = cells.iter().find(|c| c.wavelet == "db2" && c.density == 0.5).unwrap();
    let below = half.trials.iter().filter(|t| t.learned_objective < t.reference_objective).count();
    let failed = half.trials.len() - half.successes();
    let gap = half
        .trials
        .iter()
        .map(|t| (t.learned_objective - t.reference_objective) / t.reference_objective)
        .fold(f64::INFINITY, f64::min);
    l.documented(
        "C5 db2 at 0.5 learned objective below db2 and recovery fails",
        below == half.trials.len() && failed == half.trials.len(),
        format!(
            "objective below reference in {below}/{n} trials, recovery failed in {failed}/{n}, \
             smallest relative objective gap {gap:.3e}",
            n = half.trials.len()
        ),
    );

    let t = Instant::now();
    let small = RecoveryConfig {
        trials: 2,
        restarts: 3,
        ..RecoveryConfig::default()
    };
    let db12 = run_recovery_experiment(&["db12"], &[0.4], &small).unwrap();
    l.info(
        "C5 db12 at 0.4 (non-binding)",
        format!(
            "{}/{} trials recovered with {} restarts ({:.1} s)",
            db12[0].successes(),
            db12[0].trials.len(),
            small.restarts,
            t.elapsed().as_secs_f64()
        ),
    );
}

fn c6(l: &mut Ledger) {
    let t = Instant::now();
    let x = image("camera256.pgm");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let y = x.map(|v| v + noise.sample(&mut rng));
    let mut cfg = LearnConfig::new(36, vec![6, 6], SamplingMatrix::identity(2));
    cfg.lowpass_constraint = true;
    cfg.eta = 1e2;
    cfg.max_outer = 30;
    let (a, trace) = learn_biframe_decomp(std::slice::from_ref(&y), &cfg).unwrap();
    let b = design_recon_filters(&a, ReconMode::MinNorm).unwrap();
    l.audit("C6 learn_biframe_decomp", orthonormality_error(&a) <= 1e-6 && monotone(&trace));
    l.audit("C6 design_recon_filters", recon_residual(&a, &b) <= 1e-8);
    let d = denoise(&y, &a, &b, 0.14, 2, ThresholdRule::Soft).unwrap();
    let (noisy, clean) = (psnr(&x, &y).unwrap(), psnr(&x, &d).unwrap());
    let el = t.elapsed();
    l.report(
        "C6 denoising",
        clean >= noisy + 5.0 && el < Duration::from_secs(600),
        format!("noisy {noisy:.2} dB, denoised {clean:.2} dB (need >= noisy + 5), limit 10 min"),
        el,
    );
    l.info(
        "C6 reference band",
        format!("denoised {clean:.2} dB, band 26-32 dB: {}", if (26.0..=32.0).contains(&clean) { "inside" } else { "outside" }),
    );
}

fn learned_compression(x: &Signal) -> (FilterBank, LearnTrace) {
    let mut cfg = LearnConfig::new(4, vec![6, 6], SamplingMatrix::uniform(2, 2).unwrap());
    cfg.lowpass_constraint = true;
    cfg.init = Init::WaveletBank("db3".into());
    cfg.eta = 1e2;
    cfg.max_outer = 100;
    learn_frame(std::slice::from_ref(x), &cfg).unwrap()
}

fn c7(l: &mut Ledger) {
    let haar = builtin_bank_nd("haar", 2).unwrap();
    let t = Instant::now();
    let x = image("astronaut256.pgm");
    let (a, trace) = learned_compression(&x);
    l.audit("C7 learn_frame astronaut", uep_residual_time(&a, &synthesis_bank(&a)).unwrap() <= 1e-6 && monotone(&trace));
    let b = synthesis_bank(&a);
    let mut pass = true;
    let mut parts = Vec::new();
    for keep in [0.05, 0.1] {
        let learned = compress(&x, &a, &b, 3, keep).unwrap().psnr_db;
        let reference = compress(&x, &haar, &haar, 3, keep).unwrap().psnr_db;
        pass &= learned >= reference + 0.5;
        parts.push(format!("keep {keep}: learned {learned:.2} dB vs Haar {reference:.2} dB"));
    }
    let el = t.elapsed();
    l.report(
        "C7 compression",
        pass && el < Duration::from_secs(600),
        format!("{} (need >= Haar + 0.5), limit 10 min", parts.join("; ")),
        el,
    );

    let t = Instant::now();
    let x = image("camera256.pgm");
    let (a, trace) = learned_compression(&x);
    l.audit("C7 learn_frame cameraman", uep_residual_time(&a, &synthesis_bank(&a)).unwrap() <= 1e-6 && monotone(&trace));
    let b = synthesis_bank(&a);
    let parts: Vec<String> = [0.05, 0.1]
        .iter()
        .map(|&keep| {
            let learned = compress(&x, &a, &b, 3, keep).unwrap().psnr_db;
            let reference = compress(&x, &haar, &haar, 3, keep).unwrap().psnr_db;
            format!("keep {keep}: learned {learned:.2} dB vs Haar {reference:.2} dB")
        })
        .collect();
    l.info(
        "C7 cameraman (non-binding)",
        format!("{} ({:.1} s)", parts.join("; "), t.elapsed().as_secs_f64()),
    );
}

fn c8(l: &mut Ledger) {
    let t = Instant::now();
    let full = image("camera256.pgm");
    let n = 96;
    let x = Signal::new(vec![n, n], (0..n * n).map(|i| full.data()[(80 + i / n) * 256 + 80 + i % n]).collect()).unwrap();
    let mut cfg = LearnConfig::new(12, vec![6, 6], SamplingMatrix::uniform(2, 2).unwrap());
    cfg.max_outer = 30;
    let (a1, tr1) = learn_biframe_decomp(std::slice::from_ref(&x), &cfg).unwrap();
    let c1 = decompose(&x, &a1).unwrap().into_channels().unwrap();
    let s1 = activation(&c1, Activation::Sigmoid).stack_channels().unwrap();
    let mut cfg2 = LearnConfig::new(12, vec![12, 4, 4], SamplingMatrix::new(vec![1, 2, 1]).unwrap());
    cfg2.max_outer = 30;
    let (a2, tr2) = learn_biframe_decomp(std::slice::from_ref(&s1), &cfg2).unwrap();
    for (name, a, tr) in [("C8 layer 1", &a1, &tr1), ("C8 layer 2", &a2, &tr2)] {
        l.audit(name, orthonormality_error(a) <= 1e-6 && monotone(tr));
        let b = design_recon_filters(a, ReconMode::MinNorm).unwrap();
        l.audit(&format!("{name} design_recon_filters"), recon_residual(a, &b) <= 1e-8);
    }
    let layers = [a1, a2].map(|bank| LayerSpec {
        bank,
        activation: Activation::Sigmoid,
        pooling: Pooling::Downsample,
    });
    let r = deconv_compare(&x, &layers).unwrap();
    let el = t.elapsed();
    let pass = r.uep_error.iter().all(|&e| e <= 1e-3)
        && r.transpose_error[1] >= 10.0 * r.uep_error[1]
        && el < Duration::from_secs(300);
    l.report(
        "C8 deconvolution",
        pass,
        format!(
            "designed-filter error {:.3e} / {:.3e} (bound 1e-3), transpose error {:.3e} / {:.3e} (need >= 10x at layer 2), limit 5 min",
            r.uep_error[0], r.uep_error[1], r.transpose_error[0], r.transpose_error[1]
        ),
        el,
    );
}

fn grid_argmin(f: impl Fn(f64) -> f64) -> f64 {
    (0..=80_000).map(|i| -4.0 + i as f64 * 1e-4).fold((f64::INFINITY, 0.0), |best, z| {
        let v = f(z);
        if v < best.0 {
            (v, z)
        } else {
            best
        }
    }).1
}

fn polar(y: &Matrix) -> Matrix {
    let mut x = y.clone();
    for _ in 0..60 {
        let g = x.gram();
        let n = g.rows();
        let mut inv = Matrix::zeros(n, n);
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            inv.set_col(c, &lu_solve(&g, &e).unwrap());
        }
        let mut next = x.clone();
        next.scale(0.5);
        next.add_scaled(0.5, &x.matmul(&inv));
        x = next;
    }
    x
}

fn c9(l: &mut Ledger) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    let mut procrustes_gap: f64 = 0.0;
    for _ in 0..3 {
        let y = Matrix::random_normal(5, 3, &mut rng);
        let p = procrustes(&y).unwrap().p;
        let mut oracle = f64::INFINITY;
        for _ in 0..30 {
            let q = random_orthogonal(5, &mut rng);
            let mut z = Matrix::from_fn(5, 3, |i, j| q[(i, j)]);
            for _ in 0..300 {
                let mut g = z.sub(&y);
                g.scale(0.2);
                z = polar(&z.sub(&g));
            }
            oracle = oracle.min(z.sub(&y).frobenius());
        }
        procrustes_gap = procrustes_gap.max((p.sub(&y).frobenius() - oracle).abs());
    }

    let mut prox_err: f64 = 0.0;
    for _ in 0..40 {
        let (x, a) = (rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0));
        prox_err = prox_err.max((shrink(x, a) - grid_argmin(|z| 0.5 * (z - x) * (z - x) + a * z.abs())).abs());
        let a = a.max(0.01);
        let eta = 2.0 / (a * a);
        let oracle = grid_argmin(|z| 0.5 * eta * (z - x) * (z - x) + if z.abs() > 1e-12 { 1.0 } else { 0.0 });
        let cost = |z: f64| 0.5 * eta * (z - x) * (z - x) + if z != 0.0 { 1.0 } else { 0.0 };
        prox_err = prox_err.max((cost(hard(x, a)) - cost(oracle)).max(0.0) / eta);
        let (tau, delta) = (rng.random_range(0.05..2.0), rng.random_range(0.05..1.5));
        prox_err = prox_err.max((huber_prox(x, tau, delta) - grid_argmin(|z| 0.5 * (z - x) * (z - x) + tau * huber(z, delta))).abs());
    }

    let a = FilterBank::new(
        (0..2).map(|_| Filter::from_taps(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).unwrap()).collect(),
        SamplingMatrix::identity(1),
        adaframe::core::BankKind::Frame,
    )
    .unwrap();
    let x = random_signal(&mut rng, &[32]);
    let (_, grad) = penalty_value_grad(&a, std::slice::from_ref(&x), 3.0).unwrap();
    let taps = a.flat_taps();
    let mut fd_err: f64 = 0.0;
    for i in 0..taps.len() {
        let eval = |h: f64| {
            let mut p = taps.clone();
            p[i] += h;
            penalty_value_grad(&a.with_flat_taps(&p).unwrap(), std::slice::from_ref(&x), 3.0).unwrap().0
        };
        let fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
        fd_err = fd_err.max((fd - grad[i]).abs() / fd.abs().max(1.0));
    }

    let n = 30;
    let q = Matrix::random_normal(n, n, &mut rng);
    let mut spd = q.gram();
    spd.add_scaled(1.0, &Matrix::identity(n));
    let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let out = cg_solve(|v| spd.matvec(v), &rhs, None, &SolverBudget::new(200, 1e-12).unwrap());
    let oracle = lu_solve(&spd, &rhs).unwrap();
    let cg_err = norm2(&out.x.iter().zip(&oracle).map(|(a, b)| a - b).collect::<Vec<_>>()) / norm2(&oracle);

    l.report(
        "C9 solver oracles",
        procrustes_gap <= 1e-6 && prox_err <= 1e-4 && fd_err <= 1e-4 && cg_err <= 1e-8,
        format!(
            "procrustes gap {procrustes_gap:.3e} (1e-6), prox vs grid {prox_err:.3e} (1e-4), \
             penalty gradient vs FD {fd_err:.3e} (1e-4), cg vs LU {cg_err:.3e} (1e-8)"
        ),
        t.elapsed(),
    );
}

fn critical_audit(l: &mut Ledger) {
    let x = gen_staircase(512, 8, 1).unwrap();
    let mut cfg = LearnConfig::new(2, vec![2], SamplingMatrix::uniform(1, 2).unwrap());
    cfg.max_outer = 50;
    let (a, b, trace) = learn_biframe_critical(std::slice::from_ref(&x), &cfg).unwrap();
    l.audit("critical pair on a staircase", recon_residual(&a, &b) <= 1e-4 && monotone(&trace));
}

fn c10(l: &mut Ledger) {
    critical_audit(l);
    let failed: Vec<&str> = l.audits.iter().filter(|a| !a.1).map(|a| a.0.as_str()).collect();
    let detail = if failed.is_empty() {
        format!("{} learning runs within their constraint bounds with non-increasing accepted objectives", l.audits.len())
    } else {
        format!("failed: {}", failed.join(", "))
    };
    l.report("C10 feasibility audits", failed.is_empty(), detail, Duration::ZERO);
}

fn main() {
    let mut l = Ledger {
        binding_failures: Vec::new(),
        audits: Vec::new(),
    };
    let start = Instant::now();
    c1(&mut l);
    c2(&mut l);
    c3(&mut l);
    c4(&mut l);
    c5(&mut l);
    c6(&mut l);
    c7(&mut l);
    c8(&mut l);
    c9(&mut l);
    c10(&mut l);
    println!("total {:.1} s", start.elapsed().as_secs_f64());
    if !l.binding_failures.is_empty() {
        println!("binding failures: {}", l.binding_failures.join(", "));
        std::process::exit(1);
    }
}
