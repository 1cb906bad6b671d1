use super::*;
use crate::generators::{aligned_distance, gen_staircase};
use crate::transform::{reconstruct, synthesis_bank};
use crate::uep::uep_residual_time;
use crate::wavelets::builtin_bank;
use rand::Rng;

fn cfg1(m: usize, r: usize, factor: usize) -> LearnConfig {
    LearnConfig::new(m, vec![r], SamplingMatrix::new(vec![factor]).unwrap())
}

fn filters(b: &FilterBank) -> Vec<Vec<f64>> {
    b.filters().iter().map(|f| f.taps().to_vec()).collect()
}

fn random_signal(n: usize, rng: &mut ChaCha8Rng) -> Signal {
    Signal::from_vec((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn init_examples() {
    let mut c = LearnConfig::new(3, vec![3], SamplingMatrix::new(vec![2]).unwrap());
    c.init = Init::WaveletBank("bspline-linear".into());
    let b = init_bank(&c).unwrap();
    assert_eq!(b.filters()[0].taps(), &[0.25, 0.5, 0.25]);
    let mut c = cfg1(2, 2, 2);
    c.init = Init::WaveletBank("haar".into());
    assert_eq!(filters(&init_bank(&c).unwrap()), vec![vec![0.5, 0.5], vec![0.5, -0.5]]);
    c.init = Init::WaveletBank("nope".into());
    assert!(matches!(init_bank(&c), Err(Error::UnknownBankName(_))));
    for r in 1..6 {
        let mut c = cfg1(r, r, 1);
        c.seed = r as u64;
        let b = init_bank(&c).unwrap();
        assert!(uep_residual_time(&b, &b).unwrap() <= 1e-12);
    }
    // M divides r: the scaled orthogonal init is a tight frame as well
    let b = init_bank(&cfg1(4, 4, 2)).unwrap();
    assert!(uep_residual_time(&b, &b).unwrap() <= 1e-12);
}

#[test]
fn enforce_lowpass_examples() {
    let bs = builtin_bank("bspline-linear").unwrap();
    let e = enforce_lowpass(&bs).unwrap();
    assert!(e.frobenius_distance(&bs) < 1e-16);
    assert!(e.lowpass_constrained());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut c = LearnConfig::new(4, vec![3, 3], SamplingMatrix::uniform(2, 1).unwrap());
    c.seed = 9;
    let b = init_bank(&c).unwrap();
    let e = enforce_lowpass(&b).unwrap();
    for f in &e.filters()[1..] {
        assert!(f.tap_sum().abs() < 1e-15);
    }
    let constant = Signal::new(vec![6, 6], vec![rng.random_range(0.5..1.0); 36]).unwrap();
    let maps = decompose(&constant, &e).unwrap();
    for m in &maps.maps[1..] {
        assert!(m.data().iter().all(|v| v.abs() < 1e-14));
    }
    let degenerate = builtin_bank("haar").unwrap().with_flat_taps(&[0.5, -0.5, 0.5, 0.5]).unwrap();
    assert!(matches!(enforce_lowpass(&degenerate), Err(Error::LowpassDegenerate { .. })));
}

fn haar_dist(b: &FilterBank) -> f64 {
    aligned_distance(&filters(b), &filters(&builtin_bank("haar").unwrap())).unwrap()
}

#[test]
fn staircase_learns_haar() {
    let x = gen_staircase(600, 30, 1).unwrap();
    let (bank, trace, _) = learn_frame_restarts(core::slice::from_ref(&x), &cfg1(2, 2, 2), 3).unwrap();
    assert!(haar_dist(&bank) <= 5e-2, "distance {}", haar_dist(&bank));
    assert!(uep_residual_time(&bank, &bank).unwrap() <= 1e-6);
    assert!(trace.final_objective().unwrap() <= trace.rows[0].objective);
}

#[test]
fn frame_trace_audit_and_determinism() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let batch: Vec<Signal> = (0..2).map(|_| random_signal(64, &mut rng)).collect();
    let mut c = cfg1(3, 4, 2);
    c.max_outer = 30;
    c.seed = 4;
    let (bank, trace) = learn_frame(&batch, &c).unwrap();
    assert!(uep_residual_time(&bank, &bank).unwrap() <= 1e-6);
    for row in &trace.rows {
        let b = bank.with_flat_taps(&row.taps).unwrap();
        let direct = sparsity_objective(&batch, &b).unwrap();
        assert!((direct - row.objective).abs() <= 1e-10 * direct.max(1.0));
        assert!(row.residual <= 1e-6);
    }
    let acc = trace.accepted_objectives();
    assert!(acc.windows(2).all(|w| w[1] <= w[0]));
    let (again, trace2) = learn_frame(&batch, &c).unwrap();
    assert_eq!(again, bank);
    assert_eq!(trace2, trace);
    // round trip with the synthesis bank
    for _ in 0..20 {
        let v = random_signal(32, &mut rng);
        let back = reconstruct(&decompose(&v, &bank).unwrap(), &synthesis_bank(&bank)).unwrap();
        assert!(back.max_abs_diff(&v) <= 1e-6);
    }
}

#[test]
fn frame_with_lowpass_constraint() {
    let x = gen_staircase(256, 10, 3).unwrap();
    let mut c = cfg1(3, 4, 2);
    c.lowpass_constraint = true;
    c.max_outer = 40;
    let (bank, _) = learn_frame(core::slice::from_ref(&x), &c).unwrap();
    assert!(bank.lowpass_constrained());
    for f in &bank.filters()[1..] {
        assert!(f.tap_sum().abs() < 1e-9);
    }
    assert!(uep_residual_time(&bank, &bank).unwrap() <= 1e-6);
}

#[test]
fn penalty_learning() {
    let x = gen_staircase(400, 30, 7).unwrap();
    let mut c = cfg1(2, 2, 1);
    c.eta = 1e-300;
    c.max_outer = 50;
    let (_, trace) = learn_frame_penalty(core::slice::from_ref(&x), &c).unwrap();
    assert!(trace.rows.len() > 1);
    c.eta = 1e6;
    c.max_outer = 400;
    let (bank, trace) = learn_frame_penalty(core::slice::from_ref(&x), &c).unwrap();
    let res = uep_residual_time(&bank, &bank).unwrap();
    assert!(res <= 1e-3, "residual {res}");
    assert_eq!(trace.rows.last().unwrap().residual, res);
    let c2 = cfg1(2, 2, 2);
    assert!(matches!(
        learn_frame_penalty(core::slice::from_ref(&x), &c2),
        Err(Error::UnsupportedCase(_))
    ));
}

#[test]
fn biframe_decomp_is_orthonormal_and_invertible() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = Signal::new(vec![16, 16], (0..256).map(|i| ((i % 16) as f64 * 0.7).sin() + 0.1 * rng.random_range(-1.0..1.0)).collect()).unwrap();
    let mut c = LearnConfig::new(6, vec![3, 3], SamplingMatrix::uniform(2, 1).unwrap());
    c.max_outer = 40;
    c.lowpass_constraint = true;
    let (a, trace) = learn_biframe_decomp(core::slice::from_ref(&x), &c).unwrap();
    let t = a.tap_matrix();
    assert!(t.gram().sub(&Matrix::identity(6)).frobenius() <= 1e-6);
    assert!(trace.rows.iter().all(|r| r.residual <= 1e-6));
    let b = design_recon_filters(&a, ReconMode::MinNorm).unwrap();
    assert!(build_h(&a).residual(&b.flat_taps()) <= 1e-8);
    for _ in 0..20 {
        let v = Signal::new(vec![8, 8], (0..64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let back = reconstruct(&decompose(&v, &a).unwrap(), &b).unwrap();
        assert!(back.max_abs_diff(&v) <= 1e-6);
    }
}

#[test]
fn biframe_decomp_on_delta_terminates() {
    let mut d = vec![0.0; 32];
    d[5] = 1.0;
    let x = Signal::from_vec(d).unwrap();
    let mut c = cfg1(2, 3, 1);
    c.max_outer = 20;
    let (a, trace) = learn_biframe_decomp(core::slice::from_ref(&x), &c).unwrap();
    assert!(trace.rows.len() <= 21);
    // each unit-norm column sees the delta's whole energy: ‖X a‖₁ ≥ ‖a‖₂ = 1
    assert!(trace.final_objective().unwrap() >= 2.0 - 1e-9);
    assert_eq!(a.m(), 2);
}

#[test]
fn recon_design_examples() {
    let haar = builtin_bank("haar").unwrap();
    let b = design_recon_filters(&haar, ReconMode::MinNorm).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v = random_signal(16, &mut rng);
    let back = reconstruct(&decompose(&v, &haar).unwrap(), &b).unwrap();
    assert!(back.max_abs_diff(&v) <= 1e-8);
    // a tight frame is its own dual, so the minimum-norm dual is no longer
    for name in ["db2", "db3", "bspline-linear"] {
        let a = builtin_bank(name).unwrap();
        let b = design_recon_filters(&a, ReconMode::MinNorm).unwrap();
        let bn = norm2(&b.flat_taps());
        assert!(bn <= norm2(&a.flat_taps()) + 1e-12, "{name}");
    }
    // critically sampled and not perfect-reconstruction: no dual exists
    let bad = builtin_bank("db2").unwrap().with_flat_taps(&[0.3, 0.5, 0.1, -0.2, 0.4, 0.1, -0.6, 0.2]).unwrap();
    assert!(matches!(
        design_recon_filters(&bad, ReconMode::MinNorm),
        Err(Error::InconsistentSystem { .. })
    ));
}

#[test]
fn tv_design_meets_the_affine_constraint() {
    let mut c = LearnConfig::new(4, vec![3, 3], SamplingMatrix::uniform(2, 1).unwrap());
    c.seed = 3;
    let a = init_bank(&c).unwrap();
    let a = a.with_tap_matrix(&procrustes(&a.tap_matrix()).unwrap().p).unwrap();
    let tv = |b: &FilterBank| -> f64 {
        grad_ops(b).iter().map(|&(i, j)| (b.flat_taps()[j] - b.flat_taps()[i]).abs()).sum()
    };
    let mn = design_recon_filters(&a, ReconMode::MinNorm).unwrap();
    let b = design_recon_filters(&a, ReconMode::Tv(0.3)).unwrap();
    assert!(build_h(&a).residual(&b.flat_taps()) <= 1e-8);
    assert!(tv(&b) <= tv(&mn) + 1e-9);
}

#[test]
fn critical_pair_on_staircase() {
    let x = gen_staircase(512, 20, 2).unwrap();
    let mut c = cfg1(2, 2, 2);
    c.max_outer = 60;
    let (a, b, trace) = learn_biframe_critical(core::slice::from_ref(&x), &c).unwrap();
    for f in a.filters() {
        assert!((f.norm() - 1.0).abs() <= 1e-12);
    }
    assert!(build_h(&a).residual(&b.flat_taps()) <= 1e-4);
    let acc = trace.accepted_objectives();
    assert!(acc.windows(2).all(|w| w[1] <= w[0]));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let v = random_signal(64, &mut rng);
        let back = reconstruct(&decompose(&v, &a).unwrap(), &b).unwrap();
        assert!(back.max_abs_diff(&v) <= 1e-3);
    }
    // unit-norm Haar is feasible; the learned pair does at least as well
    let h = 1.0 / core::f64::consts::SQRT_2;
    let haar = a.with_flat_taps(&[h, h, h, -h]).unwrap();
    let learned = sparsity_objective(core::slice::from_ref(&x), &a).unwrap();
    assert!(learned <= sparsity_objective(core::slice::from_ref(&x), &haar).unwrap() + 1e-9);
}

#[test]
fn random_tight_frames_are_tight() {
    for (m, support, sampling) in [
        (2, vec![4], vec![2]),
        (2, vec![6], vec![2]),
        (3, vec![6], vec![3]),
        (5, vec![4], vec![2]),
        (4, vec![6, 6], vec![2, 2]),
        (6, vec![4, 2], vec![2, 1]),
    ] {
        for seed in 0..5 {
            let mut c = LearnConfig::new(m, support.clone(), SamplingMatrix::new(sampling.clone()).unwrap());
            c.seed = seed;
            let b = random_tight_frame(&c).unwrap();
            assert!(uep_residual_time(&b, &b).unwrap() <= 1e-13, "{support:?} {sampling:?}");
        }
    }
    let c = cfg1(1, 4, 2);
    assert!(matches!(random_tight_frame(&c), Err(Error::UnsupportedCase(_))));
}
