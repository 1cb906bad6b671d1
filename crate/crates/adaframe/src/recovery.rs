//! Recovery of built-in wavelets from signals that are sparse in them.

use std::fmt::Write;

use adaframe_core::generators::{aligned_distance, gen_sparse_wavelet_signal};
use adaframe_core::learn::{learn_frame, sparsity_objective, LearnConfig};
use adaframe_core::transform::synthesis_bank;
use adaframe_core::uep::uep_residual_time;
use adaframe_core::wavelets::builtin_bank;
use adaframe_core::{FilterBank, Result};

use crate::report::sig17;

/// Aligned distance below which a learned bank counts as the reference.
pub const SUCCESS_DISTANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryConfig {
    pub length: usize,
    pub trials: usize,
    /// Upper bound on learning runs per trial.
    pub restarts: usize,
    pub seed: u64,
    pub eta: f64,
    pub max_outer: usize,
    /// Stop a trial's restarts at the first success. The success flag is
    /// unaffected; objectives then cover only the runs made.
    pub stop_on_success: bool,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            length: 1024,
            trials: 5,
            restarts: 50,
            seed: 0,
            eta: 1e2,
            max_outer: 200,
            stop_on_success: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub wavelet: String,
    pub density: f64,
    pub trial: usize,
    /// Smallest aligned distance to the reference over the restarts.
    pub min_distance: f64,
    /// Aligned distance of the restart with the smallest objective.
    pub best_objective_distance: f64,
    pub learned_objective: f64,
    pub reference_objective: f64,
    pub restarts_run: usize,
    pub success: bool,
    /// Largest UEP residual over the learned banks of all restarts.
    pub max_residual: f64,
    /// Every restart's accepted objectives were non-increasing.
    pub traces_monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryCell {
    pub wavelet: String,
    pub density: f64,
    pub trials: Vec<TrialOutcome>,
}

impl RecoveryCell {
    pub fn successes(&self) -> usize {
        self.trials.iter().filter(|t| t.success).count()
    }

    pub fn ratio(&self) -> f64 {
        self.successes() as f64 / self.trials.len().max(1) as f64
    }
}

fn taps(bank: &FilterBank) -> Vec<Vec<f64>> {
    bank.filters().iter().map(|f| f.taps().to_vec()).collect()
}

/// One trial: a fresh sparse signal, then up to `cfg.restarts` seeded runs of
/// [`learn_frame`] with the reference's filter count, support and sampling.
pub fn run_trial(wavelet: &str, density: f64, trial: usize, signal_seed: u64, cfg: &RecoveryConfig) -> Result<TrialOutcome> {
    let reference = builtin_bank(wavelet)?;
    let x = gen_sparse_wavelet_signal(wavelet, density, cfg.length, signal_seed)?;
    let batch = std::slice::from_ref(&x);
    let reference_objective = sparsity_objective(batch, &reference)?;
    let mut lc = LearnConfig::new(reference.m(), reference.support().to_vec(), reference.sampling().clone());
    lc.eta = cfg.eta;
    lc.max_outer = cfg.max_outer;
    let want = taps(&reference);
    let mut min_distance = f64::INFINITY;
    let mut best = (f64::INFINITY, f64::INFINITY);
    let mut restarts_run = 0;
    let mut max_residual: f64 = 0.0;
    let mut traces_monotone = true;
    for r in 0..cfg.restarts.max(1) {
        lc.seed = signal_seed.wrapping_mul(1000).wrapping_add(r as u64);
        restarts_run += 1;
        let (bank, trace) = match learn_frame(batch, &lc) {
            Ok(out) => out,
            Err(e) if e.is_numerical() => continue,
            Err(e) => return Err(e),
        };
        max_residual = max_residual.max(uep_residual_time(&bank, &synthesis_bank(&bank))?);
        traces_monotone &= trace.accepted_objectives().windows(2).all(|w| w[1] <= w[0]);
        let dist = aligned_distance(&taps(&bank), &want)?;
        let obj = trace.final_objective().unwrap_or(f64::INFINITY);
        min_distance = min_distance.min(dist);
        if obj < best.0 {
            best = (obj, dist);
        }
        if cfg.stop_on_success && min_distance < SUCCESS_DISTANCE {
            break;
        }
    }
    Ok(TrialOutcome {
        wavelet: wavelet.into(),
        density,
        trial,
        min_distance,
        best_objective_distance: best.1,
        learned_objective: best.0,
        reference_objective,
        restarts_run,
        success: min_distance < SUCCESS_DISTANCE,
        max_residual,
        traces_monotone,
    })
}

/// Success ratio per `(wavelet, density)` cell. Trial `t` of cell `(i, j)`
/// draws its signal with seed `cfg.seed + 1_000_000 i + 10_000 j + t`.
pub fn run_recovery_experiment(wavelets: &[&str], densities: &[f64], cfg: &RecoveryConfig) -> Result<Vec<RecoveryCell>> {
    let mut cells = Vec::new();
    for (i, w) in wavelets.iter().enumerate() {
        for (j, &density) in densities.iter().enumerate() {
            let trials = (0..cfg.trials)
                .map(|t| {
                    let seed = cfg.seed + 1_000_000 * i as u64 + 10_000 * j as u64 + t as u64;
                    run_trial(w, density, t, seed, cfg)
                })
                .collect::<Result<Vec<_>>>()?;
            cells.push(RecoveryCell {
                wavelet: (*w).into(),
                density,
                trials,
            });
        }
    }
    Ok(cells)
}

/// One row per cell; the signal length is carried as a column.
pub fn cells_csv(cells: &[RecoveryCell], length: usize) -> String {
    let mut out = String::from("wavelet,density,trials,successes,ratio,length\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c.wavelet,
            c.density,
            c.trials.len(),
            c.successes(),
            sig17(c.ratio()),
            length
        );
    }
    out
}

pub fn trials_csv(cells: &[RecoveryCell]) -> String {
    let mut out = String::from(
        "wavelet,density,trial,minDistance,bestObjectiveDistance,learnedObjective,referenceObjective,restarts,success\n",
    );
    for t in cells.iter().flat_map(|c| &c.trials) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            t.wavelet,
            t.density,
            t.trial,
            sig17(t.min_distance),
            sig17(t.best_objective_distance),
            sig17(t.learned_objective),
            sig17(t.reference_objective),
            t.restarts_run,
            t.success as u8
        );
    }
    out
}
