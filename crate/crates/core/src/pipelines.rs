//! Compression, denoising, feature extraction, pooling, activations and the
//! layer-inversion comparison.

use alloc::vec;
use alloc::vec::Vec;

use crate::bank::{CoeffSet, FilterBank};
use crate::error::{Error, Result};
use crate::learn::{design_recon_filters, ReconMode};
use crate::multilevel::{mra_decompose, mra_reconstruct, DecompTree};
use crate::prox::{hard, shrink};
use crate::signal::{divisible, strides, unravel, Signal};
use crate::transform::{decompose, reconstruct, synthesis_bank};

/// `10 log10(255² / MSE)` on the 8-bit scale; inputs in `[0, 1]`.
/// Identical inputs give `f64::INFINITY`.
pub fn psnr(x: &Signal, y: &Signal) -> Result<f64> {
    if !x.same_geometry(y) {
        return Err(Error::ShapeMismatch {
            left: x.full_shape(),
            right: y.full_shape(),
        });
    }
    let n = x.data().len() as f64;
    let mse = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| {
            let d = 255.0 * (a - b);
            d * d
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * libm::log10(255.0 * 255.0 / mse))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionResult {
    pub reconstructed: Signal,
    /// Total coefficients over kept coefficients.
    pub compression_ratio: f64,
    pub kept: usize,
    pub total: usize,
    pub psnr_db: f64,
}

/// Keep the `⌈keep · total⌉` largest MRA coefficients (lowpass included) and
/// reconstruct. Ties go to the smaller index in leaf order, row-major.
pub fn compress(x: &Signal, a: &FilterBank, b: &FilterBank, levels: usize, keep: f64) -> Result<CompressionResult> {
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(Error::InvalidInput(alloc::format!("keep fraction {keep} not in (0, 1]")));
    }
    let mut tree = mra_decompose(x, a, levels)?;
    let leaves: Vec<usize> = (0..tree.nodes.len()).filter(|&i| !tree.nodes[i].expanded).collect();
    let mut all: Vec<(f64, usize)> = Vec::new();
    for &i in &leaves {
        for &v in tree.nodes[i].coeffs.data() {
            all.push((v.abs(), all.len()));
        }
    }
    let total = all.len();
    let kept = (libm::ceil(keep * total as f64) as usize).clamp(1, total);
    all.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.1.cmp(&q.1)));
    let mut mask = vec![false; total];
    for &(_, i) in &all[..kept] {
        mask[i] = true;
    }
    let mut k = 0;
    for &i in &leaves {
        for v in tree.nodes[i].coeffs.data_mut() {
            if !mask[k] {
                *v = 0.0;
            }
            k += 1;
        }
    }
    let reconstructed = mra_reconstruct(&tree, b)?;
    let psnr_db = psnr(x, &reconstructed)?;
    Ok(CompressionResult {
        reconstructed,
        compression_ratio: total as f64 / kept as f64,
        kept,
        total,
        psnr_db,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdRule {
    Soft,
    Hard,
}

/// Threshold every MRA coefficient map at `tau` and reconstruct.
pub fn denoise(x: &Signal, a: &FilterBank, b: &FilterBank, tau: f64, levels: usize, rule: ThresholdRule) -> Result<Signal> {
    denoise_with(x, a, b, tau, levels, rule, false)
}

/// [`denoise`] with the option of leaving the coarsest lowpass map untouched.
pub fn denoise_with(
    x: &Signal,
    a: &FilterBank,
    b: &FilterBank,
    tau: f64,
    levels: usize,
    rule: ThresholdRule,
    exempt_lowpass: bool,
) -> Result<Signal> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidInput("threshold must be non-negative".into()));
    }
    let mut tree = mra_decompose(x, a, levels)?;
    for node in tree.nodes.iter_mut().filter(|n| !n.expanded) {
        if exempt_lowpass && node.filter == 0 {
            continue;
        }
        for v in node.coeffs.data_mut() {
            *v = match rule {
                ThresholdRule::Soft => shrink(*v, tau),
                ThresholdRule::Hard => hard(*v, tau),
            };
        }
    }
    mra_reconstruct(&tree, b)
}

/// All node coefficients of the tree after `relu`, level-major, node order,
/// row-major.
pub fn extract_features(tree: &DecompTree) -> Vec<f64> {
    let mut out = Vec::new();
    for level in 1..=tree.levels {
        for node in tree.nodes_at(level) {
            out.extend(node.coeffs.data().iter().map(|v| v.max(0.0)));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolResult {
    /// Signed entry of largest magnitude per window.
    pub values: Signal,
    /// Row-major offset of that entry inside its window.
    pub switches: Vec<usize>,
    pub window: Vec<usize>,
}

/// Non-overlapping max-magnitude pooling per channel; ties keep the first
/// entry in row-major window order.
pub fn maxpool(v: &Signal, window: &[usize]) -> Result<PoolResult> {
    if window.len() != v.ndim() || window.contains(&0) {
        return Err(Error::DimensionMismatch(alloc::format!(
            "window {window:?} for a {}-dimensional signal",
            v.ndim()
        )));
    }
    if !divisible(v.shape(), window) {
        return Err(Error::ShapeNotDivisible {
            shape: v.shape().to_vec(),
            factor: window.to_vec(),
        });
    }
    let out_shape: Vec<usize> = v.shape().iter().zip(window).map(|(s, w)| s / w).collect();
    let out_len: usize = out_shape.iter().product();
    let win_len: usize = window.iter().product();
    let in_strides = strides(v.shape());
    let channels = v.channels().max(1);
    let mut values = Vec::with_capacity(out_len * channels);
    let mut switches = Vec::with_capacity(out_len * channels);
    let mut o = vec![0usize; window.len()];
    let mut w = vec![0usize; window.len()];
    for c in 0..channels {
        let data = if v.channels() > 0 { v.channel(c) } else { v.data() };
        for oi in 0..out_len {
            unravel(oi, &out_shape, &mut o);
            let mut best = (f64::NEG_INFINITY, 0usize, 0.0);
            for wi in 0..win_len {
                unravel(wi, window, &mut w);
                let idx: usize = (0..window.len()).map(|ax| (o[ax] * window[ax] + w[ax]) * in_strides[ax]).sum();
                let val = data[idx];
                if val.abs() > best.0 {
                    best = (val.abs(), wi, val);
                }
            }
            values.push(best.2);
            switches.push(best.1);
        }
    }
    let values = if v.channels() > 0 {
        Signal::with_channels(out_shape, v.channels(), values)?
    } else {
        Signal::new(out_shape, values)?
    };
    Ok(PoolResult {
        values,
        switches,
        window: window.to_vec(),
    })
}

/// Place each pooled value at its switch, zeros elsewhere.
pub fn unpool(p: &PoolResult) -> Result<Signal> {
    let window = &p.window;
    let win_len: usize = window.iter().product();
    if let Some(&bad) = p.switches.iter().find(|&&s| s >= win_len) {
        return Err(Error::InvalidSwitch {
            index: bad,
            window_len: win_len,
        });
    }
    if p.switches.len() != p.values.data().len() || window.len() != p.values.ndim() {
        return Err(Error::DimensionMismatch("switches do not match pooled values".into()));
    }
    let out_shape: Vec<usize> = p.values.shape().iter().zip(window).map(|(s, w)| s * w).collect();
    let in_len: usize = p.values.shape().iter().product();
    let full_len: usize = out_shape.iter().product();
    let ostrides = strides(&out_shape);
    let channels = p.values.channels().max(1);
    let mut data = vec![0.0; full_len * channels];
    let mut o = vec![0usize; window.len()];
    let mut w = vec![0usize; window.len()];
    for c in 0..channels {
        for i in 0..in_len {
            let k = c * in_len + i;
            unravel(i, p.values.shape(), &mut o);
            unravel(p.switches[k], window, &mut w);
            let idx: usize = (0..window.len()).map(|ax| (o[ax] * window[ax] + w[ax]) * ostrides[ax]).sum();
            data[c * full_len + idx] = p.values.data()[k];
        }
    }
    if p.values.channels() > 0 {
        Signal::with_channels(out_shape, p.values.channels(), data)
    } else {
        Signal::new(out_shape, data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    None,
}

/// Clamp margin of the inverse activations.
pub const ACTIVATION_EPS: f64 = 1e-12;

pub fn activation(v: &Signal, kind: Activation) -> Signal {
    match kind {
        Activation::Sigmoid => v.map(|x| 1.0 / (1.0 + libm::exp(-x))),
        Activation::Tanh => v.map(libm::tanh),
        Activation::None => v.clone(),
    }
}

/// Largest `f64` below one.
const TANH_END: f64 = 1.0 - f64::EPSILON / 2.0;

/// Componentwise inverse. Sigmoid values are clamped `ACTIVATION_EPS` away
/// from 0 and 1, tanh values to the open interval; values outside the closed
/// range are rejected.
pub fn activation_inverse(v: &Signal, kind: Activation) -> Result<Signal> {
    let (lo, hi) = match kind {
        Activation::Sigmoid => (0.0, 1.0),
        Activation::Tanh => (-1.0, 1.0),
        Activation::None => return Ok(v.clone()),
    };
    if let Some(&bad) = v.data().iter().find(|&&x| !(x >= lo && x <= hi)) {
        return Err(Error::OutOfRange { value: bad });
    }
    Ok(match kind {
        Activation::Sigmoid => v.map(|y| {
            let y = y.clamp(ACTIVATION_EPS, 1.0 - ACTIVATION_EPS);
            libm::log(y / (1.0 - y))
        }),
        // only the exact ends are moved; tanh saturates in f64 near |x| = 19
        _ => v.map(|y| libm::atanh(y.clamp(-TANH_END, TANH_END))),
    })
}

/// Clip into the closed range of the activation.
pub fn clip_to_range(v: &Signal, kind: Activation) -> Signal {
    match kind {
        Activation::Sigmoid => v.map(|x| x.clamp(0.0, 1.0)),
        Activation::Tanh => v.map(|x| x.clamp(-1.0, 1.0)),
        Activation::None => v.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pooling {
    /// The bank's own sampling matrix does the pooling.
    Downsample,
    MaxPool(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub bank: FilterBank,
    pub activation: Activation,
    pub pooling: Pooling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvReport {
    /// Relative L2 error of the input recovered from each layer's output with
    /// the transposed (same-tap synthesis) filters.
    pub transpose_error: Vec<f64>,
    /// Same with reconstruction filters designed for perfect reconstruction.
    pub uep_error: Vec<f64>,
}

struct LayerState {
    /// Input in the layout the layer's bank expects.
    input: Signal,
    /// The previous layer's output layout was channel-stacked for this bank.
    stacked: bool,
    switches: Option<PoolResult>,
    output: Signal,
}

/// A multi-channel input meets a scalar bank with one more axis: the channel
/// axis becomes a leading spatial (periodic) axis.
fn adapt_input(v: Signal, bank: &FilterBank) -> Result<(Signal, bool)> {
    if v.channels() > 0 && bank.channel_support() == 0 && bank.ndim() == v.ndim() + 1 {
        Ok((v.stack_channels()?, true))
    } else {
        Ok((v, false))
    }
}

/// Forward pass through `layers`, then invert from every layer's output with
/// both the transposed filters and the designed reconstruction filters.
/// Reconstructed activations are clipped to the activation's range before
/// the inverse is applied.
pub fn deconv_compare(x: &Signal, layers: &[LayerSpec]) -> Result<DeconvReport> {
    if layers.is_empty() {
        return Err(Error::InvalidInput("no layers".into()));
    }
    let mut states: Vec<LayerState> = Vec::new();
    let mut current = x.clone();
    for layer in layers {
        let (input, stacked) = adapt_input(current, &layer.bank)?;
        let coeffs = decompose(&input, &layer.bank)?.into_channels()?;
        let act = activation(&coeffs, layer.activation);
        let (output, switches) = match &layer.pooling {
            Pooling::Downsample => (act, None),
            Pooling::MaxPool(w) => {
                let p = maxpool(&act, w)?;
                (p.values.clone(), Some(p))
            }
        };
        states.push(LayerState {
            input,
            stacked,
            switches,
            output: output.clone(),
        });
        current = output;
    }
    let designed: Vec<FilterBank> = layers
        .iter()
        .map(|l| design_recon_filters(&l.bank, ReconMode::MinNorm))
        .collect::<Result<_>>()?;
    let transposed: Vec<FilterBank> = layers.iter().map(|l| synthesis_bank(&l.bank)).collect();
    let xn = libm::sqrt(x.energy()).max(1e-300);
    let mut report = DeconvReport {
        transpose_error: Vec::new(),
        uep_error: Vec::new(),
    };
    for top in 0..layers.len() {
        for (banks, errs) in [(&transposed, &mut report.transpose_error), (&designed, &mut report.uep_error)] {
            let mut v = states[top].output.clone();
            for k in (0..=top).rev() {
                let layer = &layers[k];
                let state = &states[k];
                let pre = match &state.switches {
                    Some(p) => unpool(&PoolResult {
                        values: v,
                        switches: p.switches.clone(),
                        window: p.window.clone(),
                    })?,
                    None => v,
                };
                let coeffs = activation_inverse(&clip_to_range(&pre, layer.activation), layer.activation)?;
                let mut input = reconstruct(&CoeffSet::from_channels(&coeffs), &banks[k])?;
                if state.stacked {
                    input = input.unstack_channels()?;
                }
                debug_assert_eq!(input.data().len(), state.input.data().len());
                v = input;
            }
            let diff: f64 = v.data().iter().zip(x.data()).map(|(a, b)| (a - b) * (a - b)).sum();
            errs.push(libm::sqrt(diff) / xn);
        }
    }
    Ok(report)
}
