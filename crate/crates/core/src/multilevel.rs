//! Multi-level decompositions: MRA (lowpass chain), scattering (every node,
//! energy pruned) and convnet (channel-stacked layers).

use alloc::vec;
use alloc::vec::Vec;

use crate::bank::{CoeffSet, FilterBank};
use crate::error::{Error, Result};
use crate::signal::Signal;
use crate::transform::{decompose, reconstruct};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeMode {
    Mra,
    Scattering,
    Convnet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Nonlinearity {
    None,
    #[default]
    Abs,
    Relu,
}

impl Nonlinearity {
    pub fn apply(self, v: &Signal) -> Signal {
        match self {
            Nonlinearity::None => v.clone(),
            Nonlinearity::Abs => v.map(f64::abs),
            Nonlinearity::Relu => v.map(|x| x.max(0.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    /// 1 for the children of the input signal.
    pub level: usize,
    /// Index of the parent node; `None` for children of the input.
    pub parent: Option<usize>,
    /// Filter of the parent's bank that produced this node.
    pub filter: usize,
    pub coeffs: Signal,
    pub expanded: bool,
    /// Not expanded because its energy fell below the prune threshold.
    pub pruned: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompTree {
    pub mode: TreeMode,
    pub levels: usize,
    /// Nodes in level-major order, siblings in filter order.
    pub nodes: Vec<TreeNode>,
    /// Bank used at each level (one entry per level).
    pub banks: Vec<FilterBank>,
    pub nonlinearity: Nonlinearity,
    pub prune_threshold: f64,
}

impl DecompTree {
    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| !n.expanded)
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    pub fn children(&self, parent: Option<usize>) -> impl Iterator<Item = (usize, &TreeNode)> {
        self.nodes.iter().enumerate().filter(move |(_, n)| n.parent == parent)
    }

    /// Total number of leaf coefficients.
    pub fn coefficient_count(&self) -> usize {
        self.leaves().map(|n| n.coeffs.data().len()).sum()
    }

    pub fn nodes_at(&self, level: usize) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(move |n| n.level == level)
    }
}

fn check_levels(levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::InvalidInput("need at least one level".into()));
    }
    Ok(())
}

fn check_divisible(v: &Signal, banks: &[&FilterBank]) -> Result<()> {
    let mut shape = v.shape().to_vec();
    for b in banks {
        let f = b.sampling().diag();
        if f.len() != shape.len() || shape.iter().zip(f).any(|(s, m)| s % m != 0) {
            let total: Vec<usize> = (0..v.ndim())
                .map(|ax| banks.iter().map(|b| b.sampling().diag().get(ax).copied().unwrap_or(1)).product())
                .collect();
            return Err(Error::ShapeNotDivisible {
                shape: v.shape().to_vec(),
                factor: total,
            });
        }
        shape = shape.iter().zip(f).map(|(s, m)| s / m).collect();
    }
    Ok(())
}

/// `levels`-level MRA: only the lowpass map (filter 1) is decomposed further.
pub fn mra_decompose(v: &Signal, a: &FilterBank, levels: usize) -> Result<DecompTree> {
    check_levels(levels)?;
    if !a.has_single_leading_lowpass() {
        return Err(Error::NoLowpassFlag);
    }
    check_divisible(v, &vec![a; levels])?;
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut input = v.clone();
    let mut parent = None;
    for level in 1..=levels {
        let maps = decompose(&input, a)?.maps;
        let first = nodes.len();
        for (l, map) in maps.into_iter().enumerate() {
            nodes.push(TreeNode {
                level,
                parent,
                filter: l,
                coeffs: map,
                expanded: false,
                pruned: false,
            });
        }
        if level < levels {
            nodes[first].expanded = true;
            input = nodes[first].coeffs.clone();
            parent = Some(first);
        }
    }
    Ok(DecompTree {
        mode: TreeMode::Mra,
        levels,
        nodes,
        banks: vec![a.clone(); levels],
        nonlinearity: Nonlinearity::None,
        prune_threshold: 0.0,
    })
}

/// Bottom-up inverse of [`mra_decompose`] with the paired bank `b`.
pub fn mra_reconstruct(t: &DecompTree, b: &FilterBank) -> Result<Signal> {
    if t.mode != TreeMode::Mra {
        return Err(Error::ModeMismatch);
    }
    rebuild(t, None, b)
}

fn rebuild(t: &DecompTree, parent: Option<usize>, b: &FilterBank) -> Result<Signal> {
    let mut maps = Vec::new();
    for (i, node) in t.children(parent) {
        maps.push(if node.expanded {
            rebuild(t, Some(i), b)?
        } else {
            node.coeffs.clone()
        });
    }
    reconstruct(&CoeffSet::new(maps), b)
}

fn bank_at(banks: &[FilterBank], level: usize) -> Result<&FilterBank> {
    banks
        .get(level - 1)
        .or_else(|| banks.last())
        .ok_or_else(|| Error::InvalidInput("no filter banks given".into()))
}

/// Scattering tree: every node above the energy threshold is passed through
/// the nonlinearity and decomposed with the next level's bank. `banks` may be
/// shorter than `levels`; the last bank is reused.
pub fn scatter_decompose(
    v: &Signal,
    banks: &[FilterBank],
    levels: usize,
    nonlinearity: Nonlinearity,
    prune_threshold: f64,
) -> Result<DecompTree> {
    check_levels(levels)?;
    if !(prune_threshold >= 0.0) {
        return Err(Error::InvalidInput("prune threshold must be non-negative".into()));
    }
    let per_level = (1..=levels).map(|l| bank_at(banks, l)).collect::<Result<Vec<_>>>()?;
    check_divisible(v, &per_level)?;
    let root_energy = v.energy();
    let mut nodes: Vec<TreeNode> = Vec::new();
    for (l, map) in decompose(v, per_level[0])?.maps.into_iter().enumerate() {
        nodes.push(TreeNode {
            level: 1,
            parent: None,
            filter: l,
            coeffs: map,
            expanded: false,
            pruned: false,
        });
    }
    let mut frontier: Vec<usize> = (0..nodes.len()).collect();
    for level in 2..=levels {
        let mut next = Vec::new();
        for &i in &frontier {
            let e = nodes[i].coeffs.energy();
            let ratio = if root_energy > 0.0 { e / root_energy } else { 0.0 };
            if ratio < prune_threshold {
                nodes[i].pruned = true;
                continue;
            }
            nodes[i].expanded = true;
            let input = nonlinearity.apply(&nodes[i].coeffs);
            for (l, map) in decompose(&input, per_level[level - 1])?.maps.into_iter().enumerate() {
                next.push(nodes.len());
                nodes.push(TreeNode {
                    level,
                    parent: Some(i),
                    filter: l,
                    coeffs: map,
                    expanded: false,
                    pruned: false,
                });
            }
        }
        frontier = next;
    }
    Ok(DecompTree {
        mode: TreeMode::Scattering,
        levels,
        nodes,
        banks: per_level.into_iter().cloned().collect(),
        nonlinearity,
        prune_threshold,
    })
}

/// Convolutional-net structure: each level's maps are stacked as channels and
/// the next bank spans all of them.
pub fn convnet_decompose(
    v: &Signal,
    banks: &[FilterBank],
    levels: usize,
    nonlinearity: Nonlinearity,
) -> Result<DecompTree> {
    check_levels(levels)?;
    let per_level = (1..=levels).map(|l| bank_at(banks, l)).collect::<Result<Vec<_>>>()?;
    for w in per_level.windows(2) {
        if w[1].channel_support() != w[0].m() {
            return Err(Error::ChannelMismatch {
                signal: w[0].m(),
                filter: w[1].channel_support(),
            });
        }
    }
    check_divisible(v, &per_level)?;
    let mut nodes = Vec::new();
    let mut input = v.clone();
    for level in 1..=levels {
        let stacked = decompose(&input, per_level[level - 1])?.into_channels()?;
        if level < levels {
            input = nonlinearity.apply(&stacked);
        }
        nodes.push(TreeNode {
            level,
            parent: level.checked_sub(2),
            filter: 0,
            coeffs: stacked,
            expanded: level < levels,
            pruned: false,
        });
    }
    Ok(DecompTree {
        mode: TreeMode::Convnet,
        levels,
        nodes,
        banks: per_level.into_iter().cloned().collect(),
        nonlinearity,
        prune_threshold: 0.0,
    })
}
