//! Magnitude-based parameter selection and the Standard / Tropical /
//! Combined pruning rules.
//!
//! Parameters are addressed by [`ParamIndex`]. Both `A` (including its merged
//! bias column) and `B` are prunable; an up-projection bias never is.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adapter::AdapterLayer;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MatrixTag {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamIndex {
    pub layer: usize,
    pub matrix: MatrixTag,
    pub row: usize,
    pub col: usize,
}

impl ParamIndex {
    pub fn new(layer: usize, matrix: MatrixTag, row: usize, col: usize) -> Self {
        Self { layer, matrix, row, col }
    }
}

/// How parameters are grouped before the bottom-`p` fraction is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PruneScope {
    /// All adapter parameters of all layers in one pool.
    #[serde(rename = "CB")]
    ClassBlind,
    /// Each layer separately.
    #[serde(rename = "CU")]
    ClassUniform,
    /// Each node's incoming parameters separately: a row of `A` (weights and
    /// bias of a bottleneck unit) or a row of `B` (weights of an output unit).
    #[serde(rename = "CN")]
    NodeWise,
}

impl PruneScope {
    pub const ALL: [PruneScope; 3] = [PruneScope::ClassBlind, PruneScope::ClassUniform, PruneScope::NodeWise];

    pub fn short(self) -> &'static str {
        match self {
            PruneScope::ClassBlind => "CB",
            PruneScope::ClassUniform => "CU",
            PruneScope::NodeWise => "CN",
        }
    }
}

impl fmt::Display for PruneScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for PruneScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "CB" | "cb" => Ok(PruneScope::ClassBlind),
            "CU" | "cu" => Ok(PruneScope::ClassUniform),
            "CN" | "cn" => Ok(PruneScope::NodeWise),
            _ => Err(Error::InvalidArgument(format!("unknown scope {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Standard,
    Tropical,
    Combined,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Standard, Method::Tropical, Method::Combined];

    pub fn name(self) -> &'static str {
        match self {
            Method::Standard => "standard",
            Method::Tropical => "tropical",
            Method::Combined => "combined",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(Method::Standard),
            "tropical" => Ok(Method::Tropical),
            "combined" => Ok(Method::Combined),
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?}"))),
        }
    }
}

fn check_fraction(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("fraction {p} outside [0, 1]")))
    }
}

/// `floor(p · n)`, robust to `p` having been computed as `count / n`.
pub fn group_quota(p: f64, n: usize) -> usize {
    ((p * n as f64 + 1e-9).floor() as usize).min(n)
}

fn push_matrix(group: &mut Vec<(ParamIndex, f64)>, layer: usize, tag: MatrixTag, m: &DenseMatrix, rows: std::ops::Range<usize>) {
    for i in rows {
        for (j, &v) in m.row(i).iter().enumerate() {
            group.push((ParamIndex::new(layer, tag, i, j), v));
        }
    }
}

/// Parameter groups for `scope`, each a list of `(index, value)`.
pub fn scope_groups(layers: &[AdapterLayer], scope: PruneScope) -> Vec<Vec<(ParamIndex, f64)>> {
    let mut groups = Vec::new();
    match scope {
        PruneScope::ClassBlind => {
            let mut all = Vec::new();
            for (l, layer) in layers.iter().enumerate() {
                push_matrix(&mut all, l, MatrixTag::A, layer.a(), 0..layer.a().rows());
                push_matrix(&mut all, l, MatrixTag::B, layer.b(), 0..layer.b().rows());
            }
            groups.push(all);
        }
        PruneScope::ClassUniform => {
            for (l, layer) in layers.iter().enumerate() {
                let mut g = Vec::new();
                push_matrix(&mut g, l, MatrixTag::A, layer.a(), 0..layer.a().rows());
                push_matrix(&mut g, l, MatrixTag::B, layer.b(), 0..layer.b().rows());
                groups.push(g);
            }
        }
        PruneScope::NodeWise => {
            for (l, layer) in layers.iter().enumerate() {
                for k in 0..layer.a().rows() {
                    let mut g = Vec::new();
                    push_matrix(&mut g, l, MatrixTag::A, layer.a(), k..k + 1);
                    groups.push(g);
                }
                for i in 0..layer.b().rows() {
                    let mut g = Vec::new();
                    push_matrix(&mut g, l, MatrixTag::B, layer.b(), i..i + 1);
                    groups.push(g);
                }
            }
        }
    }
    groups
}

/// The `floor(p · |group|)` smallest-magnitude parameters of every group.
/// Equal magnitudes are ordered by [`ParamIndex`].
pub fn select_smallest(layers: &[AdapterLayer], p: f64, scope: PruneScope) -> Result<BTreeSet<ParamIndex>> {
    check_fraction(p)?;
    let mut out = BTreeSet::new();
    for mut group in scope_groups(layers, scope) {
        let quota = group_quota(p, group.len());
        if quota == 0 {
            continue;
        }
        group.sort_by(|x, y| x.1.abs().total_cmp(&y.1.abs()).then(x.0.cmp(&y.0)));
        out.extend(group.into_iter().take(quota).map(|(idx, _)| idx));
    }
    Ok(out)
}

/// Boolean masks shaped like each layer's `A` and `B`; `true` means pruned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    layers: Vec<LayerMask>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerMask {
    a_shape: (usize, usize),
    b_shape: (usize, usize),
    a: Vec<bool>,
    b: Vec<bool>,
}

impl LayerMask {
    pub fn a_shape(&self) -> (usize, usize) {
        self.a_shape
    }

    pub fn b_shape(&self) -> (usize, usize) {
        self.b_shape
    }

    pub fn a(&self) -> &[bool] {
        &self.a
    }

    pub fn b(&self) -> &[bool] {
        &self.b
    }

    pub fn count(&self) -> usize {
        self.a.iter().chain(&self.b).filter(|m| **m).count()
    }

    pub fn total(&self) -> usize {
        self.a.len() + self.b.len()
    }
}

impl PruneMask {
    /// All-false mask shaped like `layers`.
    pub fn empty(layers: &[AdapterLayer]) -> Self {
        Self {
            layers: layers
                .iter()
                .map(|l| LayerMask {
                    a_shape: l.a().shape(),
                    b_shape: l.b().shape(),
                    a: vec![false; l.a().len()],
                    b: vec![false; l.b().len()],
                })
                .collect(),
        }
    }

    pub fn from_indices<'a>(layers: &[AdapterLayer], indices: impl IntoIterator<Item = &'a ParamIndex>) -> Result<Self> {
        let mut mask = Self::empty(layers);
        for idx in indices {
            mask.set(*idx)?;
        }
        Ok(mask)
    }

    fn set(&mut self, idx: ParamIndex) -> Result<()> {
        let lm = self.layers.get_mut(idx.layer).ok_or(Error::OutOfRange {
            what: "layer",
            index: idx.layer,
            limit: 0,
        })?;
        let ((rows, cols), data) = match idx.matrix {
            MatrixTag::A => (lm.a_shape, &mut lm.a),
            MatrixTag::B => (lm.b_shape, &mut lm.b),
        };
        if idx.row >= rows || idx.col >= cols {
            return Err(Error::OutOfRange {
                what: "parameter",
                index: idx.row * cols + idx.col,
                limit: rows * cols,
            });
        }
        data[idx.row * cols + idx.col] = true;
        Ok(())
    }

    pub fn layers(&self) -> &[LayerMask] {
        &self.layers
    }

    pub fn contains(&self, idx: &ParamIndex) -> bool {
        let Some(lm) = self.layers.get(idx.layer) else {
            return false;
        };
        let ((rows, cols), data) = match idx.matrix {
            MatrixTag::A => (lm.a_shape, &lm.a),
            MatrixTag::B => (lm.b_shape, &lm.b),
        };
        idx.row < rows && idx.col < cols && data[idx.row * cols + idx.col]
    }

    pub fn indices(&self) -> BTreeSet<ParamIndex> {
        let mut out = BTreeSet::new();
        for (l, lm) in self.layers.iter().enumerate() {
            for (tag, (_, cols), data) in [(MatrixTag::A, lm.a_shape, &lm.a), (MatrixTag::B, lm.b_shape, &lm.b)] {
                for (flat, _) in data.iter().enumerate().filter(|(_, m)| **m) {
                    out.insert(ParamIndex::new(l, tag, flat / cols, flat % cols));
                }
            }
        }
        out
    }

    pub fn count(&self) -> usize {
        self.layers.iter().map(LayerMask::count).sum()
    }

    pub fn total(&self) -> usize {
        self.layers.iter().map(LayerMask::total).sum()
    }

    /// Pruned fraction `p̂`.
    pub fn fraction(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.count() as f64 / total as f64
        }
    }

    pub fn is_subset(&self, other: &PruneMask) -> bool {
        self.indices().iter().all(|i| other.contains(i))
    }

    fn check_matches(&self, layers: &[AdapterLayer]) -> Result<()> {
        if self.layers.len() != layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} layers, model has {}",
                self.layers.len(),
                layers.len()
            )));
        }
        for (lm, l) in self.layers.iter().zip(layers) {
            if lm.a_shape != l.a().shape() || lm.b_shape != l.b().shape() {
                return Err(Error::ShapeMismatch("mask shape differs from layer shape".into()));
            }
        }
        Ok(())
    }
}

fn check_same_shapes(original: &[AdapterLayer], optimized: &[AdapterLayer]) -> Result<()> {
    if original.len() != optimized.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} original layers vs {} optimized",
            original.len(),
            optimized.len()
        )));
    }
    for (o, h) in original.iter().zip(optimized) {
        o.a().check_same_shape(h.a())?;
        o.b().check_same_shape(h.b())?;
    }
    Ok(())
}

/// Prune the parameters that are among the `p` smallest both in the
/// original adapters (`P_S`) and in the optimized ones (`P_T`).
///
/// Returns the mask `P_T ∩ P_S` and its pruned fraction `p̂ ≤ p`.
pub fn tropical_mask(
    original: &[AdapterLayer],
    optimized: &[AdapterLayer],
    p: f64,
    scope: PruneScope,
) -> Result<(PruneMask, f64)> {
    check_same_shapes(original, optimized)?;
    let ps = select_smallest(original, p, scope)?;
    let pt = select_smallest(optimized, p, scope)?;
    let mask = PruneMask::from_indices(original, ps.intersection(&pt))?;
    let p_hat = mask.fraction();
    Ok((mask, p_hat))
}

/// Magnitude baseline pruning `p̂` of the original parameters.
pub fn standard_mask(original: &[AdapterLayer], p_hat: f64, scope: PruneScope) -> Result<PruneMask> {
    let sel = select_smallest(original, p_hat, scope)?;
    PruneMask::from_indices(original, &sel)
}

/// Copy of `layers` with masked entries set to exactly zero.
pub fn apply_mask(layers: &[AdapterLayer], mask: &PruneMask) -> Result<Vec<AdapterLayer>> {
    mask.check_matches(layers)?;
    layers
        .iter()
        .zip(&mask.layers)
        .map(|(l, lm)| {
            let zero = |m: &DenseMatrix, bits: &[bool]| {
                let mut out = m.clone();
                for (v, &pruned) in out.data_mut().iter_mut().zip(bits) {
                    if pruned {
                        *v = 0.0;
                    }
                }
                out
            };
            l.with_params(zero(l.a(), &lm.a), zero(l.b(), &lm.b))
        })
        .collect()
}

/// Pick the method with the better development metric; ties go to Tropical.
pub fn combined_select(dev_metric_standard: f64, dev_metric_tropical: f64) -> Method {
    if dev_metric_standard > dev_metric_tropical {
        Method::Standard
    } else {
        Method::Tropical
    }
}
