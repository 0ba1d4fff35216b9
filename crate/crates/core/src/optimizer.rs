//! Alternating subgradient descent on the generator-preserving objective
//!
//! ```text
//! Σ_i ½‖Ĝ1_i − G1_i‖²_F + ½‖Ĝ2_i − G2_i‖²_F + λ1‖Ĝ1_i‖₁,₁ + λ2‖Ĝ2_i‖₁,₁
//! ```
//!
//! where `G1_i = diag(b_i⁺)·A`, `G2_i = diag(b_i⁻)·A` for every output node
//! `i`, and the hatted generators are built the same way from `(Â, B̂)`.

use serde::{Deserialize, Serialize};

use crate::adapter::AdapterLayer;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Which generator family a step acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `G1 = diag(b⁺)·A`, weighted by `λ1`.
    Positive,
    /// `G2 = diag(b⁻)·A`, weighted by `λ2`.
    Negative,
}

impl Branch {
    /// Even outer iterations use the positive branch.
    pub fn for_iteration(t: usize) -> Branch {
        if t % 2 == 0 {
            Branch::Positive
        } else {
            Branch::Negative
        }
    }

    #[inline]
    fn part(self, v: f64) -> f64 {
        match self {
            Branch::Positive => v.max(0.0),
            Branch::Negative => (-v).max(0.0),
        }
    }

    /// Derivative of `part` with the subgradient at zero taken as 0.
    #[inline]
    fn part_derivative(self, v: f64) -> f64 {
        match self {
            Branch::Positive if v > 0.0 => 1.0,
            Branch::Negative if v < 0.0 => -1.0,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// One update after every node visit.
    #[default]
    PerNode,
    /// Node subgradients summed, one update per outer iteration.
    PerIteration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    /// Maximum outer iterations `T`.
    pub max_iters: usize,
    /// Step size `η`.
    pub step_size: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Relative change of the combined loss below which the run stops.
    pub tol: f64,
    /// Number of outer iterations the relative change is measured over.
    pub window: usize,
    /// Kept for provenance; the descent itself draws no randomness.
    pub seed: u64,
    pub step_mode: StepMode,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            step_size: 0.01,
            lambda1: 0.1,
            lambda2: 0.1,
            tol: 1e-6,
            window: 10,
            seed: 0,
            step_mode: StepMode::PerNode,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidArgument(format!("step_size {} must be > 0", self.step_size)));
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("tol", self.tol)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} {v} must be >= 0")));
            }
        }
        if self.window == 0 {
            return Err(Error::InvalidArgument("window must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub a_hat: DenseMatrix,
    pub b_hat: DenseMatrix,
    /// `(outer iteration, combined loss)`; entry 0 is the initial loss.
    pub loss_trace: Vec<(usize, f64)>,
    pub converged_at: Option<usize>,
}

impl OptimResult {
    pub fn initial_loss(&self) -> f64 {
        self.loss_trace[0].1
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().map(|e| e.1).unwrap_or(f64::NAN)
    }

    /// The optimized parameters as a layer shaped like `original`.
    pub fn to_layer(&self, original: &AdapterLayer) -> Result<AdapterLayer> {
        original.with_params(self.a_hat.clone(), self.b_hat.clone())
    }
}

fn check_shapes(layer: &AdapterLayer, a_hat: &DenseMatrix, b_hat: &DenseMatrix) -> Result<()> {
    layer.a().check_same_shape(a_hat)?;
    layer.b().check_same_shape(b_hat)
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `½‖Ĝ_i − G_i‖²_F + λ‖Ĝ_i‖₁,₁` for one node and branch, from raw matrices.
fn node_loss(
    a: &DenseMatrix,
    b: &DenseMatrix,
    a_hat: &DenseMatrix,
    b_hat: &DenseMatrix,
    i: usize,
    branch: Branch,
    lambda: f64,
) -> f64 {
    let mut dist = 0.0;
    let mut l1 = 0.0;
    for k in 0..a.rows() {
        let bo = branch.part(b.get(i, k));
        let bh = branch.part(b_hat.get(i, k));
        for (&ao, &ah) in a.row(k).iter().zip(a_hat.row(k)) {
            let gh = bh * ah;
            let diff = gh - bo * ao;
            dist += diff * diff;
            l1 += gh.abs();
        }
    }
    0.5 * dist + lambda * l1
}

/// The per-node loss `ℓ` minimized by one descent step.
pub fn node_objective(
    layer: &AdapterLayer,
    a_hat: &DenseMatrix,
    b_hat: &DenseMatrix,
    node: usize,
    branch: Branch,
    lambda: f64,
) -> Result<f64> {
    check_shapes(layer, a_hat, b_hat)?;
    check_node(layer, node)?;
    Ok(node_loss(layer.a(), layer.b(), a_hat, b_hat, node, branch, lambda))
}

/// Full objective summed over all output nodes and both branches.
pub fn objective_value(
    layer: &AdapterLayer,
    a_hat: &DenseMatrix,
    b_hat: &DenseMatrix,
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    check_shapes(layer, a_hat, b_hat)?;
    Ok((0..layer.d())
        .map(|i| {
            node_loss(layer.a(), layer.b(), a_hat, b_hat, i, Branch::Positive, lambda1)
                + node_loss(layer.a(), layer.b(), a_hat, b_hat, i, Branch::Negative, lambda2)
        })
        .sum())
}

fn check_node(layer: &AdapterLayer, node: usize) -> Result<()> {
    if node >= layer.d() {
        return Err(Error::OutOfRange {
            what: "node",
            index: node,
            limit: layer.d(),
        });
    }
    Ok(())
}

/// Adds `scale ×` the node subgradient into `da` and row `i` of `db`.
#[allow(clippy::too_many_arguments)]
fn accumulate_subgradient(
    a: &DenseMatrix,
    b: &DenseMatrix,
    a_hat: &DenseMatrix,
    b_hat: &DenseMatrix,
    i: usize,
    branch: Branch,
    lambda: f64,
    da: &mut DenseMatrix,
    db: &mut DenseMatrix,
) {
    for k in 0..a.rows() {
        let bo = branch.part(b.get(i, k));
        let bh_raw = b_hat.get(i, k);
        let bh = branch.part(bh_raw);
        let mut through_b = 0.0;
        for j in 0..a.cols() {
            let ah = a_hat.get(k, j);
            let gh = bh * ah;
            // ∂ℓ/∂Ĝ_kj
            let resid = gh - bo * a.get(k, j) + lambda * sign(gh);
            da.set(k, j, da.get(k, j) + bh * resid);
            through_b += resid * ah;
        }
        let d = branch.part_derivative(bh_raw);
        if d != 0.0 {
            db.set(i, k, db.get(i, k) + d * through_b);
        }
    }
}

/// Subgradient of the node loss with respect to `Â` and `B̂`.
///
/// `sign(0)` is taken as 0 for the L1 term and the ReLU-style `max(·, 0)`
/// contributes slope 0 at exactly 0, so exact zeros stay put.
pub fn subgradient(
    layer: &AdapterLayer,
    a_hat: &DenseMatrix,
    b_hat: &DenseMatrix,
    node: usize,
    branch: Branch,
    lambda: f64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    check_shapes(layer, a_hat, b_hat)?;
    check_node(layer, node)?;
    let mut da = DenseMatrix::zeros(a_hat.rows(), a_hat.cols());
    let mut db = DenseMatrix::zeros(b_hat.rows(), b_hat.cols());
    accumulate_subgradient(layer.a(), layer.b(), a_hat, b_hat, node, branch, lambda, &mut da, &mut db);
    Ok((da, db))
}

fn step(target: &mut DenseMatrix, grad: &DenseMatrix, eta: f64) {
    for (t, g) in target.data_mut().iter_mut().zip(grad.data()) {
        *t -= eta * g;
    }
}

/// Alternating subgradient descent starting from `Â = A`, `B̂ = B`.
///
/// Outer iteration `t` visits every output node with the positive branch
/// when `t` is even and the negative branch otherwise. The combined loss is
/// recorded after each outer iteration; the run stops once its relative
/// change over `window` iterations drops below `tol`.
pub fn run(layer: &AdapterLayer, config: &OptimConfig) -> Result<OptimResult> {
    config.validate()?;
    let (a, b) = (layer.a(), layer.b());
    let mut a_hat = a.clone();
    let mut b_hat = b.clone();
    let combined = |ah: &DenseMatrix, bh: &DenseMatrix| objective_value(layer, ah, bh, config.lambda1, config.lambda2);

    let mut trace = vec![(0, combined(&a_hat, &b_hat)?)];
    let mut converged_at = None;
    let mut da = DenseMatrix::zeros(a.rows(), a.cols());
    let mut db = DenseMatrix::zeros(b.rows(), b.cols());

    for t in 1..=config.max_iters {
        let branch = Branch::for_iteration(t);
        let lambda = match branch {
            Branch::Positive => config.lambda1,
            Branch::Negative => config.lambda2,
        };
        match config.step_mode {
            StepMode::PerNode => {
                for i in 0..layer.d() {
                    da.data_mut().fill(0.0);
                    db.data_mut().fill(0.0);
                    accumulate_subgradient(a, b, &a_hat, &b_hat, i, branch, lambda, &mut da, &mut db);
                    step(&mut a_hat, &da, config.step_size);
                    step(&mut b_hat, &db, config.step_size);
                }
            }
            StepMode::PerIteration => {
                da.data_mut().fill(0.0);
                db.data_mut().fill(0.0);
                for i in 0..layer.d() {
                    accumulate_subgradient(a, b, &a_hat, &b_hat, i, branch, lambda, &mut da, &mut db);
                }
                step(&mut a_hat, &da, config.step_size);
                step(&mut b_hat, &db, config.step_size);
            }
        }

        let loss = combined(&a_hat, &b_hat)?;
        if !loss.is_finite() || !a_hat.is_finite() || !b_hat.is_finite() {
            return Err(Error::NonFinite("optimizer iterate"));
        }
        trace.push((t, loss));

        if t >= config.window {
            let prev = trace[t - config.window].1;
            let rel = (prev - loss).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if rel < config.tol {
                converged_at = Some(t);
                break;
            }
        }
    }

    Ok(OptimResult {
        a_hat,
        b_hat,
        loss_trace: trace,
        converged_at,
    })
}

/// `(Σ_i ‖G1_i‖₁,₁, Σ_i ‖G2_i‖₁,₁)` for parameters `a` (`r × n`), `b` (`d × r`).
pub fn generator_l1(a: &DenseMatrix, b: &DenseMatrix) -> (f64, f64) {
    let mut pos = 0.0;
    let mut neg = 0.0;
    for k in 0..a.rows() {
        let row_l1: f64 = a.row(k).iter().map(|v| v.abs()).sum();
        for i in 0..b.rows() {
            let v = b.get(i, k);
            if v > 0.0 {
                pos += v * row_l1;
            } else {
                neg += -v * row_l1;
            }
        }
    }
    (pos, neg)
}
