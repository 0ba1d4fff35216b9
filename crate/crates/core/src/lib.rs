//! Tropical-geometry-guided pruning of bottleneck adapter layers.
//!
//! The crate is organised bottom-up:
//!
//! - [`tropical`]: max-plus scalars, monomials and polynomials.
//! - [`geometry`]: planar hulls, Minkowski sums, zonotopes, dual subdivisions.
//! - [`adapter`]: the adapter layer, its `H − Q` split and zonotope generators.
//! - [`optimizer`]: subgradient descent that sparsifies `(A, B)` while keeping
//!   the generators close to the originals.
//! - [`strategies`]: magnitude selection, the tropical intersection rule and
//!   the class-blind / class-uniform / node-wise scopes.
//! - [`harness`]: synthetic tasks, a tiny frozen-featurizer model, training,
//!   evaluation and pruning sweeps.
//! - [`io`]: weight bundles, run configs, results CSV and SVG plots.

pub mod adapter;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod matrix;
pub mod optimizer;
pub mod strategies;
pub mod tropical;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
