//! Bottleneck adapter layer `f(x) = B·max(A·[x;1], 0)` and its tropical
//! decomposition.
//!
//! Column-vector convention throughout: `A` is `r × (d+1)` with the
//! down-projection bias merged as the last column, `B` is `d × r`.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Append `bias` as the last column of `w`.
pub fn merge_bias(w: &DenseMatrix, bias: &[f64]) -> Result<DenseMatrix> {
    if bias.len() != w.rows() {
        return Err(Error::DimensionMismatch {
            expected: w.rows(),
            found: bias.len(),
        });
    }
    let cols = w.cols() + 1;
    Ok(DenseMatrix::from_fn(w.rows(), cols, |i, j| {
        if j + 1 == cols {
            bias[i]
        } else {
            w.get(i, j)
        }
    }))
}

/// `[x; 1]`.
pub fn augment(x: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len() + 1);
    v.extend_from_slice(x);
    v.push(1.0);
    v
}

/// `(max(M, 0), max(−M, 0))`, so that `M = M⁺ − M⁻`.
pub fn split_pos_neg(m: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    (m.map(|v| v.max(0.0)), m.map(|v| (-v).max(0.0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterLayer {
    a: DenseMatrix,
    b: DenseMatrix,
    up_bias: Option<Vec<f64>>,
}

impl AdapterLayer {
    /// `a` must be `r × (d+1)` and `b` must be `d × r`.
    pub fn new(a: DenseMatrix, b: DenseMatrix) -> Result<Self> {
        let r = a.rows();
        let d = b.rows();
        if r == 0 || d == 0 {
            return Err(Error::ShapeMismatch("adapter dimensions must be positive".into()));
        }
        if b.cols() != r || a.cols() != d + 1 {
            return Err(Error::ShapeMismatch(format!(
                "A is {}x{} and B is {}x{}; expected A: r x (d+1), B: d x r",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )));
        }
        Ok(Self { a, b, up_bias: None })
    }

    /// Build from an unmerged down-projection `w` (`r × d`) and its bias.
    pub fn from_parts(w: &DenseMatrix, down_bias: &[f64], b: DenseMatrix) -> Result<Self> {
        Self::new(merge_bias(w, down_bias)?, b)
    }

    /// Up-projection bias. It is added in [`forward`](Self::forward) but takes
    /// no part in the generator algebra.
    pub fn with_up_bias(mut self, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                found: bias.len(),
            });
        }
        self.up_bias = Some(bias);
        Ok(self)
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn up_bias(&self) -> Option<&[f64]> {
        self.up_bias.as_deref()
    }

    /// Model width.
    pub fn d(&self) -> usize {
        self.b.rows()
    }

    /// Bottleneck width.
    pub fn r(&self) -> usize {
        self.a.rows()
    }

    pub fn param_count(&self) -> usize {
        self.a.len() + self.b.len()
    }

    /// Same layer with replaced `A` and `B` (shapes must match).
    pub fn with_params(&self, a: DenseMatrix, b: DenseMatrix) -> Result<Self> {
        a.check_same_shape(&self.a)?;
        b.check_same_shape(&self.b)?;
        Ok(Self {
            a,
            b,
            up_bias: self.up_bias.clone(),
        })
    }

    /// Bottleneck pre-activation `A·[x;1]`.
    pub fn pre_activation(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                found: x.len(),
            });
        }
        self.a.matvec(&augment(x))
    }

    /// `B·max(A·[x;1], 0)` (plus the up-projection bias, if any); with
    /// `residual`, `x + f(x)`.
    pub fn forward(&self, x: &[f64], residual: bool) -> Result<Vec<f64>> {
        let hidden: Vec<f64> = self.pre_activation(x)?.into_iter().map(|v| v.max(0.0)).collect();
        let mut out = self.b.matvec(&hidden)?;
        if let Some(bias) = &self.up_bias {
            out.iter_mut().zip(bias).for_each(|(o, b)| *o += b);
        }
        if residual {
            out.iter_mut().zip(x).for_each(|(o, xi)| *o += xi);
        }
        Ok(out)
    }

    /// Evaluate the two tropical polynomials `H` and `Q` with
    /// `B·max(A·x̃, 0) = H(x) − Q(x)`:
    ///
    /// ```text
    /// H = B⁺·max(A⁺x̃, A⁻x̃) + B⁻·A⁻x̃
    /// Q = B⁻·max(A⁺x̃, A⁻x̃) + B⁺·A⁻x̃
    /// ```
    pub fn hq_eval(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                found: x.len(),
            });
        }
        let xt = augment(x);
        let (ap, an) = split_pos_neg(&self.a);
        let (bp, bn) = split_pos_neg(&self.b);
        let ap_x = ap.matvec(&xt)?;
        let an_x = an.matvec(&xt)?;
        let top: Vec<f64> = ap_x.iter().zip(&an_x).map(|(p, n)| p.max(*n)).collect();
        let add = |u: Vec<f64>, v: Vec<f64>| -> Vec<f64> { u.iter().zip(&v).map(|(a, b)| a + b).collect() };
        let h = add(bp.matvec(&top)?, bn.matvec(&an_x)?);
        let q = add(bn.matvec(&top)?, bp.matvec(&an_x)?);
        Ok((h, q))
    }

    /// Lazily evaluated per-node generator matrices.
    pub fn generators(&self) -> GeneratorSet<'_> {
        GeneratorSet { layer: self }
    }
}

/// Generator pair of output node `i`: `G1 = diag(b_i⁺)·A`, `G2 = diag(b_i⁻)·A`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeGenerators {
    pub g1: DenseMatrix,
    pub g2: DenseMatrix,
}

/// Generator pairs for all output nodes, computed on demand.
#[derive(Debug, Clone, Copy)]
pub struct GeneratorSet<'a> {
    layer: &'a AdapterLayer,
}

impl<'a> GeneratorSet<'a> {
    pub fn len(&self) -> usize {
        self.layer.d()
    }

    pub fn is_empty(&self) -> bool {
        self.layer.d() == 0
    }

    pub fn node(&self, i: usize) -> Result<NodeGenerators> {
        node_generators(&self.layer.a, &self.layer.b, i)
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeGenerators> + 'a {
        let layer = self.layer;
        (0..layer.d()).map(move |i| node_generators(&layer.a, &layer.b, i).expect("node in range"))
    }
}

/// Generator pair of node `i` for arbitrary `A` (`r × n`) and `B` (`d × r`).
pub fn node_generators(a: &DenseMatrix, b: &DenseMatrix, i: usize) -> Result<NodeGenerators> {
    if i >= b.rows() {
        return Err(Error::OutOfRange {
            what: "node",
            index: i,
            limit: b.rows(),
        });
    }
    let row = b.row(i);
    let pos: Vec<f64> = row.iter().map(|v| v.max(0.0)).collect();
    let neg: Vec<f64> = row.iter().map(|v| (-v).max(0.0)).collect();
    Ok(NodeGenerators {
        g1: a.scale_rows(&pos)?,
        g2: a.scale_rows(&neg)?,
    })
}

pub fn compute_generators(layer: &AdapterLayer) -> GeneratorSet<'_> {
    layer.generators()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{convex_hull_2d, minkowski_sum, project_generators, zonotope_vertices, Point2, Polytope2D};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_layer(rng: &mut ChaCha8Rng, d: usize, r: usize) -> AdapterLayer {
        AdapterLayer::new(random_matrix(rng, r, d + 1), random_matrix(rng, d, r)).unwrap()
    }

    /// Naive triple loop, independent of `DenseMatrix::matvec`.
    fn naive_forward(a: &[Vec<f64>], b: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        let xt: Vec<f64> = x.iter().copied().chain(std::iter::once(1.0)).collect();
        let mut hidden = vec![0.0; a.len()];
        for k in 0..a.len() {
            let mut s = 0.0;
            for j in 0..xt.len() {
                s += a[k][j] * xt[j];
            }
            hidden[k] = if s > 0.0 { s } else { 0.0 };
        }
        let mut out = vec![0.0; b.len()];
        for i in 0..b.len() {
            for k in 0..hidden.len() {
                out[i] += b[i][k] * hidden[k];
            }
        }
        out
    }

    #[test]
    fn shape_validation() {
        assert!(AdapterLayer::new(DenseMatrix::zeros(2, 3), DenseMatrix::zeros(2, 2)).is_ok());
        assert!(AdapterLayer::new(DenseMatrix::zeros(2, 2), DenseMatrix::zeros(2, 2)).is_err());
        assert!(AdapterLayer::new(DenseMatrix::zeros(2, 3), DenseMatrix::zeros(2, 3)).is_err());
        let l = AdapterLayer::new(DenseMatrix::zeros(2, 3), DenseMatrix::zeros(2, 2)).unwrap();
        assert!(l.forward(&[1.0], false).is_err());
        assert!(l.hq_eval(&[1.0, 2.0, 3.0]).is_err());
        assert!(merge_bias(&DenseMatrix::zeros(2, 2), &[1.0]).is_err());
    }

    #[test]
    fn merge_bias_examples() {
        let w = DenseMatrix::from_rows(&[[1.0]]).unwrap();
        let a = merge_bias(&w, &[2.0]).unwrap();
        assert_eq!(a.matvec(&augment(&[3.0])).unwrap(), vec![5.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_matrix(&mut rng, 3, 5);
        let bias: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let merged = merge_bias(&w, &bias).unwrap().matvec(&augment(&x)).unwrap();
        let unmerged: Vec<f64> = w.matvec(&x).unwrap().iter().zip(&bias).map(|(a, b)| a + b).collect();
        for (m, u) in merged.iter().zip(&unmerged) {
            assert!((m - u).abs() < 1e-15);
        }

        let zero = merge_bias(&w, &[0.0; 3]).unwrap();
        assert!(zero.to_rows().iter().all(|r| r[5] == 0.0));
    }

    #[test]
    fn forward_examples() {
        // A = I with zero bias column, B = I
        let a = merge_bias(&DenseMatrix::identity(2), &[0.0, 0.0]).unwrap();
        let l = AdapterLayer::new(a, DenseMatrix::identity(2)).unwrap();
        assert_eq!(l.forward(&[1.0, -1.0], false).unwrap(), vec![1.0, 0.0]);
        assert_eq!(l.forward(&[1.0, -1.0], true).unwrap(), vec![2.0, -1.0]);

        let zero = AdapterLayer::new(DenseMatrix::zeros(2, 3), DenseMatrix::identity(2)).unwrap();
        assert_eq!(zero.forward(&[0.3, -4.0], false).unwrap(), vec![0.0, 0.0]);
        assert_eq!(zero.forward(&[0.3, -4.0], true).unwrap(), vec![0.3, -4.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = random_layer(&mut rng, 3, 2);
        let x = [0.4, -0.7, 1.3];
        let got = l.forward(&x, false).unwrap();
        let want = naive_forward(&l.a().to_rows(), &l.b().to_rows(), &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    #[test]
    fn up_bias_is_added() {
        let l = AdapterLayer::new(DenseMatrix::zeros(1, 3), DenseMatrix::zeros(2, 1))
            .unwrap()
            .with_up_bias(vec![1.0, -2.0])
            .unwrap();
        assert_eq!(l.forward(&[5.0, 5.0], false).unwrap(), vec![1.0, -2.0]);
    }

    #[test]
    fn split_examples() {
        let m = DenseMatrix::from_rows(&[[1.0, -2.0]]).unwrap();
        let (p, n) = split_pos_neg(&m);
        assert_eq!(p, DenseMatrix::from_rows(&[[1.0, 0.0]]).unwrap());
        assert_eq!(n, DenseMatrix::from_rows(&[[0.0, 2.0]]).unwrap());

        let neg = DenseMatrix::from_rows(&[[-1.0, -3.5]]).unwrap();
        let (p, n) = split_pos_neg(&neg);
        assert_eq!(p.l11_norm(), 0.0);
        assert_eq!(n, neg.map(|v| -v));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_matrix(&mut rng, 4, 6);
        let (p, n) = split_pos_neg(&m);
        for ((pv, nv), mv) in p.data().iter().zip(n.data()).zip(m.data()) {
            assert_eq!(pv - nv, *mv);
            assert!(*pv >= 0.0 && *nv >= 0.0 && pv * nv == 0.0);
        }
    }

    #[test]
    fn hq_examples() {
        // nonnegative parameters: Q vanishes and H is the block output
        let a = DenseMatrix::from_rows(&[[0.5, 1.0, 0.2], [0.3, 0.0, 0.1]]).unwrap();
        let b = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 0.5]]).unwrap();
        let l = AdapterLayer::new(a, b).unwrap();
        let x = [0.7, 1.1];
        let (h, q) = l.hq_eval(&x).unwrap();
        assert_eq!(q, vec![0.0, 0.0]);
        assert_eq!(h, l.forward(&x, false).unwrap());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = random_matrix(&mut rng, 2, 3);
        let l = AdapterLayer::from_parts(&w, &[0.0, 0.0], random_matrix(&mut rng, 3, 2)).unwrap();
        let (h, q) = l.hq_eval(&[0.0; 3]).unwrap();
        assert!(h.iter().chain(&q).all(|v| *v == 0.0));

        let l = random_layer(&mut rng, 3, 2);
        let x = [0.2, -1.5, 0.9];
        let (h, q) = l.hq_eval(&x).unwrap();
        let f = l.forward(&x, false).unwrap();
        for i in 0..3 {
            assert!((f[i] - (h[i] - q[i])).abs() <= 1e-12);
        }
    }

    #[test]
    fn hq_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let d = rng.random_range(1..12);
            let r = rng.random_range(1..6);
            let l = random_layer(&mut rng, d, r);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (h, q) = l.hq_eval(&x).unwrap();
            let f = l.forward(&x, false).unwrap();
            for i in 0..d {
                assert!((f[i] - (h[i] - q[i])).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn generator_examples() {
        // b_i = (2, -3), A = I₂ without bias
        let a = DenseMatrix::identity(2);
        let b = DenseMatrix::from_rows(&[[2.0, -3.0]]).unwrap();
        let g = node_generators(&a, &b, 0).unwrap();
        assert_eq!(g.g1, DenseMatrix::from_rows(&[[2.0, 0.0], [0.0, 0.0]]).unwrap());
        assert_eq!(g.g2, DenseMatrix::from_rows(&[[0.0, 0.0], [0.0, 3.0]]).unwrap());
        assert!(node_generators(&a, &b, 1).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(&mut rng, 3, 5);
        let b = random_matrix(&mut rng, 4, 3).map(f64::abs);
        let l = AdapterLayer::new(a, b).unwrap();
        assert!(l.generators().iter().all(|g| g.g2.l11_norm() == 0.0));

        let l = AdapterLayer::new(DenseMatrix::zeros(3, 5), random_matrix(&mut rng, 4, 3)).unwrap();
        assert_eq!(l.generators().len(), 4);
        assert!(l.generators().iter().all(|g| g.g1.l11_norm() == 0.0 && g.g2.l11_norm() == 0.0));
    }

    #[test]
    fn generator_supports() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut b = random_matrix(&mut rng, 5, 4);
        b.set(0, 1, 0.0);
        b.set(3, 2, 0.0);
        let l = AdapterLayer::new(random_matrix(&mut rng, 4, 6), b).unwrap();
        for i in 0..l.d() {
            let g = l.generators().node(i).unwrap();
            for k in 0..l.r() {
                let in1 = g.g1.row(k).iter().any(|v| *v != 0.0);
                let in2 = g.g2.row(k).iter().any(|v| *v != 0.0);
                assert!(!(in1 && in2));
                assert_eq!(in1 || in2, l.b().get(i, k) != 0.0);
            }
        }
    }

    #[test]
    fn forward_is_piecewise_linear_along_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let l = random_layer(&mut rng, 4, 3);
        let x0: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dir: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let at = |t: f64| -> Vec<f64> { x0.iter().zip(&dir).map(|(a, b)| a + t * b).collect() };
        let pattern = |t: f64| -> Vec<bool> {
            l.pre_activation(&at(t)).unwrap().iter().map(|v| *v > 0.0).collect()
        };
        let n = 400;
        for s in 0..n - 2 {
            let (t0, t1, t2) = (s as f64 / n as f64, (s + 1) as f64 / n as f64, (s + 2) as f64 / n as f64);
            if pattern(t0) == pattern(t1) && pattern(t1) == pattern(t2) {
                let (f0, f1, f2) = (
                    l.forward(&at(t0), false).unwrap(),
                    l.forward(&at(t1), false).unwrap(),
                    l.forward(&at(t2), false).unwrap(),
                );
                for i in 0..4 {
                    assert!((f1[i] - 0.5 * (f0[i] + f2[i])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn node_zonotope_is_sum_of_row_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = DenseMatrix::from_fn(5, 4, |_, _| rng.random_range(-4i32..5) as f64);
        let b = DenseMatrix::from_fn(3, 5, |_, _| rng.random_range(-3i32..4) as f64);
        let l = AdapterLayer::new(a, b).unwrap();
        for node in l.generators().iter() {
            let z = zonotope_vertices(&project_generators(&node.g1, (0, 2)).unwrap()).unwrap();
            let mut acc = Polytope2D::point(Point2::default());
            for k in 0..node.g1.rows() {
                let seg = convex_hull_2d(&[
                    Point2::default(),
                    Point2::new(node.g1.get(k, 0), node.g1.get(k, 2)),
                ])
                .unwrap();
                acc = minkowski_sum(&acc, &seg).unwrap();
            }
            assert_eq!(z, acc);
        }
    }
}
