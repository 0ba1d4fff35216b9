//! Max-plus tropical semiring, monomials and polynomials.
//!
//! Tropical addition is `max` and tropical multiplication is ordinary `+`.
//! The additive identity (−∞) is a distinct variant rather than
//! `f64::NEG_INFINITY`, so no arithmetic path can produce `-inf + inf`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul};

use crate::error::{check_dim, Error, Result};

/// Default absolute tolerance used to decide that two monomials tie.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

/// An element of the max-plus semiring `R ∪ {−∞}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TropicalScalar {
    /// The additive identity, standing for −∞.
    Bottom,
    Finite(f64),
}

pub use TropicalScalar::{Bottom, Finite};

impl TropicalScalar {
    /// Multiplicative identity.
    pub const ONE: TropicalScalar = Finite(0.0);
    /// Additive identity.
    pub const ZERO: TropicalScalar = Bottom;

    pub fn is_bottom(self) -> bool {
        matches!(self, Bottom)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Bottom => None,
            Finite(v) => Some(v),
        }
    }

    /// Tropical power `x^{⊙a} = a·x`. `x^0` is the multiplicative identity.
    pub fn pow(self, a: u32) -> TropicalScalar {
        match (self, a) {
            (_, 0) => Self::ONE,
            (Bottom, _) => Bottom,
            (Finite(v), a) => Finite(v * f64::from(a)),
        }
    }
}

impl From<f64> for TropicalScalar {
    fn from(v: f64) -> Self {
        Finite(v)
    }
}

impl PartialOrd for TropicalScalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Bottom, Bottom) => Some(Ordering::Equal),
            (Bottom, Finite(_)) => Some(Ordering::Less),
            (Finite(_), Bottom) => Some(Ordering::Greater),
            (Finite(a), Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl fmt::Display for TropicalScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bottom => write!(f, "-inf"),
            Finite(v) => write!(f, "{v}"),
        }
    }
}

/// `a ⊕ b = max(a, b)`.
pub fn trop_add(a: TropicalScalar, b: TropicalScalar) -> TropicalScalar {
    match (a, b) {
        (Bottom, x) | (x, Bottom) => x,
        (Finite(x), Finite(y)) => Finite(x.max(y)),
    }
}

/// `a ⊙ b = a + b`, with −∞ absorbing.
pub fn trop_mul(a: TropicalScalar, b: TropicalScalar) -> TropicalScalar {
    match (a, b) {
        (Bottom, _) | (_, Bottom) => Bottom,
        (Finite(x), Finite(y)) => Finite(x + y),
    }
}

impl Add for TropicalScalar {
    type Output = TropicalScalar;

    /// Tropical sum (max).
    fn add(self, rhs: Self) -> Self {
        trop_add(self, rhs)
    }
}

impl Mul for TropicalScalar {
    type Output = TropicalScalar;

    /// Tropical product (classical sum).
    fn mul(self, rhs: Self) -> Self {
        trop_mul(self, rhs)
    }
}

/// `c ⊙ x1^{a1} ⊙ … ⊙ xd^{ad}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TropicalMonomial {
    coeff: TropicalScalar,
    exponents: Vec<u32>,
}

impl TropicalMonomial {
    pub fn new(coeff: impl Into<TropicalScalar>, exponents: Vec<u32>) -> Result<Self> {
        if exponents.is_empty() {
            return Err(Error::InvalidArgument(
                "monomial needs at least one variable".into(),
            ));
        }
        let coeff = coeff.into();
        if let Finite(c) = coeff {
            if !c.is_finite() {
                return Err(Error::NonFinite("monomial coefficient"));
            }
        }
        Ok(Self { coeff, exponents })
    }

    pub fn coeff(&self) -> TropicalScalar {
        self.coeff
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    /// `c + Σ a_i x_i`, or bottom when `c` is bottom.
    pub fn eval(&self, x: &[f64]) -> Result<TropicalScalar> {
        check_dim(self.dim(), x.len())?;
        Ok(match self.coeff {
            Bottom => Bottom,
            Finite(c) => Finite(
                c + self
                    .exponents
                    .iter()
                    .zip(x)
                    .map(|(&a, &xi)| f64::from(a) * xi)
                    .sum::<f64>(),
            ),
        })
    }

    /// Tropical product of two monomials: coefficients and exponents add.
    pub fn mul(&self, other: &TropicalMonomial) -> Result<TropicalMonomial> {
        check_dim(self.dim(), other.dim())?;
        Ok(TropicalMonomial {
            coeff: self.coeff * other.coeff,
            exponents: self
                .exponents
                .iter()
                .zip(&other.exponents)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }
}

/// Evaluate a monomial at `x`.
pub fn monomial_eval(m: &TropicalMonomial, x: &[f64]) -> Result<TropicalScalar> {
    m.eval(x)
}

/// Tropical sum of monomials with pairwise distinct exponent vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TropicalPolynomial {
    dim: usize,
    monomials: Vec<TropicalMonomial>,
}

impl TropicalPolynomial {
    pub fn new(monomials: Vec<TropicalMonomial>) -> Result<Self> {
        let first = monomials.first().ok_or(Error::Empty("polynomial"))?;
        let dim = first.dim();
        let mut seen = std::collections::BTreeSet::new();
        for m in &monomials {
            check_dim(dim, m.dim())?;
            if !seen.insert(m.exponents.clone()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate exponent vector {:?}",
                    m.exponents
                )));
            }
        }
        Ok(Self { dim, monomials })
    }

    /// Build from `(coefficient, exponents)` pairs with finite coefficients.
    pub fn from_terms(terms: &[(f64, &[u32])]) -> Result<Self> {
        let monomials = terms
            .iter()
            .map(|&(c, e)| TropicalMonomial::new(c, e.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(monomials)
    }

    /// The constant polynomial `c` in `dim` variables.
    pub fn constant(c: impl Into<TropicalScalar>, dim: usize) -> Result<Self> {
        Self::new(vec![TropicalMonomial::new(c, vec![0; dim])?])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn monomials(&self) -> &[TropicalMonomial] {
        &self.monomials
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    /// Values of every monomial at `x`, in storage order.
    pub fn monomial_values(&self, x: &[f64]) -> Result<Vec<TropicalScalar>> {
        check_dim(self.dim, x.len())?;
        self.monomials.iter().map(|m| m.eval(x)).collect()
    }

    pub fn eval(&self, x: &[f64]) -> Result<TropicalScalar> {
        Ok(self
            .monomial_values(x)?
            .into_iter()
            .fold(Bottom, trop_add))
    }

    /// Indices of monomials whose value lies within `tol` of the maximum.
    ///
    /// Two or more indices means `x` is on the tropical hypersurface.
    pub fn dominant_monomials(&self, x: &[f64], tol: f64) -> Result<Vec<usize>> {
        if !(tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance {tol} < 0")));
        }
        let values = self.monomial_values(x)?;
        let max = values.iter().copied().fold(Bottom, trop_add);
        Ok(values
            .iter()
            .enumerate()
            .filter(|(_, v)| match (max, **v) {
                (Bottom, Bottom) => true,
                (Finite(m), Finite(v)) => m - v <= tol,
                _ => false,
            })
            .map(|(i, _)| i)
            .collect())
    }

    /// Exponent vectors of monomials with a finite coefficient.
    pub fn newton_points(&self) -> Vec<Vec<u32>> {
        self.monomials
            .iter()
            .filter(|m| !m.coeff.is_bottom())
            .map(|m| m.exponents.clone())
            .collect()
    }

    /// Tropical product. Products landing on the same exponent vector are
    /// merged with `⊕`; the result is ordered lexicographically by exponent.
    pub fn mul(&self, other: &TropicalPolynomial) -> Result<TropicalPolynomial> {
        check_dim(self.dim, other.dim)?;
        let mut merged: BTreeMap<Vec<u32>, TropicalScalar> = BTreeMap::new();
        for p in &self.monomials {
            for q in &other.monomials {
                let m = p.mul(q)?;
                let slot = merged.entry(m.exponents).or_insert(Bottom);
                *slot = *slot + m.coeff;
            }
        }
        Ok(TropicalPolynomial {
            dim: self.dim,
            monomials: merged
                .into_iter()
                .map(|(exponents, coeff)| TropicalMonomial { coeff, exponents })
                .collect(),
        })
    }
}

pub fn poly_eval(p: &TropicalPolynomial, x: &[f64]) -> Result<TropicalScalar> {
    p.eval(x)
}

pub fn dominant_monomials(p: &TropicalPolynomial, x: &[f64], tol: f64) -> Result<Vec<usize>> {
    p.dominant_monomials(x, tol)
}

pub fn newton_points(p: &TropicalPolynomial) -> Vec<Vec<u32>> {
    p.newton_points()
}

pub fn trop_poly_mul(p1: &TropicalPolynomial, p2: &TropicalPolynomial) -> Result<TropicalPolynomial> {
    p1.mul(p2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `1⊙x1² ⊕ 1⊙x2² ⊕ 2⊙x1x2 ⊕ 2⊙x1 ⊕ 2⊙x2 ⊕ 2`
    pub(crate) fn fig4() -> TropicalPolynomial {
        TropicalPolynomial::from_terms(&[
            (1.0, &[2, 0]),
            (1.0, &[0, 2]),
            (2.0, &[1, 1]),
            (2.0, &[1, 0]),
            (2.0, &[0, 1]),
            (2.0, &[0, 0]),
        ])
        .unwrap()
    }

    /// Brute-force enumeration, independent of `eval`.
    fn enumerate_max(terms: &[(f64, [u32; 2])], x: [f64; 2]) -> f64 {
        terms
            .iter()
            .map(|(c, a)| c + a[0] as f64 * x[0] + a[1] as f64 * x[1])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    const FIG4_TERMS: [(f64, [u32; 2]); 6] = [
        (1.0, [2, 0]),
        (1.0, [0, 2]),
        (2.0, [1, 1]),
        (2.0, [1, 0]),
        (2.0, [0, 1]),
        (2.0, [0, 0]),
    ];

    #[test]
    fn scalar_examples() {
        assert_eq!(trop_add(Finite(2.0), Finite(5.0)), Finite(5.0));
        assert_eq!(trop_add(Bottom, Finite(7.0)), Finite(7.0));
        assert_eq!(trop_add(Finite(3.0), Finite(3.0)), Finite(3.0));
        assert_eq!(trop_mul(Finite(2.0), Finite(5.0)), Finite(7.0));
        assert_eq!(trop_mul(Finite(0.0), Finite(9.0)), Finite(9.0));
        assert_eq!(trop_mul(Bottom, Finite(4.0)), Bottom);
        assert_eq!(Finite(2.0) + Finite(5.0), Finite(5.0));
        assert_eq!(Finite(2.0) * Finite(5.0), Finite(7.0));
        assert_eq!(Finite(3.0).pow(2), Finite(6.0));
        assert_eq!(Bottom.pow(0), Finite(0.0));
    }

    #[test]
    fn monomial_examples() {
        let m = TropicalMonomial::new(1.0, vec![2, 0]).unwrap();
        assert_eq!(m.eval(&[3.0, 4.0]).unwrap(), Finite(7.0));
        let m = TropicalMonomial::new(Bottom, vec![1, 1]).unwrap();
        assert_eq!(m.eval(&[5.0, 5.0]).unwrap(), Bottom);
        let m = TropicalMonomial::new(2.0, vec![1, 1]).unwrap();
        assert_eq!(m.eval(&[0.0, 0.0]).unwrap(), Finite(2.0));
        assert!(matches!(
            m.eval(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn fig4_evaluation() {
        let p = fig4();
        let at0 = enumerate_max(&FIG4_TERMS, [0.0, 0.0]);
        assert_eq!(at0, 2.0);
        assert_eq!(p.eval(&[0.0, 0.0]).unwrap(), Finite(at0));
        // monomial values at (2,0) are {5,1,4,4,2,2}
        let at2 = enumerate_max(&FIG4_TERMS, [2.0, 0.0]);
        assert_eq!(at2, 5.0);
        assert_eq!(p.eval(&[2.0, 0.0]).unwrap(), Finite(at2));
        assert!(p.eval(&[1.0, 2.0, 3.0]).is_err());

        let single = TropicalPolynomial::from_terms(&[(0.5, &[1, 3])]).unwrap();
        assert_eq!(single.eval(&[1.0, -1.0]).unwrap(), Finite(0.5 + 1.0 - 3.0));
    }

    #[test]
    fn fig4_dominant_at_origin() {
        let p = fig4();
        assert_eq!(p.dominant_monomials(&[0.0, 0.0], 1e-9).unwrap(), vec![2, 3, 4, 5]);
        let single = TropicalPolynomial::from_terms(&[(1.0, &[1, 0])]).unwrap();
        assert_eq!(single.dominant_monomials(&[4.0, 2.0], 1e-9).unwrap(), vec![0]);
        assert!(p.dominant_monomials(&[0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn newton_points_examples() {
        assert_eq!(
            fig4().newton_points(),
            vec![vec![2, 0], vec![0, 2], vec![1, 1], vec![1, 0], vec![0, 1], vec![0, 0]]
        );
        assert_eq!(
            TropicalPolynomial::constant(3.0, 3).unwrap().newton_points(),
            vec![vec![0, 0, 0]]
        );
        let p = TropicalPolynomial::new(vec![
            TropicalMonomial::new(1.0, vec![1, 0]).unwrap(),
            TropicalMonomial::new(Bottom, vec![0, 1]).unwrap(),
        ])
        .unwrap();
        assert_eq!(p.newton_points(), vec![vec![1, 0]]);
    }

    #[test]
    fn polynomial_validation() {
        assert!(matches!(TropicalPolynomial::new(vec![]), Err(Error::Empty(_))));
        assert!(TropicalPolynomial::from_terms(&[(1.0, &[1, 0]), (2.0, &[1, 0])]).is_err());
        assert!(TropicalPolynomial::from_terms(&[(1.0, &[1, 0]), (2.0, &[1])]).is_err());
        assert!(TropicalMonomial::new(f64::NAN, vec![1]).is_err());
    }

    #[test]
    fn product_examples() {
        let x1 = TropicalPolynomial::from_terms(&[(0.0, &[1, 0])]).unwrap();
        let x2 = TropicalPolynomial::from_terms(&[(0.0, &[0, 1])]).unwrap();
        let prod = x1.mul(&x2).unwrap();
        assert_eq!(prod, TropicalPolynomial::from_terms(&[(0.0, &[1, 1])]).unwrap());

        let one = TropicalPolynomial::constant(0.0, 2).unwrap();
        let p = fig4();
        let q = p.mul(&one).unwrap();
        for x in [[0.3, -1.2], [2.0, 0.0], [-4.0, 7.5]] {
            assert_eq!(p.eval(&x).unwrap(), q.eval(&x).unwrap());
        }
        assert_eq!(q.len(), p.len());

        // (x1 ⊕ 0)(x2 ⊕ 0) expands to x1x2 ⊕ x1 ⊕ x2 ⊕ 0
        let a = TropicalPolynomial::from_terms(&[(0.0, &[1, 0]), (0.0, &[0, 0])]).unwrap();
        let b = TropicalPolynomial::from_terms(&[(0.0, &[0, 1]), (0.0, &[0, 0])]).unwrap();
        let prod = a.mul(&b).unwrap();
        let expected: Vec<(f64, Vec<u32>)> = vec![
            (0.0, vec![0, 0]),
            (0.0, vec![0, 1]),
            (0.0, vec![1, 0]),
            (0.0, vec![1, 1]),
        ];
        let got: Vec<(f64, Vec<u32>)> = prod
            .monomials()
            .iter()
            .map(|m| (m.coeff().finite().unwrap(), m.exponents().to_vec()))
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn product_merges_with_max() {
        // (x1 ⊕ 1)(x1 ⊕ 3): the x1 term arises as 3⊙x1 and 1⊙x1, keep 3.
        let a = TropicalPolynomial::from_terms(&[(0.0, &[1]), (1.0, &[0])]).unwrap();
        let b = TropicalPolynomial::from_terms(&[(0.0, &[1]), (3.0, &[0])]).unwrap();
        let prod = a.mul(&b).unwrap();
        let x1 = prod.monomials().iter().find(|m| m.exponents() == [1]).unwrap();
        assert_eq!(x1.coeff(), Finite(3.0));
    }

    fn scalar() -> impl Strategy<Value = TropicalScalar> {
        prop_oneof![
            1 => Just(Bottom),
            6 => (-1000i32..1000).prop_map(|v| Finite(v as f64 / 8.0)),
        ]
    }

    fn poly2(max_terms: usize) -> impl Strategy<Value = TropicalPolynomial> {
        proptest::collection::btree_map((0u32..5, 0u32..5), -10.0f64..10.0, 1..=max_terms)
            .prop_map(|terms| {
                let monos = terms
                    .into_iter()
                    .map(|((a, b), c)| TropicalMonomial::new(c, vec![a, b]).unwrap())
                    .collect();
                TropicalPolynomial::new(monos).unwrap()
            })
    }

    proptest! {
        #[test]
        fn semiring_laws(a in scalar(), b in scalar(), c in scalar()) {
            prop_assert_eq!(a + b, b + a);
            prop_assert_eq!((a + b) + c, a + (b + c));
            prop_assert_eq!(a + a, a);
            prop_assert_eq!(a * b, b * a);
            prop_assert_eq!((a * b) * c, a * (b * c));
            prop_assert_eq!(a * (b + c), a * b + a * c);
            prop_assert_eq!(Bottom + a, a);
            prop_assert_eq!(TropicalScalar::ONE * a, a);
            prop_assert_eq!(Bottom * a, Bottom);
        }

        #[test]
        fn eval_is_convex(p in poly2(6), x in proptest::array::uniform2(-5.0f64..5.0),
                          y in proptest::array::uniform2(-5.0f64..5.0), t in 0.0f64..=1.0) {
            let z = [t * x[0] + (1.0 - t) * y[0], t * x[1] + (1.0 - t) * y[1]];
            let pz = p.eval(&z).unwrap().finite().unwrap();
            let px = p.eval(&x).unwrap().finite().unwrap();
            let py = p.eval(&y).unwrap().finite().unwrap();
            prop_assert!(pz <= t * px + (1.0 - t) * py + 1e-9);
        }

        #[test]
        fn product_evaluates_to_sum(p1 in poly2(5), p2 in poly2(5),
                                    x in proptest::array::uniform2(-5.0f64..5.0)) {
            let lhs = p1.mul(&p2).unwrap().eval(&x).unwrap().finite().unwrap();
            let rhs = p1.eval(&x).unwrap().finite().unwrap() + p2.eval(&x).unwrap().finite().unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn linear_where_dominant_is_unique(p in poly2(6), x in proptest::array::uniform2(-5.0f64..5.0),
                                          dir in proptest::array::uniform2(-1.0f64..1.0)) {
            let dom = p.dominant_monomials(&x, 1e-6).unwrap();
            prop_assume!(dom.len() == 1);
            let alpha = p.monomials()[dom[0]].exponents();
            let h = 1e-8;
            let fwd = [x[0] + h * dir[0], x[1] + h * dir[1]];
            let slope = (p.eval(&fwd).unwrap().finite().unwrap()
                - p.eval(&x).unwrap().finite().unwrap()) / h;
            let expected = alpha[0] as f64 * dir[0] + alpha[1] as f64 * dir[1];
            prop_assert!((slope - expected).abs() < 1e-4);
        }
    }

    #[test]
    fn slopes_differ_across_hypersurface() {
        // x1x2, x1, x2 and the constant all reach 2 at the origin.
        let p = fig4();
        let x = [0.0, 0.0];
        assert!(p.dominant_monomials(&x, 1e-9).unwrap().len() >= 2);
        let h = 1e-6;
        for dir in [[1.0, 0.3], [0.2, 1.0], [-1.0, 0.5]] {
            let f0 = p.eval(&x).unwrap().finite().unwrap();
            let fp = p.eval(&[h * dir[0], h * dir[1]]).unwrap().finite().unwrap();
            let fm = p.eval(&[-h * dir[0], -h * dir[1]]).unwrap().finite().unwrap();
            let right = (fp - f0) / h;
            let left = (f0 - fm) / h;
            assert!((right - left).abs() > 1e-3, "kink expected along {dir:?}");
        }
    }

    #[test]
    fn generic_points_have_single_dominant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let terms: Vec<(f64, [u32; 2])> = (0..6)
                .map(|i| (rng.random_range(-3.0..3.0), [i as u32, (i * 7 % 5) as u32]))
                .collect();
            let monos = terms
                .iter()
                .map(|(c, a)| TropicalMonomial::new(*c, a.to_vec()).unwrap())
                .collect();
            let p = TropicalPolynomial::new(monos).unwrap();
            let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
            assert_eq!(p.dominant_monomials(&x, 1e-12).unwrap().len(), 1);
        }
    }
}
