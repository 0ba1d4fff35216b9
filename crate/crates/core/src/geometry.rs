//! Exact 2-D convex geometry: hulls, Minkowski sums, zonotopes and the
//! dual subdivision of bias-free tropical polynomials.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::tropical::TropicalPolynomial;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    fn lex_cmp(&self, o: &Point2) -> Ordering {
        self.x.total_cmp(&o.x).then(self.y.total_cmp(&o.y))
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2::new(x, y)
    }
}

/// Orientation of `c` relative to the directed line `a → b`.
fn turn(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

/// A convex polygon in canonical form: counter-clockwise, strictly convex
/// corners only, starting at the lexicographically smallest vertex.
///
/// Degenerate polytopes are a single point or a segment `[min, max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope2D {
    vertices: Vec<Point2>,
}

impl Polytope2D {
    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Single-point polytope.
    pub fn point(p: Point2) -> Self {
        Self { vertices: vec![p] }
    }

    /// `max_{v ∈ P} ⟨dir, v⟩`.
    pub fn support(&self, dir: Point2) -> f64 {
        self.vertices
            .iter()
            .map(|v| v.dot(dir))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let twice: f64 = (0..n)
            .map(|i| self.vertices[i].cross(self.vertices[(i + 1) % n]))
            .sum();
        0.5 * twice
    }

    pub fn centroid_of_vertices(&self) -> Point2 {
        let n = self.vertices.len() as f64;
        let s = self
            .vertices
            .iter()
            .fold(Point2::default(), |acc, &v| acc + v);
        s * (1.0 / n)
    }

    pub fn translate(&self, by: Point2) -> Polytope2D {
        Polytope2D {
            vertices: self.vertices.iter().map(|&v| v + by).collect(),
        }
    }

    /// Euclidean distance from `p` to the region (zero inside).
    pub fn distance_to(&self, p: Point2) -> f64 {
        let v = &self.vertices;
        match v.len() {
            0 => f64::INFINITY,
            1 => (p - v[0]).norm(),
            2 => segment_distance(p, v[0], v[1]),
            n => {
                if (0..n).all(|i| turn(v[i], v[(i + 1) % n], p) >= 0.0) {
                    return 0.0;
                }
                (0..n)
                    .map(|i| segment_distance(p, v[i], v[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }
}

fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Andrew's monotone chain. Duplicates and collinear points are dropped.
pub fn convex_hull_2d(points: &[Point2]) -> Result<Polytope2D> {
    if points.is_empty() {
        return Err(Error::Empty("point set"));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::NonFinite("hull input"));
    }
    let mut pts = points.to_vec();
    pts.sort_by(Point2::lex_cmp);
    pts.dedup();
    if pts.len() <= 2 {
        return Ok(Polytope2D { vertices: pts });
    }

    let mut lower: Vec<Point2> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && turn(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && turn(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    Ok(Polytope2D { vertices: lower })
}

/// `ConvHull({v1 + v2 : v1 ∈ V(P1), v2 ∈ V(P2)})`.
pub fn minkowski_sum(p1: &Polytope2D, p2: &Polytope2D) -> Result<Polytope2D> {
    if p1.is_empty() || p2.is_empty() {
        return Err(Error::Empty("minkowski operand"));
    }
    let sums: Vec<Point2> = p1
        .vertices
        .iter()
        .flat_map(|&a| p2.vertices.iter().map(move |&b| a + b))
        .collect();
    convex_hull_2d(&sums)
}

/// `{shift + Σ λ_i v_i : 0 ≤ λ_i ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    generators: Vec<Vec<f64>>,
    shift: Vec<f64>,
}

impl Zonotope {
    pub fn new(generators: Vec<Vec<f64>>, shift: Vec<f64>) -> Result<Self> {
        let n = shift.len();
        for g in &generators {
            if g.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: g.len(),
                });
            }
        }
        Ok(Self { generators, shift })
    }

    /// Zonotope with zero shift; the dimension is taken from the generators.
    pub fn from_generators(generators: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        Self::new(generators, vec![0.0; dim])
    }

    pub fn generators(&self) -> &[Vec<f64>] {
        &self.generators
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// `shift + ½ Σ v_i`, the centre of symmetry.
    pub fn center(&self) -> Vec<f64> {
        let mut c = self.shift.clone();
        for g in &self.generators {
            for (ci, gi) in c.iter_mut().zip(g) {
                *ci += 0.5 * gi;
            }
        }
        c
    }
}

/// Vertices of a planar zonotope.
///
/// Generators are flipped into the upper half-plane, sorted by angle, and
/// the boundary is walked edge by edge; parallel generators merge into one
/// edge. Runs in `O(m log m)`.
pub fn zonotope_vertices(z: &Zonotope) -> Result<Polytope2D> {
    if z.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: z.dim(),
        });
    }
    let mut start = Point2::new(z.shift[0], z.shift[1]);
    let mut edges: Vec<Point2> = Vec::with_capacity(z.generators.len());
    for g in &z.generators {
        let g = Point2::new(g[0], g[1]);
        if !g.x.is_finite() || !g.y.is_finite() {
            return Err(Error::NonFinite("zonotope generator"));
        }
        if g.x == 0.0 && g.y == 0.0 {
            continue;
        }
        if g.y < 0.0 || (g.y == 0.0 && g.x < 0.0) {
            start = start + g;
            edges.push(g * -1.0);
        } else {
            edges.push(g);
        }
    }
    // all edges lie in the half-open upper half-plane, so the cross product
    // orders them by angle
    edges.sort_by(|a, b| {
        let c = a.cross(*b);
        if c > 0.0 {
            Ordering::Less
        } else if c < 0.0 {
            Ordering::Greater
        } else {
            Ordering::Equal
        }
    });
    let mut merged: Vec<Point2> = Vec::with_capacity(edges.len());
    for e in edges {
        match merged.last_mut() {
            Some(last) if last.cross(e) == 0.0 => *last = *last + e,
            _ => merged.push(e),
        }
    }

    let mut boundary = Vec::with_capacity(2 * merged.len() + 1);
    let mut p = start;
    boundary.push(p);
    for &e in &merged {
        p = p + e;
        boundary.push(p);
    }
    for &e in &merged {
        p = p - e;
        boundary.push(p);
    }
    convex_hull_2d(&boundary)
}

/// Dual subdivision of a bias-free polynomial in two variables, which is
/// its Newton polytope.
pub fn dual_subdivision_points(p: &TropicalPolynomial) -> Result<Polytope2D> {
    if p.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: p.dim(),
        });
    }
    let pts: Vec<Point2> = p
        .newton_points()
        .iter()
        .map(|e| Point2::new(f64::from(e[0]), f64::from(e[1])))
        .collect();
    convex_hull_2d(&pts)
}

/// Symmetric Hausdorff distance between two convex regions.
///
/// For convex regions the one-sided distance `sup_{a∈P} d(a, Q)` is a convex
/// function of `a` and peaks at a vertex of `P`, so vertex distances are exact.
pub fn hausdorff_distance(p1: &Polytope2D, p2: &Polytope2D) -> Result<f64> {
    if p1.is_empty() || p2.is_empty() {
        return Err(Error::Empty("hausdorff operand"));
    }
    let one_sided = |a: &Polytope2D, b: &Polytope2D| {
        a.vertices
            .iter()
            .map(|&v| b.distance_to(v))
            .fold(0.0f64, f64::max)
    };
    Ok(one_sided(p1, p2).max(one_sided(p2, p1)))
}

/// Planar zonotope whose generators are columns `dims` of each row of `g`.
pub fn project_generators(g: &DenseMatrix, dims: (usize, usize)) -> Result<Zonotope> {
    for d in [dims.0, dims.1] {
        if d >= g.cols() {
            return Err(Error::OutOfRange {
                what: "column",
                index: d,
                limit: g.cols(),
            });
        }
    }
    let gens = (0..g.rows())
        .map(|i| vec![g.get(i, dims.0), g.get(i, dims.1)])
        .collect();
    Zonotope::from_generators(gens, 2)
}
