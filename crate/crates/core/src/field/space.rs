//! Finite value spaces in `R^k` (`k <= 2`), convex neighborhoods of the
//! origin with their Minkowski gauges, and affine maps between value spaces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::dot;

/// Points whose gauge lies within this distance of 1 are treated as on the
/// boundary, hence outside the open set. Sums of decimal atoms are not exact
/// in binary, and a mean sitting on the boundary must not leak inside.
pub const BOUNDARY_GUARD: f64 = 1e-12;

/// An open convex neighborhood `V` of the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    /// `(-r_1, r_1) × … × (-r_k, r_k)`.
    Box { radii: Vec<f64> },
    /// Open Euclidean ball.
    Ball { radius: f64 },
    /// `{ y : A y ∈ inner }` for a linear `A`.
    Preimage { linear: Vec<Vec<f64>>, inner: Box<Shape> },
}

impl Shape {
    pub fn interval(radius: f64) -> Shape {
        Shape::Box { radii: vec![radius] }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Shape::Box { radii } => {
                if radii.is_empty() || radii.len() > 2 {
                    return Err(Error::InvalidArgument(format!("box must have 1 or 2 radii, got {}", radii.len())));
                }
                if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                    return Err(Error::InvalidArgument("box radii must be finite and positive".into()));
                }
            }
            Shape::Ball { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidArgument("ball radius must be finite and positive".into()));
                }
            }
            Shape::Preimage { linear, inner } => {
                inner.validate()?;
                if linear.len() != inner.dim() || linear.iter().any(|row| row.len() != linear[0].len()) {
                    return Err(Error::InvalidArgument("preimage map does not match its inner shape".into()));
                }
            }
        }
        Ok(())
    }

    /// Dimension of the ambient space `R^k` the shape lives in.
    pub fn dim(&self) -> usize {
        match self {
            Shape::Box { radii } => radii.len(),
            // A ball is dimension-agnostic; callers pair it with a value space.
            Shape::Ball { .. } => 0,
            Shape::Preimage { linear, .. } => linear.first().map_or(0, Vec::len),
        }
    }

    fn fits(&self, k: usize) -> bool {
        let d = self.dim();
        d == 0 || d == k
    }

    /// `M_V(y) = inf { t >= 0 : y ∈ tV }`.
    pub fn gauge(&self, y: &[f64]) -> f64 {
        match self {
            Shape::Box { radii } => y.iter().zip(radii).map(|(v, r)| v.abs() / r).fold(0.0, f64::max),
            Shape::Ball { radius } => y.iter().map(|v| v * v).sum::<f64>().sqrt() / radius,
            Shape::Preimage { linear, inner } => {
                let image: Vec<f64> = linear.iter().map(|row| dot(row, y)).collect();
                inner.gauge(&image)
            }
        }
    }

    /// `y ∈ V`, i.e. `M_V(y) < 1` (open set).
    pub fn contains(&self, y: &[f64]) -> bool {
        self.gauge(y) < 1.0 - BOUNDARY_GUARD
    }

    /// `sV` for `s > 0`.
    pub fn scaled(&self, s: f64) -> Shape {
        match self {
            Shape::Box { radii } => Shape::Box { radii: radii.iter().map(|r| r * s).collect() },
            Shape::Ball { radius } => Shape::Ball { radius: radius * s },
            Shape::Preimage { linear, inner } => Shape::Preimage { linear: linear.clone(), inner: Box::new(inner.scaled(s)) },
        }
    }

    /// `A^{-1}(V) = { y : A y ∈ V }`, simplified to a box or ball when `A`
    /// is diagonal (resp. a multiple of the identity).
    pub fn preimage(&self, linear: &[Vec<f64>]) -> Shape {
        let rows = linear.len();
        let cols = linear.first().map_or(0, Vec::len);
        let square = rows == cols;
        let diagonal = square
            && (0..rows).all(|i| (0..cols).all(|j| i == j || linear[i][j] == 0.0))
            && (0..rows).all(|i| linear[i][i] != 0.0);
        match self {
            Shape::Box { radii } if diagonal && radii.len() == rows => Shape::Box {
                radii: radii.iter().enumerate().map(|(i, r)| r / linear[i][i].abs()).collect(),
            },
            Shape::Ball { radius } if diagonal && (0..rows).all(|i| linear[i][i].abs() == linear[0][0].abs()) => {
                Shape::Ball { radius: radius / linear[0][0].abs() }
            }
            Shape::Preimage { linear: inner_map, inner } => {
                // { y : B(A y) ∈ inner } = preimage under BA.
                let composed: Vec<Vec<f64>> = inner_map
                    .iter()
                    .map(|brow| (0..cols).map(|j| (0..rows).map(|i| brow[i] * linear[i][j]).sum()).collect())
                    .collect();
                Shape::Preimage { linear: composed, inner: inner.clone() }
            }
            other => Shape::Preimage { linear: linear.to_vec(), inner: Box::new(other.clone()) },
        }
    }

    /// `inf_{v ∈ V} ⟨λ, v⟩`, available for boxes and balls.
    pub fn inf_linear(&self, lambda: &[f64]) -> Option<f64> {
        match self {
            Shape::Box { radii } => Some(-lambda.iter().zip(radii).map(|(l, r)| l.abs() * r).sum::<f64>()),
            Shape::Ball { radius } => Some(-radius * lambda.iter().map(|l| l * l).sum::<f64>().sqrt()),
            Shape::Preimage { .. } => None,
        }
    }

    pub fn approx_eq(&self, other: &Shape, tol: f64) -> bool {
        let close = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(1.0));
        match (self, other) {
            (Shape::Box { radii: a }, Shape::Box { radii: b }) => close(a, b),
            (Shape::Ball { radius: a }, Shape::Ball { radius: b }) => close(&[*a], &[*b]),
            (Shape::Preimage { linear: a, inner: ia }, Shape::Preimage { linear: b, inner: ib }) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(x, y)) && ia.approx_eq(ib, tol)
            }
            _ => false,
        }
    }
}

/// A pointed convex set `C = y + V` together with a shrink factor `ε`;
/// `shrunk()` is `C(y, ε) = y + (1 - ε) V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexNbhd {
    pub center: Vec<f64>,
    pub shape: Shape,
    pub eps: f64,
}

impl ConvexNbhd {
    pub fn new(center: Vec<f64>, shape: Shape, eps: f64) -> Result<Self> {
        shape.validate()?;
        if center.is_empty() || center.len() > 2 || !shape.fits(center.len()) {
            return Err(Error::InvalidArgument("neighborhood center and shape dimensions differ".into()));
        }
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::InvalidArgument(format!("shrink factor must lie in [0, 1), got {eps}")));
        }
        Ok(Self { center, shape, eps })
    }

    /// The open interval `(x - r, x + r)`.
    pub fn interval(x: f64, r: f64) -> Result<Self> {
        Self::new(vec![x], Shape::interval(r), 0.0)
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::InvalidArgument(format!("shrink factor must lie in [0, 1), got {eps}")));
        }
        self.eps = eps;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `φ(x) = M_V(x - y)`.
    pub fn gauge_from_center(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        self.shape.gauge(&d)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.gauge_from_center(x) < 1.0 - BOUNDARY_GUARD
    }

    /// `C(y, ε) = y + (1 - ε) V`.
    pub fn shrunk(&self) -> ConvexNbhd {
        ConvexNbhd { center: self.center.clone(), shape: self.shape.scaled(1.0 - self.eps), eps: 0.0 }
    }

    /// `y + sV`.
    pub fn rescaled(&self, s: f64) -> ConvexNbhd {
        ConvexNbhd { center: self.center.clone(), shape: self.shape.scaled(s), eps: self.eps }
    }

    /// `inf_{x ∈ C} ⟨λ, x⟩`.
    pub fn inf_linear(&self, lambda: &[f64]) -> Option<f64> {
        self.shape.inf_linear(lambda).map(|v| dot(lambda, &self.center) + v)
    }
}

/// `y ↦ A y + b` from `R^k` to `R^{k'}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub linear: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

impl AffineMap {
    pub fn new(linear: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Self> {
        let rows = linear.len();
        if rows == 0 || rows > 2 || offset.len() != rows {
            return Err(Error::InvalidArgument("affine map must have 1 or 2 output rows matching the offset".into()));
        }
        let cols = linear[0].len();
        if cols == 0 || cols > 2 || linear.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("affine map rows must share a length of 1 or 2".into()));
        }
        if rows > cols {
            return Err(Error::InvalidArgument("affine map cannot have full row rank".into()));
        }
        let full_rank = match rows {
            1 => linear[0].iter().any(|v| *v != 0.0),
            _ => (linear[0][0] * linear[1][1] - linear[0][1] * linear[1][0]).abs() > 0.0,
        };
        if !full_rank {
            return Err(Error::InvalidArgument("affine map must have full row rank".into()));
        }
        Ok(Self { linear, offset })
    }

    pub fn scaling(s: f64) -> Result<Self> {
        Self::new(vec![vec![s]], vec![0.0])
    }

    /// The scalar projection `y ↦ ⟨λ, y⟩`.
    pub fn projection(lambda: &[f64]) -> Result<Self> {
        Self::new(vec![lambda.to_vec()], vec![0.0])
    }

    pub fn in_dim(&self) -> usize {
        self.linear[0].len()
    }

    pub fn out_dim(&self) -> usize {
        self.linear.len()
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        self.linear.iter().zip(&self.offset).map(|(row, b)| dot(row, y) + b).collect()
    }
}

/// A finite support in `R^k`: labelled atoms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValueSpace {
    dim: usize,
    atoms: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl ValueSpace {
    pub fn new(dim: usize, atoms: Vec<Vec<f64>>, labels: Option<Vec<String>>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidModel(format!("value dimension must be 1 or 2, got {dim}")));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidModel("value space needs at least one atom".into()));
        }
        if atoms.iter().any(|a| a.len() != dim || a.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidModel(format!("every atom must be a finite point of R^{dim}")));
        }
        for i in 0..atoms.len() {
            for j in 0..i {
                if atoms[i] == atoms[j] {
                    return Err(Error::InvalidModel(format!("atoms {j} and {i} coincide")));
                }
            }
        }
        let labels = match labels {
            Some(l) if l.len() == atoms.len() => l,
            Some(_) => return Err(Error::InvalidModel("one label per atom is required".into())),
            None => (0..atoms.len()).map(|i| format!("a{i}")).collect(),
        };
        Ok(Self { dim, atoms, labels })
    }

    /// Scalar atoms.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(1, values.iter().map(|v| vec![*v]).collect(), None)
    }

    /// Image under an affine map. Atom indices (and labels) are preserved;
    /// images of distinct atoms may coincide when the map is not injective.
    pub fn mapped(&self, map: &AffineMap) -> Result<Self> {
        if map.in_dim() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "affine map expects R^{}, value space is R^{}",
                map.in_dim(),
                self.dim
            )));
        }
        Ok(Self { dim: map.out_dim(), atoms: self.atoms.iter().map(|a| map.apply(a)).collect(), labels: self.labels.clone() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub(crate) fn padded(&self) -> Vec<[f64; 2]> {
        self.atoms
            .iter()
            .map(|a| {
                let mut p = [0.0; 2];
                p[..a.len()].copy_from_slice(a);
                p
            })
            .collect()
    }

    /// Atom mask of `{ a : pred(a) }`.
    pub fn mask(&self, pred: impl Fn(&[f64]) -> bool) -> Vec<bool> {
        self.atoms.iter().map(|a| pred(a)).collect()
    }

    /// Largest absolute coordinate over the atoms: a Lipschitz bound for the pressure.
    pub fn sup_norm(&self) -> f64 {
        self.atoms.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Closed convex hull membership, with absolute tolerance `tol`.
    pub fn hull_contains(&self, x: &[f64], tol: f64) -> bool {
        match self.dim {
            1 => {
                let lo = self.atoms.iter().map(|a| a[0]).fold(f64::INFINITY, f64::min);
                let hi = self.atoms.iter().map(|a| a[0]).fold(f64::NEG_INFINITY, f64::max);
                x[0] >= lo - tol && x[0] <= hi + tol
            }
            _ => polygon_contains(&convex_hull(&self.atoms), x, tol),
        }
    }
}

fn cross(o: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise hull vertices (monotone chain).
fn convex_hull(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Vec<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<Vec<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn polygon_contains(hull: &[Vec<f64>], x: &[f64], tol: f64) -> bool {
    match hull.len() {
        0 => false,
        1 => (hull[0][0] - x[0]).abs() <= tol && (hull[0][1] - x[1]).abs() <= tol,
        2 => {
            let (a, b) = (&hull[0], &hull[1]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let dist = cross(a, b, x).abs() / len;
            let t = ((x[0] - a[0]) * (b[0] - a[0]) + (x[1] - a[1]) * (b[1] - a[1])) / (len * len);
            dist <= tol && (-tol..=1.0 + tol).contains(&t)
        }
        n => (0..n).all(|i| {
            let (a, b) = (&hull[i], &hull[(i + 1) % n]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            cross(a, b, x) / len >= -tol
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bisection oracle: smallest t with y ∈ tV, using only the membership
    /// test of the unscaled shape (y ∈ tV ⟺ y/t ∈ V).
    fn gauge_by_bisection(shape: &Shape, y: &[f64]) -> f64 {
        let member = |t: f64| {
            let z: Vec<f64> = y.iter().map(|v| v / t).collect();
            shape.gauge(&z) < 1.0
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        while !member(hi) {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if member(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    #[test]
    fn gauge_examples() {
        let v = Shape::interval(1.0);
        assert_eq!(v.gauge(&[0.0]), 0.0);
        assert_eq!(v.gauge(&[0.5]), 0.5);
        let b = Shape::Box { radii: vec![2.0, 1.0] };
        assert_eq!(b.gauge(&[1.0, 0.75]), 0.75);
        assert!((gauge_by_bisection(&b, &[1.0, 0.75]) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn preimage_of_box_under_scaling_is_a_box() {
        let v = Shape::interval(1.0);
        assert_eq!(v.preimage(&[vec![2.0]]), Shape::interval(0.5));
        let p = v.preimage(&[vec![1.0, 1.0]]);
        assert!(matches!(p, Shape::Preimage { .. }));
        assert_eq!(p.gauge(&[0.25, 0.25]), 0.5);
    }

    #[test]
    fn shrunk_set_is_inside() {
        let c = ConvexNbhd::new(vec![0.3], Shape::interval(0.1), 0.25).unwrap();
        let s = c.shrunk();
        assert!((s.shape.gauge(&[0.075]) - 1.0).abs() < 1e-12);
        for i in 0..100 {
            let x = 0.15 + 0.003 * i as f64;
            if s.contains(&[x]) {
                assert!(c.contains(&[x]));
            }
        }
    }

    #[test]
    fn affine_map_validation() {
        assert!(AffineMap::new(vec![vec![0.0]], vec![0.0]).is_err());
        assert!(AffineMap::new(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![0.0, 0.0]).is_err());
        assert!(AffineMap::new(vec![vec![1.0], vec![2.0]], vec![0.0, 0.0]).is_err());
        let m = AffineMap::new(vec![vec![1.0, -1.0]], vec![0.5]).unwrap();
        assert_eq!(m.apply(&[2.0, 1.0]), vec![1.5]);
    }

    #[test]
    fn value_space_rejects_duplicates() {
        assert!(ValueSpace::scalar(&[1.0, 1.0]).is_err());
        assert!(ValueSpace::scalar(&[]).is_err());
        assert!(ValueSpace::new(2, vec![vec![1.0]], None).is_err());
    }

    #[test]
    fn hull_membership() {
        let s = ValueSpace::new(2, vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.2, 0.2]], None).unwrap();
        assert!(s.hull_contains(&[0.3, 0.3], 1e-12));
        assert!(s.hull_contains(&[0.5, 0.5], 1e-12));
        assert!(!s.hull_contains(&[0.6, 0.6], 1e-12));
        let line = ValueSpace::new(2, vec![vec![0.0, 0.0], vec![1.0, 1.0]], None).unwrap();
        assert!(line.hull_contains(&[0.5, 0.5], 1e-12));
        assert!(!line.hull_contains(&[0.5, 0.4], 1e-12));
        let r = ValueSpace::scalar(&[-1.0, 1.0]).unwrap();
        assert!(r.hull_contains(&[1.0], 0.0) && !r.hull_contains(&[1.01], 0.0));
    }
}
