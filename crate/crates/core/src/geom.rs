//! Euclidean primitives: vectors, balls, aligned boxes and box-decomposition cells.

use std::ops::Deref;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Absolute tolerance used by geometric comparisons.
pub const TOL: f64 = 1e-12;

/// A point or direction in R^d with finite coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter("vector of dimension 0".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Vector(coords))
    }

    /// Builds a vector without validation. Callers guarantee finiteness.
    pub fn from_vec(coords: Vec<f64>) -> Self {
        Vector(coords)
    }

    pub fn zeros(d: usize) -> Self {
        Vector(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl From<&[f64]> for Vector {
    fn from(v: &[f64]) -> Self {
        Vector(v.to_vec())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Extreme eigenvalues `(min, max)` of a symmetric matrix.
pub fn sym_eig_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = m.clone().symmetric_eigenvalues();
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm(m: &DMatrix<f64>) -> f64 {
    let (lo, hi) = sym_eig_extremes(m);
    lo.abs().max(hi.abs())
}

/// Closed Euclidean ball.
#[derive(Clone, Debug, PartialEq)]
pub struct EuclideanBall {
    pub center: Vector,
    pub radius: f64,
}

impl EuclideanBall {
    pub fn new(center: Vector, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!("ball radius {radius}")));
        }
        Ok(EuclideanBall { center, radius })
    }

    pub fn diam(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        dist(&self.center, x) <= self.radius + TOL
    }

    /// Euclidean distance from `p` to the ball (0 inside).
    pub fn dist_to_point(&self, p: &[f64]) -> f64 {
        (dist(&self.center, p) - self.radius).max(0.0)
    }
}

/// Axis-aligned box `[low, high]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedBox {
    pub low: Vector,
    pub high: Vector,
}

impl AlignedBox {
    pub fn new(low: Vector, high: Vector) -> Result<Self> {
        if low.dim() != high.dim() {
            return Err(Error::DimensionMismatch {
                expected: low.dim(),
                got: high.dim(),
            });
        }
        if low.iter().zip(high.iter()).any(|(l, h)| l > h) {
            return Err(Error::InvalidParameter("box with low > high".into()));
        }
        Ok(AlignedBox { low, high })
    }

    pub fn dim(&self) -> usize {
        self.low.dim()
    }

    pub fn center(&self) -> Vector {
        Vector(
            self.low
                .iter()
                .zip(self.high.iter())
                .map(|(l, h)| 0.5 * (l + h))
                .collect(),
        )
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.high[axis] - self.low[axis]
    }

    /// Axis of the longest side; ties go to the lowest axis.
    pub fn longest_axis(&self) -> usize {
        let mut best = 0;
        for i in 1..self.dim() {
            if self.side(i) > self.side(best) {
                best = i;
            }
        }
        best
    }

    pub fn diameter(&self) -> f64 {
        dist(&self.low, &self.high)
    }

    /// Closed containment.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.low.iter().zip(self.high.iter()))
            .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    /// Open containment (strict interior).
    pub fn interior_contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.low.iter().zip(self.high.iter()))
            .all(|(v, (l, h))| *v > *l && *v < *h)
    }

    pub fn contains_box(&self, other: &AlignedBox) -> bool {
        self.contains(&other.low) && self.contains(&other.high)
    }

    /// Distance from `x` to the box (0 inside).
    pub fn dist_to_point(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.low.iter().zip(self.high.iter()))
            .map(|(v, (l, h))| {
                let e = if v < l {
                    l - v
                } else if v > h {
                    v - h
                } else {
                    0.0
                };
                e * e
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Splits at the midpoint of `axis`, returning `(lower, upper)`.
    pub fn split(&self, axis: usize) -> (AlignedBox, AlignedBox) {
        let mid = 0.5 * (self.low[axis] + self.high[axis]);
        let mut lo_high = self.high.clone();
        lo_high.0[axis] = mid;
        let mut hi_low = self.low.clone();
        hi_low.0[axis] = mid;
        (
            AlignedBox {
                low: self.low.clone(),
                high: lo_high,
            },
            AlignedBox {
                low: hi_low,
                high: self.high.clone(),
            },
        )
    }

    /// Whether the ball lies inside the box.
    pub fn contains_ball(&self, b: &EuclideanBall) -> bool {
        b.center
            .iter()
            .zip(self.low.iter().zip(self.high.iter()))
            .all(|(c, (l, h))| c - b.radius >= *l && c + b.radius <= *h)
    }
}

/// A cell of a box decomposition: `outer` minus the interior of `inner`.
#[derive(Clone, Debug, PartialEq)]
pub struct BbdCell {
    pub outer: AlignedBox,
    pub inner: Option<AlignedBox>,
}

impl BbdCell {
    pub fn from_box(b: AlignedBox) -> Self {
        BbdCell {
            outer: b,
            inner: None,
        }
    }

    pub fn with_hole(outer: AlignedBox, inner: AlignedBox) -> Result<Self> {
        if !outer.contains_box(&inner) {
            return Err(Error::InvalidParameter("inner box not inside outer".into()));
        }
        Ok(BbdCell {
            outer,
            inner: Some(inner),
        })
    }

    pub fn is_empty(&self) -> bool {
        match &self.inner {
            Some(i) => i == &self.outer,
            None => false,
        }
    }

    /// Membership in the closed region `outer \ interior(inner)`.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.outer.contains(x) && !self.inner.as_ref().is_some_and(|i| i.interior_contains(x))
    }
}

/// `dist(p, B) / diam(B)`.
pub fn separation_ratio(p: &[f64], b: &EuclideanBall) -> Result<f64> {
    if b.radius <= 0.0 {
        return Err(Error::DegenerateBall);
    }
    Ok(b.dist_to_point(p) / b.diam())
}

/// Whether `p` and `b` are `beta`-separated.
pub fn is_separated(p: &[f64], b: &EuclideanBall, beta: f64) -> Result<bool> {
    Ok(separation_ratio(p, b)? >= beta)
}

/// Distance from `p` to the closed region of `w`.
pub fn dist_point_cell(p: &[f64], w: &BbdCell) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::EmptyCell);
    }
    if !w.outer.contains(p) {
        return Ok(w.outer.dist_to_point(p));
    }
    match &w.inner {
        Some(inner) if inner.interior_contains(p) => Ok(p
            .iter()
            .zip(inner.low.iter().zip(inner.high.iter()))
            .map(|(v, (l, h))| (v - l).min(h - v))
            .fold(f64::INFINITY, f64::min)),
        _ => Ok(0.0),
    }
}

/// Distance between a ball and a cell.
pub fn dist_ball_cell(b: &EuclideanBall, w: &BbdCell) -> Result<f64> {
    Ok((dist_point_cell(&b.center, w)? - b.radius).max(0.0))
}

/// Circumscribed ball of the cell's outer box.
pub fn enclosing_ball(w: &BbdCell) -> EuclideanBall {
    EuclideanBall {
        center: w.outer.center(),
        radius: 0.5 * w.outer.diameter(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    fn ball(c: &[f64], r: f64) -> EuclideanBall {
        EuclideanBall::new(v(c), r).unwrap()
    }

    fn bx(l: &[f64], h: &[f64]) -> AlignedBox {
        AlignedBox::new(v(l), v(h)).unwrap()
    }

    #[test]
    fn separation_examples() {
        assert_eq!(separation_ratio(&[10.0, 0.0], &ball(&[0.0, 0.0], 1.0)).unwrap(), 4.5);
        assert_eq!(separation_ratio(&[0.5, 0.0], &ball(&[0.0, 0.0], 1.0)).unwrap(), 0.0);
        assert_eq!(separation_ratio(&[5.0, 0.0], &ball(&[1.0, 0.0], 1.0)).unwrap(), 1.5);
        assert!(matches!(
            separation_ratio(&[1.0, 0.0], &ball(&[0.0, 0.0], 0.0)),
            Err(Error::DegenerateBall)
        ));
    }

    #[test]
    fn is_separated_examples() {
        let b = ball(&[0.0, 0.0], 1.0);
        assert!(is_separated(&[10.0, 0.0], &b, 4.0).unwrap());
        assert!(!is_separated(&[10.0, 0.0], &b, 5.0).unwrap());
        assert!(!is_separated(&[0.0, 0.0], &b, 1.0).unwrap());
    }

    #[test]
    fn dist_point_cell_examples() {
        let w = BbdCell::from_box(bx(&[0.0, 0.0], &[1.0, 1.0]));
        assert_eq!(dist_point_cell(&[3.0, 0.0], &w).unwrap(), 2.0);
        assert_eq!(dist_point_cell(&[0.5, 0.2], &w).unwrap(), 0.0);
        let ring =
            BbdCell::with_hole(bx(&[0.0, 0.0], &[1.0, 1.0]), bx(&[0.25, 0.25], &[0.75, 0.75]))
                .unwrap();
        assert!((dist_point_cell(&[0.5, 0.5], &ring).unwrap() - 0.25).abs() < 1e-15);
        let empty = BbdCell::with_hole(bx(&[0.0], &[1.0]), bx(&[0.0], &[1.0])).unwrap();
        assert!(matches!(dist_point_cell(&[0.5], &empty), Err(Error::EmptyCell)));
    }

    #[test]
    fn ring_distance_matches_dense_boundary_scan() {
        let ring =
            BbdCell::with_hole(bx(&[0.0, 0.0], &[1.0, 1.0]), bx(&[0.2, 0.3], &[0.7, 0.9])).unwrap();
        let p = [0.4, 0.5];
        let mut best = f64::INFINITY;
        let m = 4000;
        for k in 0..=m {
            let t = k as f64 / m as f64;
            for q in [
                [0.2 + 0.5 * t, 0.3],
                [0.2 + 0.5 * t, 0.9],
                [0.2, 0.3 + 0.6 * t],
                [0.7, 0.3 + 0.6 * t],
            ] {
                best = best.min(dist(&p, &q));
            }
        }
        let got = dist_point_cell(&p, &ring).unwrap();
        assert!((got - best).abs() < 1e-3);
    }

    #[test]
    fn enclosing_ball_examples() {
        let b = enclosing_ball(&BbdCell::from_box(bx(&[0.0, 0.0], &[2.0, 2.0])));
        assert_eq!(b.center.as_slice(), &[1.0, 1.0]);
        assert!((b.radius - 2f64.sqrt()).abs() < 1e-15);
        let flat = enclosing_ball(&BbdCell::from_box(bx(&[0.0, 0.0], &[1.0, 0.0])));
        assert_eq!(flat.center.as_slice(), &[0.5, 0.0]);
        assert_eq!(flat.radius, 0.5);
        let cube = enclosing_ball(&BbdCell::from_box(bx(&[0.0; 3], &[1.0; 3])));
        assert!((cube.radius - 3f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn vector_rejects_non_finite() {
        assert!(matches!(Vector::new(vec![1.0, f64::NAN]), Err(Error::NonFinite)));
        assert!(Vector::new(vec![]).is_err());
    }

    #[test]
    fn split_halves_longest_axis() {
        let b = bx(&[0.0, 0.0], &[2.0, 1.0]);
        assert_eq!(b.longest_axis(), 0);
        let (l, h) = b.split(0);
        assert_eq!(l.high.as_slice(), &[1.0, 1.0]);
        assert_eq!(h.low.as_slice(), &[1.0, 0.0]);
    }
}
