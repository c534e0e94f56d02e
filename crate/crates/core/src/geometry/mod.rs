//! Metric context for all distance computations.
//!
//! Two modes exist: Euclidean space and the flat torus `R^d / (period Z^d)`.
//! On the torus, coordinates are stored canonically in `[0, period_i)` and
//! distances use the minimum image convention.

mod hull;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use hull::{ball_contained_in_hull_interior, HullContainment, HullMethod};

/// A point of `R^d` (or of the torus, in canonical coordinates).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point<S>(pub Vec<S>);

impl<S: Real> Point<S> {
    pub fn new(coords: Vec<S>) -> Self {
        Self(coords)
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![S::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[S] {
        &self.0
    }
}

impl<S> From<Vec<S>> for Point<S> {
    fn from(v: Vec<S>) -> Self {
        Self(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GeometryKind<S> {
    Euclidean,
    Torus { period: Vec<S> },
}

/// Euclidean space or flat torus of a fixed dimension.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Geometry<S> {
    kind: GeometryKind<S>,
    dim: usize,
}

impl<S: Real> Geometry<S> {
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGeometry("dimension must be at least 1".into()));
        }
        Ok(Self { kind: GeometryKind::Euclidean, dim })
    }

    pub fn torus(period: Vec<S>) -> Result<Self> {
        if period.is_empty() {
            return Err(Error::InvalidGeometry("torus needs at least one period".into()));
        }
        if let Some(p) = period.iter().find(|p| !(p.is_finite() && **p > S::zero())) {
            return Err(Error::InvalidGeometry(format!("torus period must be positive, got {p}")));
        }
        let dim = period.len();
        Ok(Self { kind: GeometryKind::Torus { period }, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &GeometryKind<S> {
        &self.kind
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.kind, GeometryKind::Torus { .. })
    }

    pub fn period(&self) -> Option<&[S]> {
        match &self.kind {
            GeometryKind::Torus { period } => Some(period),
            GeometryKind::Euclidean => None,
        }
    }

    /// Volume of the fundamental domain (torus only).
    pub fn volume(&self) -> Option<S> {
        self.period().map(|p| p.iter().fold(S::one(), |acc, &x| acc * x))
    }

    /// Largest distance realizable on the torus, `+inf` in Euclidean mode.
    pub fn max_distance(&self) -> S {
        match self.period() {
            Some(p) => {
                let half = S::of(0.5);
                p.iter().map(|&x| (x * half) * (x * half)).sum::<S>().sqrt()
            }
            None => S::infinity(),
        }
    }

    pub fn check(&self, p: &[S]) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: p.len() });
        }
        Ok(())
    }

    /// Map coordinates into the canonical fundamental domain.
    pub fn canonicalize(&self, p: &mut [S]) {
        if let Some(period) = self.period() {
            for (x, &l) in p.iter_mut().zip(period) {
                *x = wrap(*x, l);
            }
        }
    }

    pub fn canonical_point(&self, mut p: Point<S>) -> Result<Point<S>> {
        self.check(&p.0)?;
        self.canonicalize(&mut p.0);
        Ok(p)
    }

    /// Distance between two coordinate slices of the right dimension.
    ///
    /// Both slices must already be canonical in torus mode.
    #[inline]
    pub fn dist(&self, p: &[S], q: &[S]) -> S {
        debug_assert_eq!(p.len(), self.dim);
        debug_assert_eq!(q.len(), self.dim);
        match &self.kind {
            GeometryKind::Euclidean => {
                p.iter().zip(q).map(|(&a, &b)| (a - b) * (a - b)).sum::<S>().sqrt()
            }
            GeometryKind::Torus { period } => p
                .iter()
                .zip(q)
                .zip(period)
                .map(|((&a, &b), &l)| {
                    let d = axis_gap(a, b, l);
                    d * d
                })
                .sum::<S>()
                .sqrt(),
        }
    }

    /// Checked distance between points.
    pub fn distance(&self, p: &Point<S>, q: &Point<S>) -> Result<S> {
        self.check(&p.0)?;
        self.check(&q.0)?;
        if self.is_torus() {
            let (mut p, mut q) = (p.0.clone(), q.0.clone());
            self.canonicalize(&mut p);
            self.canonicalize(&mut q);
            Ok(self.dist(&p, &q))
        } else {
            Ok(self.dist(&p.0, &q.0))
        }
    }

    /// Vector `q - p`, using the minimum image on the torus.
    pub fn displacement(&self, p: &[S], q: &[S]) -> Vec<S> {
        match &self.kind {
            GeometryKind::Euclidean => p.iter().zip(q).map(|(&a, &b)| b - a).collect(),
            GeometryKind::Torus { period } => p
                .iter()
                .zip(q)
                .zip(period)
                .map(|((&a, &b), &l)| {
                    let mut d = wrap(b - a, l);
                    if d > l * S::of(0.5) {
                        d -= l;
                    }
                    d
                })
                .collect(),
        }
    }

    /// `p + v`, canonicalized.
    pub fn offset(&self, p: &[S], v: &[S]) -> Vec<S> {
        let mut out: Vec<S> = p.iter().zip(v).map(|(&a, &b)| a + b).collect();
        self.canonicalize(&mut out);
        out
    }
}

/// Reduce `x` into `[0, l)`.
#[inline]
pub(crate) fn wrap<S: Real>(x: S, l: S) -> S {
    let mut r = x % l;
    if r < S::zero() {
        r += l;
    }
    // `-tiny % l + l` can round up to exactly `l`.
    if r >= l {
        r = S::zero();
    }
    r
}

#[inline]
fn axis_gap<S: Real>(a: S, b: S, l: S) -> S {
    let d = (a - b).abs();
    let d = if d >= l { d % l } else { d };
    d.min(l - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pt(v: &[f64]) -> Point<f64> {
        Point(v.to_vec())
    }

    #[test]
    fn euclidean_pythagoras() {
        let g = Geometry::euclidean(2).unwrap();
        assert_eq!(g.distance(&pt(&[0.0, 0.0]), &pt(&[3.0, 4.0])).unwrap(), 5.0);
    }

    #[test]
    fn torus_wraps() {
        let g = Geometry::torus(vec![10.0, 10.0]).unwrap();
        assert_relative_eq!(g.distance(&pt(&[0.5, 0.0]), &pt(&[9.5, 0.0])).unwrap(), 1.0);
        let g = Geometry::torus(vec![2.0]).unwrap();
        assert_relative_eq!(g.distance(&pt(&[0.0]), &pt(&[1.5])).unwrap(), 0.5);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let g = Geometry::euclidean(2).unwrap();
        assert!(matches!(
            g.distance(&pt(&[0.0]), &pt(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn bad_geometries_rejected() {
        assert!(Geometry::<f64>::euclidean(0).is_err());
        assert!(Geometry::torus(vec![1.0, 0.0]).is_err());
        assert!(Geometry::torus(vec![-1.0]).is_err());
        assert!(Geometry::<f64>::torus(vec![]).is_err());
    }

    #[test]
    fn canonical_coordinates() {
        let g = Geometry::torus(vec![10.0]).unwrap();
        let p = g.canonical_point(pt(&[-2.5])).unwrap();
        assert_eq!(p.0, vec![7.5]);
        let p = g.canonical_point(pt(&[23.0])).unwrap();
        assert_relative_eq!(p.0[0], 3.0);
        assert!(wrap(-1e-20f64, 10.0) < 10.0);
    }

    #[test]
    fn displacement_minimum_image() {
        let g = Geometry::torus(vec![10.0]).unwrap();
        assert_relative_eq!(g.displacement(&[9.5], &[0.5])[0], 1.0);
        assert_relative_eq!(g.displacement(&[0.5], &[9.5])[0], -1.0);
    }

    #[test]
    fn f32_geometry_works() {
        let g = Geometry::<f32>::torus(vec![4.0, 4.0]).unwrap();
        let d = g.dist(&[0.25, 0.0], &[3.75, 0.0]);
        assert!((d - 0.5).abs() < 1e-6);
    }
}
