//! Atomic measures: exact counting measures and discretizations of
//! continuous ones, plus closed/open ball queries and shell decompositions.

pub(crate) mod index;
mod shells;
mod spec;

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Geometry, Point};
use crate::scalar::{Real, Tolerances};

pub use shells::{group_shells, Shell, ShellIndex};
pub use spec::{make_measure, FactorSpec, MeasureSpec, OneOrMany, WeightedAtom};

/// Where the atoms of a measure came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Provenance {
    Explicit,
    Grid { resolution: Vec<usize>, scale: f64, jittered: bool },
    Lattice { spacing: Vec<f64>, weight: f64, offset: Vec<f64>, jittered: bool },
    Poisson { intensity: f64, seed: u64 },
    Product { factors: Vec<Provenance> },
    Translated { inner: Box<Provenance> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Closure {
    Open,
    Closed,
}

/// Finite weighted set of distinct atoms.
#[derive(Clone, Debug, Serialize)]
pub struct AtomicMeasure<S> {
    geometry: Geometry<S>,
    coords: Vec<S>,
    weights: Vec<S>,
    provenance: Provenance,
    /// Region the atoms discretize, when known; used for intensities.
    window_volume: Option<S>,
}

impl<S: Real> AtomicMeasure<S> {
    /// Build from explicit atoms. Positions are canonicalized and coincident
    /// atoms merged (first occurrence keeps its index).
    pub fn new(
        geometry: Geometry<S>,
        positions: Vec<Point<S>>,
        weights: Vec<S>,
        provenance: Provenance,
    ) -> Result<Self> {
        if positions.len() != weights.len() {
            return Err(Error::InvalidSpec(format!(
                "{} positions but {} weights",
                positions.len(),
                weights.len()
            )));
        }
        let d = geometry.dim();
        let mut coords = Vec::with_capacity(positions.len() * d);
        let mut merged: Vec<S> = Vec::with_capacity(weights.len());
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(positions.len());
        for (p, w) in positions.into_iter().zip(weights) {
            if !(w.is_finite() && w > S::zero()) {
                return Err(Error::InvalidSpec(format!("atom weights must be positive and finite, got {w}")));
            }
            let p = geometry.canonical_point(p)?;
            if p.0.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidSpec("atom coordinates must be finite".into()));
            }
            let key: Vec<u64> = p.0.iter().map(|x| (x.to_f64_lossy() + 0.0).to_bits()).collect();
            match seen.get(&key) {
                Some(&k) => merged[k] += w,
                None => {
                    seen.insert(key, merged.len());
                    merged.push(w);
                    coords.extend_from_slice(&p.0);
                }
            }
        }
        Ok(Self { geometry, coords, weights: merged, provenance, window_volume: None })
    }

    pub(crate) fn with_window_volume(mut self, volume: Option<S>) -> Self {
        self.window_volume = volume;
        self
    }

    pub fn geometry(&self) -> &Geometry<S> {
        &self.geometry
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn position(&self, i: usize) -> &[S] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn point(&self, i: usize) -> Point<S> {
        Point(self.position(i).to_vec())
    }

    pub fn coords(&self) -> &[S] {
        &self.coords
    }

    pub fn weight(&self, i: usize) -> S {
        self.weights[i]
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn total_mass(&self) -> S {
        self.weights.iter().copied().sum()
    }

    /// Total mass per unit volume of the torus (or of the generating window).
    pub fn intensity(&self) -> Option<S> {
        self.geometry
            .volume()
            .or(self.window_volume)
            .map(|v| self.total_mass() / v)
    }

    /// Largest absolute coordinate (the torus period bounds it on the torus).
    pub fn magnitude(&self) -> S {
        let coords = self.coords.iter().map(|x| x.abs()).fold(S::zero(), S::max);
        match self.geometry.period() {
            Some(p) => p.iter().copied().fold(coords, S::max),
            None => coords,
        }
    }

    pub fn tolerances(&self) -> Tolerances<S> {
        Tolerances::for_magnitude(self.magnitude())
    }

    /// Mass of the open or closed ball; sphere membership uses the shell tolerance.
    pub fn ball_mass(&self, center: &[S], radius: S, closure: Closure) -> Result<S> {
        self.geometry.check(center)?;
        if radius < S::zero() {
            return Err(Error::Precondition("radius must be non-negative".into()));
        }
        let mut c = center.to_vec();
        self.geometry.canonicalize(&mut c);
        let tol = self.tolerances().shell;
        let mut total = S::zero();
        for i in 0..self.len() {
            let d = self.geometry.dist(&c, self.position(i));
            let inside = match closure {
                Closure::Closed => d <= radius + tol,
                Closure::Open => d < radius - tol,
            };
            if inside {
                total += self.weights[i];
            }
        }
        Ok(total)
    }

    /// Group all atoms into spheres around `query`.
    pub fn build_shells(&self, query: &[S]) -> Result<ShellIndex<S>> {
        self.build_shells_with_tol(query, self.tolerances().shell)
    }

    pub fn build_shells_with_tol(&self, query: &[S], shell_tol: S) -> Result<ShellIndex<S>> {
        self.geometry.check(query)?;
        if self.is_empty() {
            return Err(Error::Precondition("measure has no atoms".into()));
        }
        let mut q = query.to_vec();
        self.geometry.canonicalize(&mut q);
        let items = (0..self.len())
            .map(|i| (self.geometry.dist(&q, self.position(i)), i, self.weights[i]))
            .collect();
        Ok(ShellIndex::from_distances(items, shell_tol))
    }

    /// The flow `θ_v`: every atom `p` moves to `p - v`.
    pub fn translate(&self, v: &[S]) -> Result<Self> {
        self.geometry.check(v)?;
        let d = self.dim();
        let mut coords = self.coords.clone();
        for p in coords.chunks_exact_mut(d) {
            for (x, &s) in p.iter_mut().zip(v) {
                *x -= s;
            }
            self.geometry.canonicalize(p);
        }
        Ok(Self {
            geometry: self.geometry.clone(),
            coords,
            weights: self.weights.clone(),
            provenance: Provenance::Translated { inner: Box::new(self.provenance.clone()) },
            window_volume: self.window_volume,
        })
    }

    /// Same positions, new weights (all must stay positive).
    pub fn reweighted(&self, weights: Vec<S>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::InvalidSpec("weight count mismatch".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > S::zero())) {
            return Err(Error::InvalidSpec("atom weights must be positive and finite".into()));
        }
        let mut out = self.clone();
        out.weights = weights;
        Ok(out)
    }

    /// Multiply every weight by `factor`.
    pub fn scaled(&self, factor: S) -> Result<Self> {
        self.reweighted(self.weights.iter().map(|&w| w * factor).collect())
    }

    /// Index of the atom nearest to `p` (lowest index among ties).
    pub fn nearest_atom(&self, p: &[S]) -> Option<(usize, S)> {
        let mut q = p.to_vec();
        self.geometry.canonicalize(&mut q);
        let mut best: Option<(usize, S)> = None;
        for i in 0..self.len() {
            let d = self.geometry.dist(&q, self.position(i));
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((i, d));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn integers(lo: i32, hi: i32) -> AtomicMeasure<f64> {
        let g = Geometry::euclidean(1).unwrap();
        let pts = (lo..=hi).map(|k| Point(vec![k as f64])).collect::<Vec<_>>();
        let n = pts.len();
        AtomicMeasure::new(g, pts, vec![1.0; n], Provenance::Explicit).unwrap()
    }

    #[test]
    fn ball_mass_open_and_closed() {
        let m = integers(-5, 5);
        assert_eq!(m.ball_mass(&[0.5], 0.5, Closure::Closed).unwrap(), 2.0);
        assert_eq!(m.ball_mass(&[0.5], 0.5, Closure::Open).unwrap(), 0.0);
        assert_eq!(m.ball_mass(&[0.5], 100.0, Closure::Closed).unwrap(), 11.0);
        assert!(m.ball_mass(&[0.5], -1.0, Closure::Closed).is_err());
    }

    #[test]
    fn coincident_atoms_merge() {
        let g = Geometry::torus(vec![2.0]).unwrap();
        let m = AtomicMeasure::new(
            g,
            vec![Point(vec![0.5]), Point(vec![2.5]), Point(vec![1.0])],
            vec![1.0, 2.0, 1.0],
            Provenance::Explicit,
        )
        .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.weights(), &[3.0, 1.0]);
    }

    #[test]
    fn nonpositive_weights_rejected() {
        let g = Geometry::euclidean(1).unwrap();
        assert!(AtomicMeasure::new(g.clone(), vec![Point(vec![0.0])], vec![0.0], Provenance::Explicit).is_err());
        assert!(AtomicMeasure::new(g, vec![Point(vec![0.0])], vec![f64::NAN], Provenance::Explicit).is_err());
    }

    #[test]
    fn shells_group_symmetric_atoms() {
        let g = Geometry::euclidean(1).unwrap();
        let m = AtomicMeasure::new(g, vec![Point(vec![-1.0]), Point(vec![1.0])], vec![1.0, 1.0], Provenance::Explicit)
            .unwrap();
        let s = m.build_shells(&[0.0]).unwrap();
        assert_eq!(s.shells.len(), 1);
        assert_eq!(s.shells[0].radius, 1.0);
        assert_eq!(s.shells[0].atoms, vec![0, 1]);

        let g = Geometry::torus(vec![2.0]).unwrap();
        let m = AtomicMeasure::new(g, vec![Point(vec![0.5]), Point(vec![1.5])], vec![1.0, 1.0], Provenance::Explicit)
            .unwrap();
        let s = m.build_shells(&[0.0]).unwrap();
        assert_eq!(s.shells.len(), 1);
        assert_relative_eq!(s.shells[0].radius, 0.5);
    }

    #[test]
    fn shells_sorted_distances() {
        let g = Geometry::euclidean(1).unwrap();
        let m = AtomicMeasure::new(g, vec![Point(vec![0.3]), Point(vec![0.9])], vec![1.0, 1.0], Provenance::Explicit)
            .unwrap();
        let s = m.build_shells(&[0.0]).unwrap();
        assert_eq!(s.shells.iter().map(|s| s.atoms.clone()).collect::<Vec<_>>(), vec![vec![0], vec![1]]);
        assert_eq!(s.cumulative, vec![1.0, 2.0]);
    }

    #[test]
    fn translate_moves_atoms_backwards() {
        let g = Geometry::euclidean(1).unwrap();
        let m = AtomicMeasure::new(g, vec![Point(vec![1.0])], vec![2.0], Provenance::Explicit).unwrap();
        let t = m.translate(&[1.0]).unwrap();
        assert_eq!(t.position(0), &[0.0]);
        assert_eq!(t.weight(0), 2.0);
        assert_eq!(m.translate(&[0.0]).unwrap().coords(), m.coords());

        let g = Geometry::torus(vec![10.0]).unwrap();
        let m = AtomicMeasure::new(g, vec![Point(vec![1.0])], vec![1.0], Provenance::Explicit).unwrap();
        assert_eq!(m.translate(&[3.0]).unwrap().position(0), &[8.0]);
    }
}
