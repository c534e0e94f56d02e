use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Geometry, Point};
use crate::measures::index::NeighborIndex;
use crate::measures::AtomicMeasure;
use crate::scalar::{Real, Tolerances};

/// Upper bound on a density value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    /// `f <= 1` everywhere.
    #[default]
    DensityCap,
    /// `f(., j) <= 1 / w_j`, for discrete `psi` with arbitrary weights.
    CountingCap,
}

/// One side of a transport problem: positions, weights and per-atom caps.
///
/// Atoms past `atoms` are zero-weight probes.
pub(crate) struct Side<S> {
    pub coords: Vec<S>,
    pub weights: Vec<S>,
    pub cap: Vec<S>,
    pub atoms: usize,
}

impl<S: Real> Side<S> {
    fn len(&self) -> usize {
        self.weights.len()
    }
}

/// A solver instance: sites propose to centers.
pub struct Instance<S> {
    pub(crate) geometry: Geometry<S>,
    pub(crate) phi: Arc<AtomicMeasure<S>>,
    pub(crate) psi: Arc<AtomicMeasure<S>>,
    pub(crate) sites: Side<S>,
    pub(crate) centers: Side<S>,
    pub(crate) center_index: NeighborIndex<S>,
    pub(crate) tol: Tolerances<S>,
    pub(crate) mode: ConstraintMode,
    pub(crate) initial_radius: S,
}

impl<S: Real> Instance<S> {
    pub fn new(phi: Arc<AtomicMeasure<S>>, psi: Arc<AtomicMeasure<S>>, mode: ConstraintMode) -> Result<Self> {
        Self::with_probe_sites(phi, psi, mode, &[])
    }

    /// Like [`Instance::new`], with extra zero-weight sites appended after the
    /// atoms of `phi`. Probes never affect the iteration; their rows give the
    /// stage-limit functions at points outside the support of `phi`.
    pub fn with_probe_sites(
        phi: Arc<AtomicMeasure<S>>,
        psi: Arc<AtomicMeasure<S>>,
        mode: ConstraintMode,
        probes: &[Point<S>],
    ) -> Result<Self> {
        if phi.geometry() != psi.geometry() {
            return Err(Error::InvalidGeometry("phi and psi live on different geometries".into()));
        }
        if phi.is_empty() || psi.is_empty() {
            return Err(Error::Precondition("both measures need at least one atom".into()));
        }
        let geometry = phi.geometry().clone();
        let mut site_coords = phi.coords().to_vec();
        let mut site_weights = phi.weights().to_vec();
        for p in probes {
            let p = geometry.canonical_point(p.clone())?;
            site_coords.extend_from_slice(&p.0);
            site_weights.push(S::zero());
        }
        let (site_cap, center_cap) = match mode {
            ConstraintMode::DensityCap => (vec![S::one(); site_weights.len()], vec![S::one(); psi.len()]),
            ConstraintMode::CountingCap => {
                (vec![S::one(); site_weights.len()], psi.weights().iter().map(|&w| S::one() / w).collect())
            }
        };
        let sites = Side { coords: site_coords, weights: site_weights, cap: site_cap, atoms: phi.len() };
        let centers =
            Side { coords: psi.coords().to_vec(), weights: psi.weights().to_vec(), cap: center_cap, atoms: psi.len() };
        Ok(Self::assemble(geometry, phi, psi, sites, centers, mode))
    }

    /// The same problem with centers proposing, cap rule carried along.
    pub(crate) fn swapped(&self) -> Self {
        let sites = Side {
            coords: self.psi.coords().to_vec(),
            weights: self.psi.weights().to_vec(),
            cap: self.centers.cap.clone(),
            atoms: self.psi.len(),
        };
        let n = self.phi.len();
        let centers = Side {
            coords: self.phi.coords().to_vec(),
            weights: self.phi.weights().to_vec(),
            cap: self.sites.cap[..n].to_vec(),
            atoms: n,
        };
        Self::assemble(self.geometry.clone(), self.psi.clone(), self.phi.clone(), sites, centers, self.mode)
    }

    fn assemble(
        geometry: Geometry<S>,
        phi: Arc<AtomicMeasure<S>>,
        psi: Arc<AtomicMeasure<S>>,
        sites: Side<S>,
        centers: Side<S>,
        mode: ConstraintMode,
    ) -> Self {
        let center_index = NeighborIndex::build(&geometry, &centers.coords);
        let tol = Tolerances::for_magnitude(phi.magnitude().max(psi.magnitude()));
        let initial_radius = initial_radius(&geometry, &centers);
        Self { geometry, phi, psi, sites, centers, center_index, tol, mode, initial_radius }
    }

    pub fn geometry(&self) -> &Geometry<S> {
        &self.geometry
    }

    pub fn phi(&self) -> &Arc<AtomicMeasure<S>> {
        &self.phi
    }

    pub fn psi(&self) -> &Arc<AtomicMeasure<S>> {
        &self.psi
    }

    pub fn tolerances(&self) -> Tolerances<S> {
        self.tol
    }

    pub fn mode(&self) -> ConstraintMode {
        self.mode
    }

    /// Number of site rows, probes included.
    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub fn probe_count(&self) -> usize {
        self.sites.len() - self.sites.atoms
    }

    pub fn center_count(&self) -> usize {
        self.centers.len()
    }

    pub(crate) fn site_position(&self, i: usize) -> &[S] {
        let d = self.geometry.dim();
        &self.sites.coords[i * d..(i + 1) * d]
    }

    #[inline]
    pub(crate) fn cap(&self, i: usize, j: usize) -> S {
        self.sites.cap[i] * self.centers.cap[j]
    }
}

/// Radius whose ball is expected to hold about twice the unit budget of
/// center mass.
fn initial_radius<S: Real>(geometry: &Geometry<S>, centers: &Side<S>) -> S {
    let d = geometry.dim();
    let mass: S = centers.weights.iter().copied().sum();
    let volume = geometry.volume().unwrap_or_else(|| {
        let mut lo = vec![S::infinity(); d];
        let mut hi = vec![S::neg_infinity(); d];
        for p in centers.coords.chunks_exact(d) {
            for k in 0..d {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let ext: Vec<S> = lo.iter().zip(&hi).map(|(&l, &h)| h - l).collect();
        let scale = ext.iter().copied().fold(S::zero(), S::max).max(S::one());
        ext.iter().map(|&e| e.max(scale * S::of(1e-3))).fold(S::one(), |a, b| a * b)
    });
    let half_d = S::of(d as f64 / 2.0);
    let unit_ball = S::PI().powf(half_d) / S::of(gamma_half_int(d + 2));
    let r = (S::of(2.0) * volume / (mass * unit_ball)).powf(S::one() / S::of(d as f64));
    if r.is_finite() && r > S::zero() {
        r
    } else {
        S::one()
    }
}

/// `Gamma(k / 2)` for positive integer `k`.
fn gamma_half_int(k: usize) -> f64 {
    if k % 2 == 0 {
        (1..k / 2).map(|x| x as f64).product()
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut x = 0.5;
        while x < k as f64 / 2.0 - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    }
}
