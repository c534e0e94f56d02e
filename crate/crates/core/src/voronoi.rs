//! Voronoi transport kernels of a measure `psi`.
//!
//! A point `x` sends its unit mass uniformly onto the smallest closed ball
//! around `x` of `psi`-mass at least 1, splitting the boundary sphere by a
//! constant. For unit atoms the territories are the classical Voronoi cells.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{AtomicMeasure, Closure};
use crate::scalar::Real;

/// The Voronoi kernel row of one query point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VoronoiRow<S> {
    /// `s(x)`; `+inf` when no ball ever exceeds unit mass.
    pub radius: S,
    /// Value on the boundary shell.
    pub boundary_constant: S,
    /// `(atom, v(x, atom))` for every atom with `v > 0`, ascending.
    pub values: Vec<(usize, S)>,
}

fn require_unit_mass<S: Real>(psi: &AtomicMeasure<S>) -> Result<()> {
    let total = psi.total_mass();
    if total < S::one() - psi.tolerances().mass {
        return Err(Error::Precondition(format!("psi has total mass {total} < 1")));
    }
    Ok(())
}

/// The full kernel row `v(x, .)`.
pub fn voronoi_row<S: Real>(psi: &AtomicMeasure<S>, x: &[S]) -> Result<VoronoiRow<S>> {
    require_unit_mass(psi)?;
    let shells = psi.build_shells(x)?;
    let tol = psi.tolerances().mass;
    let mut values = Vec::new();
    let (radius, boundary_constant) = match shells.first_exceeding(S::one(), tol) {
        None => {
            values.extend((0..psi.len()).map(|j| (j, S::one())));
            (S::infinity(), S::one())
        }
        Some(k) => {
            let interior = if k == 0 { S::zero() } else { shells.cumulative[k - 1] };
            let shell = &shells.shells[k];
            let room = S::one() - interior;
            let c = if room <= tol { S::zero() } else { (room / shell.mass).min(S::one()) };
            for s in &shells.shells[..k] {
                values.extend(s.atoms.iter().map(|&j| (j, S::one())));
            }
            if c > S::zero() {
                values.extend(shell.atoms.iter().map(|&j| (j, c)));
            }
            (shell.radius, c)
        }
    };
    values.sort_by_key(|e| e.0);
    Ok(VoronoiRow { radius, boundary_constant, values })
}

/// `s(x) = sup { s : psi(B(x, s)) <= 1 }`.
pub fn voronoi_radius<S: Real>(psi: &AtomicMeasure<S>, x: &[S]) -> Result<S> {
    Ok(voronoi_row(psi, x)?.radius)
}

/// `v(x, xi_j)`.
pub fn voronoi_density<S: Real>(psi: &AtomicMeasure<S>, x: &[S], center: usize) -> Result<S> {
    check_center(psi, center)?;
    let row = voronoi_row(psi, x)?;
    Ok(row.values.binary_search_by_key(&center, |e| e.0).map_or(S::zero(), |k| row.values[k].1))
}

fn check_center<S: Real>(psi: &AtomicMeasure<S>, center: usize) -> Result<()> {
    if center >= psi.len() {
        return Err(Error::Precondition(format!("center {center} out of range")));
    }
    Ok(())
}

/// Membership of `x` in the territory of `xi_j`, by comparing the open and
/// closed balls of radius `|x - xi_j|` against unit mass.
pub fn in_territory<S: Real>(psi: &AtomicMeasure<S>, x: &[S], center: usize) -> Result<bool> {
    check_center(psi, center)?;
    require_unit_mass(psi)?;
    let mut q = x.to_vec();
    psi.geometry().check(&q)?;
    psi.geometry().canonicalize(&mut q);
    let rho = psi.geometry().dist(&q, psi.position(center));
    let tol = psi.tolerances().mass;
    let open = psi.ball_mass(&q, rho, Closure::Open)?;
    if open < S::one() - tol {
        return Ok(true);
    }
    let closed = psi.ball_mass(&q, rho, Closure::Closed)?;
    Ok(closed <= S::one() + tol)
}

#[derive(Clone, Debug, Serialize)]
pub struct TerritoryDiagnostics<S> {
    pub center: usize,
    pub rays: usize,
    /// Membership along every ray is an initial segment.
    pub star_shaped: bool,
    /// Every ray leaves the territory within the search range.
    pub bounded: bool,
    /// Largest finite ray extent.
    pub max_extent: S,
    /// Search range along each ray.
    pub search_range: S,
    /// Midpoints of sampled members stay members; only when requested.
    pub convex: Option<bool>,
    /// Boundary point of every bounded ray (`None` for unbounded rays).
    pub boundary: Vec<Option<Vec<S>>>,
}

#[derive(Clone, Debug)]
pub struct DiagnosticsOptions<S> {
    pub rays: usize,
    /// Samples per ray before bisection.
    pub samples: usize,
    /// Search range along rays; defaults to half the smallest period on a
    /// torus and twice the diameter of the support otherwise.
    pub range: Option<S>,
    pub check_convexity: bool,
    pub seed: u64,
}

impl<S: Real> DiagnosticsOptions<S> {
    /// 360 rays in the plane, 1000 directions in space.
    pub fn for_dim(d: usize) -> Self {
        Self { rays: if d >= 3 { 1000 } else { 360 }, samples: 200, range: None, check_convexity: false, seed: 0 }
    }
}

/// Unit directions: both signs in 1D, equally spaced angles in 2D, a
/// Fibonacci sphere in 3D and Gaussian samples above.
pub fn ray_directions<S: Real>(d: usize, count: usize, seed: u64) -> Vec<Vec<S>> {
    match d {
        1 => vec![vec![S::one()], vec![-S::one()]],
        2 => (0..count)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                vec![S::of(t.cos()), S::of(t.sin())]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * k as f64;
                    vec![S::of(r * t.cos()), S::of(r * t.sin()), S::of(z)]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| S::of(x / n)).collect()
                })
                .collect()
        }
    }
}

fn default_range<S: Real>(psi: &AtomicMeasure<S>) -> S {
    if let Some(p) = psi.geometry().period() {
        return p.iter().copied().fold(S::infinity(), S::min) * S::of(0.5);
    }
    let d = psi.dim();
    let mut diam = S::zero();
    for k in 0..d {
        let (lo, hi) = (0..psi.len())
            .map(|i| psi.position(i)[k])
            .fold((S::infinity(), S::neg_infinity()), |(lo, hi), x| (lo.min(x), hi.max(x)));
        diam += (hi - lo) * (hi - lo);
    }
    (S::of(2.0) * diam.sqrt()).max(S::one())
}

/// Ray-sampling star-shape and boundedness diagnostics for one territory.
pub fn territory_diagnostics<S: Real>(
    psi: &AtomicMeasure<S>,
    center: usize,
    opts: &DiagnosticsOptions<S>,
) -> Result<TerritoryDiagnostics<S>> {
    check_center(psi, center)?;
    require_unit_mass(psi)?;
    let geom = psi.geometry();
    let xi = psi.position(center).to_vec();
    let range = opts.range.unwrap_or_else(|| default_range(psi));
    let samples = opts.samples.max(2);
    let local = |u: &[S], t: S| u.iter().map(|&c| c * t).collect::<Vec<_>>();
    let at = |u: &[S], t: S| geom.offset(&xi, &local(u, t));
    let member = |u: &[S], t: S| in_territory(psi, &at(u, t), center);

    let dirs = ray_directions::<S>(psi.dim(), opts.rays, opts.seed);
    let mut star_shaped = true;
    let mut bounded = true;
    let mut max_extent = S::zero();
    let mut boundary = Vec::with_capacity(dirs.len());
    // Members as offsets from the center.
    let mut inside_samples: Vec<Vec<S>> = Vec::new();
    let step = range / S::of(samples as f64);
    for u in &dirs {
        let mut last_in = S::zero();
        let mut first_out = None;
        for k in 1..=samples {
            let t = step * S::of(k as f64);
            if member(u, t)? {
                if first_out.is_some() {
                    star_shaped = false;
                } else {
                    last_in = t;
                    if opts.check_convexity && k % 8 == 0 {
                        inside_samples.push(local(u, t));
                    }
                }
            } else if first_out.is_none() {
                first_out = Some(t);
            }
        }
        match first_out {
            None => {
                bounded = false;
                boundary.push(None);
            }
            Some(mut hi) => {
                let mut lo = last_in;
                for _ in 0..40 {
                    let mid = (lo + hi) * S::of(0.5);
                    if member(u, mid)? {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                max_extent = max_extent.max(lo);
                boundary.push(Some(at(u, lo)));
                if opts.check_convexity {
                    inside_samples.push(local(u, lo * S::of(0.999)));
                }
            }
        }
    }
    let convex = if opts.check_convexity {
        let mut ok = true;
        'outer: for (a, p) in inside_samples.iter().enumerate() {
            for q in inside_samples.iter().skip(a + 1).step_by(7) {
                // Midpoint in the chart around the center.
                let mid: Vec<S> = p.iter().zip(q).map(|(&a, &b)| (a + b) * S::of(0.5)).collect();
                if !in_territory(psi, &geom.offset(&xi, &mid), center)? {
                    ok = false;
                    break 'outer;
                }
            }
        }
        Some(ok)
    } else {
        None
    };
    Ok(TerritoryDiagnostics {
        center,
        rays: dirs.len(),
        star_shaped,
        bounded,
        max_extent,
        search_range: range,
        convex,
        boundary,
    })
}

/// Exact classical Voronoi cell of a planar atom (counting-measure case),
/// clipped to the axis-aligned box `[lo, hi]`. On a torus the box defaults to
/// one period around the atom and periodic images are used.
pub fn voronoi_polygon<S: Real>(psi: &AtomicMeasure<S>, center: usize, bbox: Option<([S; 2], [S; 2])>) -> Result<Vec<[S; 2]>> {
    check_center(psi, center)?;
    if psi.dim() != 2 {
        return Err(Error::Unsupported("exact cells are only drawn in the plane".into()));
    }
    let p = [psi.position(center)[0], psi.position(center)[1]];
    let mut others: Vec<[S; 2]> = Vec::new();
    let (lo, hi) = match psi.geometry().period() {
        Some(per) => {
            let half = [per[0] * S::of(0.5), per[1] * S::of(0.5)];
            for k in 0..psi.len() {
                let q = psi.position(k);
                for a in -1i32..=1 {
                    for b in -1i32..=1 {
                        if k == center && a == 0 && b == 0 {
                            continue;
                        }
                        others.push([q[0] + S::of(a as f64) * per[0], q[1] + S::of(b as f64) * per[1]]);
                    }
                }
            }
            bbox.unwrap_or(([p[0] - half[0], p[1] - half[1]], [p[0] + half[0], p[1] + half[1]]))
        }
        None => {
            others.extend((0..psi.len()).filter(|&k| k != center).map(|k| [psi.position(k)[0], psi.position(k)[1]]));
            bbox.unwrap_or_else(|| {
                let pad = default_range(psi);
                let (mut lo, mut hi) = ([p[0] - pad, p[1] - pad], [p[0] + pad, p[1] + pad]);
                for q in &others {
                    for a in 0..2 {
                        lo[a] = lo[a].min(q[a] - pad);
                        hi[a] = hi[a].max(q[a] + pad);
                    }
                }
                (lo, hi)
            })
        }
    };
    let mut poly = vec![[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    for q in others {
        // Keep points closer to p than to q: n . x <= c.
        let n = [q[0] - p[0], q[1] - p[1]];
        let c = (q[0] * q[0] + q[1] * q[1] - p[0] * p[0] - p[1] * p[1]) * S::of(0.5);
        poly = clip(&poly, n, c);
        if poly.is_empty() {
            break;
        }
    }
    Ok(poly)
}

fn clip<S: Real>(poly: &[[S; 2]], n: [S; 2], c: S) -> Vec<[S; 2]> {
    let side = |v: &[S; 2]| n[0] * v[0] + n[1] * v[1] - c;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for k in 0..poly.len() {
        let a = poly[k];
        let b = poly[(k + 1) % poly.len()];
        let (sa, sb) = (side(&a), side(&b));
        if sa <= S::zero() {
            out.push(a);
        }
        if (sa < S::zero()) != (sb < S::zero()) && sa != sb {
            let t = sa / (sa - sb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Geometry, Point};
    use crate::measures::Provenance;
    use approx::assert_relative_eq;

    fn integers() -> AtomicMeasure<f64> {
        let g = Geometry::euclidean(1).unwrap();
        let pts: Vec<Point<f64>> = (-20..=20).map(|k| Point(vec![k as f64])).collect();
        let n = pts.len();
        AtomicMeasure::new(g, pts, vec![1.0; n], Provenance::Explicit).unwrap()
    }

    fn index_of(m: &AtomicMeasure<f64>, x: f64) -> usize {
        (0..m.len()).find(|&k| m.position(k)[0] == x).unwrap()
    }

    #[test]
    fn radius_on_the_integers() {
        let z = integers();
        assert_relative_eq!(voronoi_radius(&z, &[0.6]).unwrap(), 0.6, epsilon = 1e-12);
        assert_relative_eq!(voronoi_radius(&z, &[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn single_unit_atom_never_exceeds() {
        let g = Geometry::euclidean(1).unwrap();
        let one = AtomicMeasure::new(g, vec![Point(vec![3.0])], vec![1.0], Provenance::Explicit).unwrap();
        assert_eq!(voronoi_radius(&one, &[-7.0]).unwrap(), f64::INFINITY);
        assert_eq!(voronoi_density(&one, &[-7.0], 0).unwrap(), 1.0);
        let light = AtomicMeasure::new(Geometry::euclidean(1).unwrap(), vec![Point(vec![3.0])], vec![0.5], Provenance::Explicit)
            .unwrap();
        assert!(voronoi_radius(&light, &[0.0]).is_err());
    }

    #[test]
    fn densities_on_the_integers() {
        let z = integers();
        let (a0, a1) = (index_of(&z, 0.0), index_of(&z, 1.0));
        assert_relative_eq!(voronoi_density(&z, &[0.5], a0).unwrap(), 0.5);
        assert_relative_eq!(voronoi_density(&z, &[0.5], a1).unwrap(), 0.5);
        assert_eq!(voronoi_density(&z, &[0.4], a0).unwrap(), 1.0);
        assert_eq!(voronoi_density(&z, &[0.6], a0).unwrap(), 0.0);
        assert!(in_territory(&z, &[0.5], a0).unwrap());
        assert!(!in_territory(&z, &[0.6], a0).unwrap());
        assert!(in_territory(&z, &[0.0], a0).unwrap());
        let row = voronoi_row(&z, &[0.5]).unwrap();
        assert_relative_eq!(row.values.iter().map(|e| e.1).sum::<f64>(), 1.0);
    }

    fn triangle() -> AtomicMeasure<f64> {
        let g = Geometry::euclidean(2).unwrap();
        let pts = (0..3)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
                Point(vec![t.cos(), t.sin()])
            })
            .collect();
        AtomicMeasure::new(g, pts, vec![0.5; 3], Provenance::Explicit).unwrap()
    }

    #[test]
    fn half_weight_triangle_is_star_shaped_not_convex() {
        let psi = triangle();
        let opts = DiagnosticsOptions { check_convexity: true, ..DiagnosticsOptions::for_dim(2) };
        let d = territory_diagnostics(&psi, 0, &opts).unwrap();
        assert!(d.star_shaped);
        assert!(!d.bounded);
        assert_eq!(d.convex, Some(false));
        // Points behind the opposite edge, far from vertex 0, are outside.
        assert!(!in_territory(&psi, &[-5.0, 0.0], 0).unwrap());
        assert!(in_territory(&psi, &[5.0, 0.0], 0).unwrap());
    }

    #[test]
    fn two_atoms_have_unbounded_cells() {
        let g = Geometry::euclidean(2).unwrap();
        let psi = AtomicMeasure::new(g, vec![Point(vec![0.0, 0.0]), Point(vec![1.0, 0.0])], vec![1.0, 1.0], Provenance::Explicit)
            .unwrap();
        let d = territory_diagnostics(&psi, 0, &DiagnosticsOptions::for_dim(2)).unwrap();
        assert!(d.star_shaped);
        assert!(!d.bounded);
    }

    #[test]
    fn square_lattice_cells() {
        let g = Geometry::torus(vec![4.0, 4.0]).unwrap();
        let pts = (0..16).map(|k| Point(vec![(k / 4) as f64 + 0.5, (k % 4) as f64 + 0.5])).collect();
        let psi = AtomicMeasure::new(g, pts, vec![1.0; 16], Provenance::Explicit).unwrap();
        let d = territory_diagnostics(&psi, 5, &DiagnosticsOptions { check_convexity: true, ..DiagnosticsOptions::for_dim(2) })
            .unwrap();
        assert!(d.star_shaped && d.bounded);
        assert_eq!(d.convex, Some(true));
        assert!((d.max_extent - 0.5f64.sqrt()).abs() < 1e-6, "{}", d.max_extent);
        let poly = voronoi_polygon(&psi, 5, None).unwrap();
        let area: f64 = (0..poly.len())
            .map(|k| {
                let (a, b) = (poly[k], poly[(k + 1) % poly.len()]);
                a[0] * b[1] - a[1] * b[0]
            })
            .sum::<f64>()
            / 2.0;
        assert_relative_eq!(area.abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn directions_are_unit() {
        for d in [1, 2, 3, 5] {
            for u in ray_directions::<f64>(d, 50, 1) {
                assert_relative_eq!(u.iter().map(|x| x * x).sum::<f64>(), 1.0, epsilon = 1e-12);
            }
        }
    }
}
