//! Does a closed ball sit inside the interior of a convex hull?
//!
//! `B(a, r) ⊂ int conv(A)` iff every supporting half-space `{x : n·x ≤ b}` of
//! the hull satisfies `n·a + r < b`. In dimension at most three the facets are
//! enumerated exactly; above that the support function is minimized over
//! sampled directions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{Geometry, Point};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HullMethod {
    Exact,
    Sampled { directions: usize },
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HullContainment<S> {
    pub contained: bool,
    /// Smallest distance from the ball center to a hull facet minus `r`;
    /// negative when the center lies outside or the hull is degenerate.
    pub margin: S,
    pub method: HullMethod,
}

const SAMPLED_DIRECTIONS: usize = 20_000;

pub fn ball_contained_in_hull_interior<S: Real>(
    geom: &Geometry<S>,
    points: &[Point<S>],
    a: &Point<S>,
    r: S,
) -> Result<HullContainment<S>> {
    if geom.is_torus() {
        return Err(Error::Unsupported("convex hull criterion needs Euclidean geometry".into()));
    }
    if points.is_empty() {
        return Err(Error::Precondition("point set must be nonempty".into()));
    }
    if !(r > S::zero()) {
        return Err(Error::Precondition("radius must be positive".into()));
    }
    geom.check(&a.0)?;
    for p in points {
        geom.check(&p.0)?;
    }
    let d = geom.dim();
    let (depth, method) = match d {
        1 => (depth_1d(points, a), HullMethod::Exact),
        2 => (depth_2d(points, a), HullMethod::Exact),
        3 => (depth_3d(points, a), HullMethod::Exact),
        _ => (
            sampled_depth(points, a, SAMPLED_DIRECTIONS, 0x5eed),
            HullMethod::Sampled { directions: SAMPLED_DIRECTIONS },
        ),
    };
    let margin = depth - r;
    Ok(HullContainment { contained: margin > S::zero(), margin, method })
}

/// Signed distance from `a` to the hull boundary (positive inside).
/// Degenerate hulls have empty interior and report `-inf`.
fn depth_1d<S: Real>(points: &[Point<S>], a: &Point<S>) -> S {
    let lo = points.iter().map(|p| p.0[0]).fold(S::infinity(), S::min);
    let hi = points.iter().map(|p| p.0[0]).fold(S::neg_infinity(), S::max);
    if !(hi > lo) {
        return S::neg_infinity();
    }
    (a.0[0] - lo).min(hi - a.0[0])
}

fn cross<S: Real>(o: &[S], a: &[S], b: &[S]) -> S {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise hull vertices (Andrew's monotone chain).
fn hull_2d<S: Real>(points: &[Point<S>]) -> Vec<[S; 2]> {
    let mut pts: Vec<[S; 2]> = points.iter().map(|p| [p.0[0], p.0[1]]).collect();
    pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap().then(a[1].partial_cmp(&b[1]).unwrap()));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[S; 2]> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= S::zero() {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<[S; 2]> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= S::zero() {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn depth_2d<S: Real>(points: &[Point<S>], a: &Point<S>) -> S {
    let hull = hull_2d(points);
    if hull.len() < 3 {
        return S::neg_infinity();
    }
    let mut depth = S::infinity();
    for k in 0..hull.len() {
        let p = hull[k];
        let q = hull[(k + 1) % hull.len()];
        let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
        let len = (dx * dx + dy * dy).sqrt();
        // Outward normal of a counter-clockwise edge.
        let (nx, ny) = (dy / len, -dx / len);
        let dist = nx * (p[0] - a.0[0]) + ny * (p[1] - a.0[1]);
        depth = depth.min(dist);
    }
    depth
}

fn depth_3d<S: Real>(points: &[Point<S>], a: &Point<S>) -> S {
    let pts: Vec<[S; 3]> = points.iter().map(|p| [p.0[0], p.0[1], p.0[2]]).collect();
    let n = pts.len();
    let scale = pts
        .iter()
        .flat_map(|p| p.iter().map(|x| x.abs()))
        .fold(S::one(), S::max);
    let tol = S::epsilon() * S::of(1e3) * scale;
    let mut depth = S::infinity();
    let mut found = false;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let u = sub3(&pts[j], &pts[i]);
                let v = sub3(&pts[k], &pts[i]);
                let mut nrm = [
                    u[1] * v[2] - u[2] * v[1],
                    u[2] * v[0] - u[0] * v[2],
                    u[0] * v[1] - u[1] * v[0],
                ];
                let len = dot3(&nrm, &nrm).sqrt();
                if !(len > tol * scale) {
                    continue;
                }
                for c in nrm.iter_mut() {
                    *c /= len;
                }
                let b = dot3(&nrm, &pts[i]);
                let (mut pos, mut neg) = (false, false);
                for p in &pts {
                    let s = dot3(&nrm, p) - b;
                    pos |= s > tol;
                    neg |= s < -tol;
                }
                if pos && neg {
                    continue;
                }
                if pos {
                    for c in nrm.iter_mut() {
                        *c = -*c;
                    }
                }
                // Coplanar point sets (neither side populated) have no interior.
                if !pos && !neg {
                    return S::neg_infinity();
                }
                found = true;
                let b = dot3(&nrm, &pts[i]);
                depth = depth.min(b - dot3(&nrm, &[a.0[0], a.0[1], a.0[2]]));
            }
        }
    }
    if found {
        depth
    } else {
        S::neg_infinity()
    }
}

fn sub3<S: Real>(a: &[S; 3], b: &[S; 3]) -> [S; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3<S: Real>(a: &[S; 3], b: &[S; 3]) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Minimum over sampled unit directions `v` of `max_p v·(p - a)`.
///
/// This over-estimates the true depth when the minimizing direction is missed.
pub(crate) fn sampled_depth<S: Real>(points: &[Point<S>], a: &Point<S>, directions: usize, seed: u64) -> S {
    let d = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = vec![S::zero(); d];
    let mut depth = S::infinity();
    for _ in 0..directions {
        let mut norm = S::zero();
        for c in v.iter_mut() {
            let x: f64 = StandardNormal.sample(&mut rng);
            *c = S::of(x);
            norm += *c * *c;
        }
        let norm = norm.sqrt();
        if !(norm > S::zero()) {
            continue;
        }
        let support = points
            .iter()
            .map(|p| p.0.iter().zip(&a.0).zip(&v).map(|((&x, &y), &c)| (x - y) * c).sum::<S>() / norm)
            .fold(S::neg_infinity(), S::max);
        depth = depth.min(support);
    }
    depth
}
