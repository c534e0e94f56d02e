//! Verification layer for constrained densities.

mod allocation;
mod compare;
mod stability;
mod validate;

use serde::Serialize;

pub use allocation::{check_stable_allocation, extract_allocation, Allocation, AllocationReport, AllocationPair};
pub use compare::{
    check_monotonicity, check_optimality, monotonicity_setup, uniqueness_certificate, MonotonicityReport,
    MonotonicitySetup, OptimalityReport, SiteRef, UniquenessReport,
};
pub use stability::{check_stable, pair_desire, sated_or_exhausted, CenterDesire, SatedOrExhausted, SiteDesire, StabilityReport, UnstablePair};
pub use validate::{check_balanced, validate_constrained, BalanceReport, ConstraintReport, Violation, ViolationKind};

use crate::measures::group_shells;
use crate::scalar::Real;
use crate::solver::ConstrainedDensity;

/// `(distance, mass)` pairs of a site row, `mass = f(i, j) w_j`.
pub(crate) fn site_events<S: Real>(f: &ConstrainedDensity<S>, site: usize) -> Vec<(S, S)> {
    let (cs, vs) = f.row(site);
    cs.iter().zip(vs).map(|(&j, &v)| (f.dist(site, j as usize), v * f.psi().weight(j as usize))).collect()
}

/// `(distance, mass)` pairs of a center column, `mass = f(i, j) u_i`.
pub(crate) fn center_events<S: Real>(f: &ConstrainedDensity<S>, center: usize) -> Vec<(S, S)> {
    let (is, vs) = f.column(center);
    is.iter().zip(vs).map(|(&i, &v)| (f.dist(i as usize, center), v * f.phi().weight(i as usize))).collect()
}

fn profile_at<S: Real>(events: &[(S, S)], t: S, shell_tol: S) -> S {
    if t == S::infinity() {
        return events.iter().map(|e| e.1).sum();
    }
    events.iter().filter(|e| e.0 <= t + shell_tol).map(|e| e.1).sum()
}

/// `g_i(t) = sum over centers within distance t of f(i, j) w_j`.
pub fn g_profile<S: Real>(f: &ConstrainedDensity<S>, site: usize, t: S) -> S {
    profile_at(&site_events(f, site), t, f.tolerances().shell)
}

/// `h_j(t) = sum over sites within distance t of f(i, j) u_i`.
pub fn h_profile<S: Real>(f: &ConstrainedDensity<S>, center: usize, t: S) -> S {
    profile_at(&center_events(f, center), t, f.tolerances().shell)
}

/// The whole step function `t -> g_i(t)` as `(jump radius, value after jump)`.
pub fn g_steps<S: Real>(f: &ConstrainedDensity<S>, site: usize) -> Vec<(S, S)> {
    steps(site_events(f, site), f.tolerances().shell)
}

pub fn h_steps<S: Real>(f: &ConstrainedDensity<S>, center: usize) -> Vec<(S, S)> {
    steps(center_events(f, center), f.tolerances().shell)
}

fn steps<S: Real>(mut events: Vec<(S, S)>, shell_tol: S) -> Vec<(S, S)> {
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut total = S::zero();
    group_shells(&events, |e| e.0, shell_tol)
        .into_iter()
        .map(|g| {
            total += events[g.clone()].iter().map(|e| e.1).sum::<S>();
            (events[g.start].0, total)
        })
        .collect()
}

/// Largest value of `a(t) - b(t)` over all jump radii of either step
/// function, where `a` and `b` are given by their `(distance, mass)` events.
pub(crate) fn max_profile_excess<S: Real>(a: &[(S, S)], b: &[(S, S)], shell_tol: S) -> S {
    let mut events: Vec<(S, S)> = a.iter().copied().chain(b.iter().map(|&(d, m)| (d, -m))).collect();
    events.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let mut diff = S::zero();
    let mut worst = S::zero();
    for g in group_shells(&events, |e| e.0, shell_tol) {
        diff += events[g].iter().map(|e| e.1).sum::<S>();
        worst = worst.max(diff);
    }
    worst
}

/// Both sides of the double-counting identity
/// `sum_i u_i g_i(t) = sum_j w_j h_j(t)`.
pub fn mass_transport_identity<S: Real>(f: &ConstrainedDensity<S>, t: S) -> (S, S) {
    let shell = f.tolerances().shell;
    let within = |d: S| t == S::infinity() || d <= t + shell;
    let site_side = (0..f.site_count())
        .map(|i| {
            let inner: S = site_events(f, i).iter().filter(|e| within(e.0)).map(|e| e.1).sum();
            f.phi().weight(i) * inner
        })
        .sum();
    let center_side = (0..f.center_count())
        .map(|j| {
            let inner: S = center_events(f, j).iter().filter(|e| within(e.0)).map(|e| e.1).sum();
            f.psi().weight(j) * inner
        })
        .sum();
    (site_side, center_side)
}

/// The kernel `T(i, B) = sum_{j in B} f(i, j) w_j` induced by a density.
pub struct TransportKernelView<'a, S: Real> {
    density: &'a ConstrainedDensity<S>,
}

impl<'a, S: Real> TransportKernelView<'a, S> {
    pub fn new(density: &'a ConstrainedDensity<S>) -> Self {
        Self { density }
    }

    pub fn eval(&self, site: usize, target: impl Fn(usize) -> bool) -> S {
        let (cs, vs) = self.density.row(site);
        cs.iter()
            .zip(vs)
            .filter(|(&j, _)| target(j as usize))
            .map(|(&j, &v)| v * self.density.psi().weight(j as usize))
            .sum()
    }
}

/// `sum_{i in sites} u_i T(i, centers)`.
pub fn kernel_apply<S: Real>(
    f: &ConstrainedDensity<S>,
    sites: impl Fn(usize) -> bool,
    centers: impl Fn(usize) -> bool,
) -> S {
    let view = TransportKernelView::new(f);
    (0..f.site_count()).filter(|&i| sites(i)).map(|i| f.phi().weight(i) * view.eval(i, &centers)).sum()
}

/// Largest distance over which each site sends (each center receives) more
/// than `tol`; zero for idle atoms.
pub fn support_radii<S: Real>(f: &ConstrainedDensity<S>, tol: S) -> (Vec<S>, Vec<S>) {
    let mut site = vec![S::zero(); f.site_count()];
    let mut center = vec![S::zero(); f.center_count()];
    for (i, j, v) in f.entries() {
        if v > tol {
            let d = f.dist(i, j);
            site[i] = site[i].max(d);
            center[j] = center[j].max(d);
        }
    }
    (site, center)
}

#[derive(Clone, Debug, Serialize)]
pub struct TerritoryReport<S> {
    pub max_site_radius: S,
    pub max_center_radius: S,
    /// Smallest half period; `None` in Euclidean mode.
    pub half_period: Option<S>,
    /// Every support radius is at most half the smallest period.
    pub bounded: bool,
}

/// Territory-size diagnostic for torus instances.
pub fn territory_report<S: Real>(f: &ConstrainedDensity<S>, tol: S) -> TerritoryReport<S> {
    let (site, center) = support_radii(f, tol);
    let max_site_radius = site.into_iter().fold(S::zero(), S::max);
    let max_center_radius = center.into_iter().fold(S::zero(), S::max);
    let half_period = f.geometry().period().map(|p| p.iter().copied().fold(S::infinity(), S::min) * S::of(0.5));
    let bounded = half_period.is_none_or(|h| max_site_radius <= h && max_center_radius <= h);
    TerritoryReport { max_site_radius, max_center_radius, half_period, bounded }
}
