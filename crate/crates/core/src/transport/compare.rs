//! Comparisons between densities on related instances.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use super::{center_events, max_profile_excess, site_events};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::measures::AtomicMeasure;
use crate::scalar::Real;
use crate::solver::{ConstrainedDensity, SolveResult};

/// Where a site of the larger measure lives in the site-optimal solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteRef {
    Atom(usize),
    Probe(usize),
}

/// Matched supports of `(phi, psi)` and `(mu, nu)` with `mu >= phi`, `nu <= psi`.
#[derive(Clone, Debug)]
pub struct MonotonicitySetup<S> {
    pub phi: Arc<AtomicMeasure<S>>,
    pub psi: Arc<AtomicMeasure<S>>,
    pub mu: Arc<AtomicMeasure<S>>,
    pub nu: Arc<AtomicMeasure<S>>,
    /// For every atom of `mu`.
    pub sites: Vec<SiteRef>,
    /// For every atom of `psi`, its index in `nu` if present.
    pub centers: Vec<Option<usize>>,
    /// Atoms of `mu` missing from `phi`; pass them as solver probes.
    pub probes: Vec<Point<S>>,
}

fn position_map<S: Real>(m: &AtomicMeasure<S>) -> HashMap<Vec<u64>, usize> {
    (0..m.len())
        .map(|i| (m.position(i).iter().map(|x| (x.to_f64_lossy() + 0.0).to_bits()).collect(), i))
        .collect()
}

fn key<S: Real>(p: &[S]) -> Vec<u64> {
    p.iter().map(|x| (x.to_f64_lossy() + 0.0).to_bits()).collect()
}

/// Check the atomwise domination hypotheses and match the supports.
pub fn monotonicity_setup<S: Real>(
    phi: Arc<AtomicMeasure<S>>,
    psi: Arc<AtomicMeasure<S>>,
    mu: Arc<AtomicMeasure<S>>,
    nu: Arc<AtomicMeasure<S>>,
) -> Result<MonotonicitySetup<S>> {
    let g = phi.geometry();
    if psi.geometry() != g || mu.geometry() != g || nu.geometry() != g {
        return Err(Error::InvalidGeometry("all four measures must share one geometry".into()));
    }
    let in_mu = position_map(&mu);
    for k in 0..phi.len() {
        match in_mu.get(&key(phi.position(k))) {
            Some(&i) if mu.weight(i) >= phi.weight(k) => {}
            _ => return Err(Error::Precondition(format!("mu does not dominate phi at atom {k}"))),
        }
    }
    let in_psi = position_map(&psi);
    for k in 0..nu.len() {
        match in_psi.get(&key(nu.position(k))) {
            Some(&j) if nu.weight(k) <= psi.weight(j) => {}
            _ => return Err(Error::Precondition(format!("nu is not dominated by psi at atom {k}"))),
        }
    }
    let in_phi = position_map(&phi);
    let mut probes = Vec::new();
    let sites = (0..mu.len())
        .map(|i| match in_phi.get(&key(mu.position(i))) {
            Some(&k) => SiteRef::Atom(k),
            None => {
                probes.push(mu.point(i));
                SiteRef::Probe(probes.len() - 1)
            }
        })
        .collect();
    let in_nu = position_map(&nu);
    let centers = (0..psi.len()).map(|j| in_nu.get(&key(psi.position(j))).copied()).collect();
    Ok(MonotonicitySetup { phi, psi, mu, nu, sites, centers, probes })
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport<S> {
    /// Largest `f - f_s` over pairs where the site fully applies.
    pub full_application_excess: S,
    /// Largest `g(f; nu) - g(f_s; psi)` over mu-atoms and radii.
    pub site_profile_excess: S,
    /// Largest `h(f_s; phi) - h(f; mu)` over psi-atoms and radii.
    pub center_profile_excess: S,
    /// psi-atoms missing from nu are skipped in the center comparison.
    pub centers_skipped: usize,
    pub tolerance: S,
    pub holds: bool,
    pub generic_position_assumed: bool,
}

/// Compare a stable density `f` for `(mu, nu)` against the site-optimal
/// solve for `(phi, psi)` computed with `setup.probes` as probe sites.
pub fn check_monotonicity<S: Real>(
    setup: &MonotonicitySetup<S>,
    f: &ConstrainedDensity<S>,
    fs: &SolveResult<S>,
    tol: S,
) -> Result<MonotonicityReport<S>> {
    if f.site_count() != setup.mu.len() || f.center_count() != setup.nu.len() {
        return Err(Error::Precondition("f is not a density for (mu, nu)".into()));
    }
    if fs.density.site_count() != setup.phi.len() || fs.probe_density.rows() != setup.probes.len() {
        return Err(Error::Precondition("f_s was not solved on (phi, psi) with the setup probes".into()));
    }
    let geom = setup.phi.geometry();
    let shell = fs.density.tolerances().shell;
    let nu_of_psi: HashMap<usize, usize> =
        setup.centers.iter().enumerate().filter_map(|(j, k)| k.map(|k| (k, j))).collect();

    // f_s row of a mu-atom, as (psi index, value), and A row for the same.
    let fs_row = |site: SiteRef| -> Vec<(usize, S)> {
        let (cs, vs) = match site {
            SiteRef::Atom(k) => fs.density.row(k),
            SiteRef::Probe(p) => fs.probe_density.row(p),
        };
        cs.iter().zip(vs).map(|(&j, &v)| (j as usize, v)).collect()
    };
    let a_row = |site: SiteRef| -> Vec<(usize, S)> {
        let r = match site {
            SiteRef::Atom(k) => k,
            SiteRef::Probe(p) => setup.phi.len() + p,
        };
        let (cs, vs) = fs.application.row(r);
        cs.iter().zip(vs).map(|(&j, &v)| (j as usize, v)).collect()
    };

    let mut full_application_excess = S::zero();
    let mut site_profile_excess = S::zero();
    for (i, &site) in setup.sites.iter().enumerate() {
        let x = setup.mu.position(i);
        let fs_list = fs_row(site);
        let fs_vals: HashMap<usize, S> = fs_list.iter().copied().collect();
        let (cs, vs) = f.row(i);
        let f_vals: HashMap<usize, S> = cs.iter().zip(vs).map(|(&k, &v)| (nu_of_psi[&(k as usize)], v)).collect();
        for (j, a) in a_row(site) {
            if a >= fs.density.cap(j) {
                let fv = f_vals.get(&j).copied().unwrap_or(S::zero());
                let sv = fs_vals.get(&j).copied().unwrap_or(S::zero());
                full_application_excess = full_application_excess.max(fv - sv);
            }
        }
        let left: Vec<(S, S)> = cs
            .iter()
            .zip(vs)
            .map(|(&k, &v)| (geom.dist(x, setup.nu.position(k as usize)), v * setup.nu.weight(k as usize)))
            .collect();
        let right: Vec<(S, S)> = fs_list
            .iter()
            .map(|&(j, v)| (geom.dist(x, setup.psi.position(j)), v * setup.psi.weight(j)))
            .collect();
        site_profile_excess = site_profile_excess.max(max_profile_excess(&left, &right, shell));
    }

    let mut center_profile_excess = S::zero();
    let mut centers_skipped = 0;
    for (j, k) in setup.centers.iter().enumerate() {
        let Some(k) = *k else {
            centers_skipped += 1;
            continue;
        };
        let xi = setup.psi.position(j);
        let (is, vs) = fs.density.column(j);
        let left: Vec<(S, S)> = is
            .iter()
            .zip(vs)
            .map(|(&i, &v)| (geom.dist(setup.phi.position(i as usize), xi), v * setup.phi.weight(i as usize)))
            .collect();
        let (is, vs) = f.column(k);
        let right: Vec<(S, S)> = is
            .iter()
            .zip(vs)
            .map(|(&i, &v)| (geom.dist(setup.mu.position(i as usize), xi), v * setup.mu.weight(i as usize)))
            .collect();
        center_profile_excess = center_profile_excess.max(max_profile_excess(&left, &right, shell));
    }
    let holds = full_application_excess <= tol && site_profile_excess <= tol && center_profile_excess <= tol;
    Ok(MonotonicityReport {
        full_application_excess,
        site_profile_excess,
        center_profile_excess,
        centers_skipped,
        tolerance: tol,
        holds,
        generic_position_assumed: true,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimalityReport<S> {
    /// `max (g(f_c) - g(f))` and `max (g(f) - g(f_s))` over sites and radii.
    pub site_lower_excess: S,
    pub site_upper_excess: S,
    /// `max (h(f_s) - h(f))` and `max (h(f) - h(f_c))` over centers and radii.
    pub center_lower_excess: S,
    pub center_upper_excess: S,
    pub tolerance: S,
    pub holds: bool,
}

/// The sandwich `g(f_c) <= g(f) <= g(f_s)`, `h(f_s) <= h(f) <= h(f_c)`.
pub fn check_optimality<S: Real>(
    f: &ConstrainedDensity<S>,
    fs: &ConstrainedDensity<S>,
    fc: &ConstrainedDensity<S>,
    tol: S,
) -> OptimalityReport<S> {
    let shell = f.tolerances().shell;
    let mut r = OptimalityReport {
        site_lower_excess: S::zero(),
        site_upper_excess: S::zero(),
        center_lower_excess: S::zero(),
        center_upper_excess: S::zero(),
        tolerance: tol,
        holds: false,
    };
    for i in 0..f.site_count() {
        let (e, s, c) = (site_events(f, i), site_events(fs, i), site_events(fc, i));
        r.site_lower_excess = r.site_lower_excess.max(max_profile_excess(&c, &e, shell));
        r.site_upper_excess = r.site_upper_excess.max(max_profile_excess(&e, &s, shell));
    }
    for j in 0..f.center_count() {
        let (e, s, c) = (center_events(f, j), center_events(fs, j), center_events(fc, j));
        r.center_lower_excess = r.center_lower_excess.max(max_profile_excess(&s, &e, shell));
        r.center_upper_excess = r.center_upper_excess.max(max_profile_excess(&e, &c, shell));
    }
    r.holds = [r.site_lower_excess, r.site_upper_excess, r.center_lower_excess, r.center_upper_excess]
        .iter()
        .all(|&x| x <= tol);
    r
}

#[derive(Clone, Debug, Serialize)]
pub struct UniquenessReport<S> {
    /// Largest `|g(f_s) - g(f_c)|` over sites and radii.
    pub max_profile_gap: S,
    /// Largest `|f_s - f_c|` over all pairs.
    pub max_density_gap: S,
    /// A profile gap of `tol` allows a density gap of `tol / min w_j`.
    pub density_bound: S,
    pub tolerance: S,
    pub certified: bool,
}

/// Agreement of the site profiles of the two extremal densities.
pub fn uniqueness_certificate<S: Real>(
    fs: &ConstrainedDensity<S>,
    fc: &ConstrainedDensity<S>,
    tol: S,
) -> UniquenessReport<S> {
    let shell = fs.tolerances().shell;
    let mut max_profile_gap = S::zero();
    let mut max_density_gap = S::zero();
    for i in 0..fs.site_count() {
        let (a, b) = (site_events(fs, i), site_events(fc, i));
        max_profile_gap = max_profile_gap.max(max_profile_excess(&a, &b, shell)).max(max_profile_excess(&b, &a, shell));
        let (ca, va) = fs.row(i);
        let (cb, vb) = fc.row(i);
        let (mut p, mut q) = (0, 0);
        while p < ca.len() || q < cb.len() {
            let gap = match (ca.get(p), cb.get(q)) {
                (Some(x), Some(y)) if x == y => {
                    p += 1;
                    q += 1;
                    (va[p - 1] - vb[q - 1]).abs()
                }
                (Some(x), Some(y)) if x < y => {
                    p += 1;
                    va[p - 1].abs()
                }
                (Some(_), None) => {
                    p += 1;
                    va[p - 1].abs()
                }
                _ => {
                    q += 1;
                    vb[q - 1].abs()
                }
            };
            max_density_gap = max_density_gap.max(gap);
        }
    }
    let min_w = fs.psi().weights().iter().copied().fold(S::infinity(), S::min);
    let density_bound = tol / min_w;
    UniquenessReport {
        max_profile_gap,
        max_density_gap,
        density_bound,
        tolerance: tol,
        certified: max_profile_gap <= tol && max_density_gap <= density_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_center_optimal, solve_site_optimal, solve_site_optimal_with_probes, SolveOptions};
    use crate::transport::tests::line;

    #[test]
    fn identical_instances_compare_equal() {
        let phi = line(&[0.0, 0.3, 1.1], 1.0);
        let psi = line(&[0.2, 0.7, 1.5], 1.0);
        let opts = SolveOptions::default();
        let setup = monotonicity_setup(phi.clone(), psi.clone(), phi.clone(), psi.clone()).unwrap();
        assert!(setup.probes.is_empty());
        let fs = solve_site_optimal(phi.clone(), psi.clone(), &opts).unwrap();
        let r = check_monotonicity(&setup, &fs.density, &fs, 1e-12).unwrap();
        assert!(r.holds);
        assert_eq!(r.site_profile_excess, 0.0);
        let fc = solve_center_optimal(phi, psi, &opts).unwrap();
        let o = check_optimality(&fc.density, &fs.density, &fc.density, 1e-12);
        assert!(o.holds, "{o:?}");
        let u = uniqueness_certificate(&fs.density, &fc.density, 1e-9);
        assert!(u.certified);
    }

    #[test]
    fn extra_site_and_lighter_center() {
        let phi = line(&[0.0, 0.35, 1.12], 1.0);
        let psi = line(&[0.2, 0.71, 1.53], 1.0);
        let mu = line(&[0.0, 0.35, 1.12, 0.5], 1.0);
        let nu = Arc::new(psi.reweighted(vec![1.0, 0.5, 1.0]).unwrap());
        let opts = SolveOptions::default();
        let setup = monotonicity_setup(phi.clone(), psi.clone(), mu.clone(), nu.clone()).unwrap();
        assert_eq!(setup.sites[3], SiteRef::Probe(0));
        let fs = solve_site_optimal_with_probes(phi, psi, &setup.probes, &opts).unwrap();
        let f = solve_site_optimal(mu.clone(), nu.clone(), &opts).unwrap();
        let r = check_monotonicity(&setup, &f.density, &fs, 1e-9).unwrap();
        assert!(r.holds, "{r:?}");
        let fc = solve_center_optimal(mu, nu, &opts).unwrap();
        assert!(check_monotonicity(&setup, &fc.density, &fs, 1e-9).unwrap().holds);
    }

    #[test]
    fn domination_is_checked() {
        let phi = line(&[0.0], 1.0);
        let psi = line(&[0.5], 1.0);
        assert!(monotonicity_setup(phi.clone(), psi.clone(), line(&[0.0], 0.5), psi.clone()).is_err());
        assert!(monotonicity_setup(phi.clone(), psi.clone(), phi.clone(), line(&[0.5], 2.0)).is_err());
    }
}
