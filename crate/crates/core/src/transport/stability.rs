use rayon::prelude::*;
use serde::Serialize;

use super::support_radii;
use crate::scalar::Real;
use crate::solver::ConstrainedDensity;

/// Unstable pairs kept in a report; the count is always exact.
pub const MAX_REPORTED_PAIRS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteDesire {
    /// The site sends less than its unit mass.
    Unexhausted,
    /// The site sends mass to some center strictly farther away.
    FartherCenter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterDesire {
    Unsated,
    FartherSite,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UnstablePair<S> {
    pub site: usize,
    pub center: usize,
    pub distance: S,
    pub site_reason: SiteDesire,
    pub center_reason: CenterDesire,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport<S> {
    /// First pairs found, in (site, center) order.
    pub unstable_pairs: Vec<UnstablePair<S>>,
    pub unstable_count: usize,
    /// phi-mass of sites with row sum below `1 - tol`.
    pub unexhausted_mass: S,
    /// psi-mass of centers with column sum below `1 - tol`.
    pub unsated_mass: S,
}

impl<S> StabilityReport<S> {
    pub fn is_stable(&self) -> bool {
        self.unstable_count == 0
    }
}

/// Exhaustive mutual-desire scan over all pairs.
pub fn check_stable<S: Real>(f: &ConstrainedDensity<S>, tol: S) -> StabilityReport<S> {
    let n = f.site_count();
    let m = f.center_count();
    let shell = f.tolerances().shell;
    let row: Vec<S> = (0..n).map(|i| f.row_sum(i)).collect();
    let col: Vec<S> = (0..m).map(|j| f.column_sum(j)).collect();
    let (site_radius, center_radius) = support_radii(f, tol);
    let geom = f.geometry();
    let phi = f.phi();
    let psi = f.psi();

    let per_site: Vec<(usize, Vec<UnstablePair<S>>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let unexhausted = row[i] < S::one() - tol;
            let mut count = 0;
            let mut found = Vec::new();
            let (cs, vs) = f.row(i);
            let mut cursor = 0;
            for j in 0..m {
                let mut v = S::zero();
                if cursor < cs.len() && cs[cursor] as usize == j {
                    v = vs[cursor];
                    cursor += 1;
                }
                if v >= f.cap(j) - tol {
                    continue;
                }
                let d = geom.dist(phi.position(i), psi.position(j));
                let site_reason = if unexhausted {
                    SiteDesire::Unexhausted
                } else if site_radius[i] > d + shell {
                    SiteDesire::FartherCenter
                } else {
                    continue;
                };
                let center_reason = if col[j] < S::one() - tol {
                    CenterDesire::Unsated
                } else if center_radius[j] > d + shell {
                    CenterDesire::FartherSite
                } else {
                    continue;
                };
                count += 1;
                if found.len() < MAX_REPORTED_PAIRS {
                    found.push(UnstablePair { site: i, center: j, distance: d, site_reason, center_reason });
                }
            }
            (count, found)
        })
        .collect();

    let mut unstable_pairs = Vec::new();
    let mut unstable_count = 0;
    for (count, found) in per_site {
        unstable_count += count;
        let room = MAX_REPORTED_PAIRS - unstable_pairs.len();
        unstable_pairs.extend(found.into_iter().take(room));
    }
    let unexhausted_mass = (0..n).filter(|&i| row[i] < S::one() - tol).map(|i| phi.weight(i)).sum();
    let unsated_mass = (0..m).filter(|&j| col[j] < S::one() - tol).map(|j| psi.weight(j)).sum();
    StabilityReport { unstable_pairs, unstable_count, unexhausted_mass, unsated_mass }
}

/// Mutual desire of one pair, if any.
pub fn pair_desire<S: Real>(f: &ConstrainedDensity<S>, site: usize, center: usize, tol: S) -> Option<(SiteDesire, CenterDesire)> {
    if f.get(site, center) >= f.cap(center) - tol {
        return None;
    }
    let shell = f.tolerances().shell;
    let d = f.dist(site, center);
    let site_reason = if f.row_sum(site) < S::one() - tol {
        SiteDesire::Unexhausted
    } else {
        let (cs, vs) = f.row(site);
        let farther = cs.iter().zip(vs).any(|(&j, &v)| v > tol && f.dist(site, j as usize) > d + shell);
        if !farther {
            return None;
        }
        SiteDesire::FartherCenter
    };
    let center_reason = if f.column_sum(center) < S::one() - tol {
        CenterDesire::Unsated
    } else {
        let (is, vs) = f.column(center);
        let farther = is.iter().zip(vs).any(|(&i, &v)| v > tol && f.dist(i as usize, center) > d + shell);
        if !farther {
            return None;
        }
        CenterDesire::FartherSite
    };
    Some((site_reason, center_reason))
}

#[derive(Clone, Debug, Serialize)]
pub struct SatedOrExhausted<S> {
    pub unexhausted_mass: S,
    pub unsated_mass: S,
    pub unexhausted_sites: usize,
    pub unsated_centers: usize,
    /// Unexhausted sites force unsated mass below 1 and vice versa.
    pub holds: bool,
}

/// Atomic form of the sated-or-exhausted dichotomy for stable densities.
pub fn sated_or_exhausted<S: Real>(f: &ConstrainedDensity<S>, tol: S) -> SatedOrExhausted<S> {
    let sites: Vec<usize> = (0..f.site_count()).filter(|&i| f.row_sum(i) < S::one() - tol).collect();
    let centers: Vec<usize> = (0..f.center_count()).filter(|&j| f.column_sum(j) < S::one() - tol).collect();
    let unexhausted_mass: S = sites.iter().map(|&i| f.phi().weight(i)).sum();
    let unsated_mass: S = centers.iter().map(|&j| f.psi().weight(j)).sum();
    let holds = (sites.is_empty() || unsated_mass < S::one() + tol)
        && (centers.is_empty() || unexhausted_mass < S::one() + tol);
    SatedOrExhausted {
        unexhausted_mass,
        unsated_mass,
        unexhausted_sites: sites.len(),
        unsated_centers: centers.len(),
        holds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::ConstraintMode;
    use crate::transport::tests::line;

    #[test]
    fn zero_density_every_pair_unstable() {
        let f = ConstrainedDensity::zero(line(&[0.0, 1.0], 1.0), line(&[0.5, 3.0, 4.0], 1.0), ConstraintMode::DensityCap).unwrap();
        let r = check_stable(&f, 1e-9);
        assert_eq!(r.unstable_count, 6);
        assert!(r.unstable_pairs.iter().all(|p| p.site_reason == SiteDesire::Unexhausted));
        assert_eq!(r.unexhausted_mass, 2.0);
        assert_eq!(r.unsated_mass, 3.0);
        assert!(!sated_or_exhausted(&f, 1e-9).holds);
    }

    #[test]
    fn crossed_matching_is_unstable() {
        // Sites 0, 1 and centers 0.1, 0.9: sending each site to the far center
        // leaves both sides wanting the near partner.
        let phi = line(&[0.0, 1.0], 1.0);
        let psi = line(&[0.1, 0.9], 1.0);
        let crossed = ConstrainedDensity::from_triplets(phi.clone(), psi.clone(), [(0, 1, 1.0), (1, 0, 1.0)], ConstraintMode::DensityCap).unwrap();
        let r = check_stable(&crossed, 1e-9);
        assert_eq!(r.unstable_count, 2);
        assert_eq!(r.unstable_pairs[0].site_reason, SiteDesire::FartherCenter);
        assert_eq!(r.unstable_pairs[0].center_reason, CenterDesire::FartherSite);
        let straight = ConstrainedDensity::from_triplets(phi, psi, [(0, 0, 1.0), (1, 1, 1.0)], ConstraintMode::DensityCap).unwrap();
        assert!(check_stable(&straight, 1e-9).is_stable());
        assert_eq!(pair_desire(&crossed, 0, 0, 1e-9), Some((SiteDesire::FartherCenter, CenterDesire::FartherSite)));
        assert_eq!(pair_desire(&straight, 0, 1, 1e-9), None);
        assert!(sated_or_exhausted(&straight, 1e-9).holds);
    }

    #[test]
    fn equal_distance_is_not_desire() {
        // Site 0 splits between two equidistant centers.
        let phi = line(&[0.0, 5.0, -5.0], 1.0);
        let psi = line(&[-1.0, 1.0], 1.0);
        let f = ConstrainedDensity::from_triplets(phi, psi, [(0, 0, 0.5), (0, 1, 0.5)], ConstraintMode::DensityCap).unwrap();
        let r = check_stable(&f, 1e-9);
        // Sites 1 and 2 are unexhausted and each center unsated; the shared
        // site has no farther partner.
        assert!(r.unstable_pairs.iter().all(|p| p.site != 0));
    }
}
