//! Densities that are allocations: every site sends its unit mass to at most
//! one center of a counting measure.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::solver::ConstrainedDensity;

#[derive(Clone, Debug, Serialize)]
pub struct Allocation<S> {
    /// Center of each site, `None` for unexhausted sites.
    pub target: Vec<Option<usize>>,
    /// phi-mass of the unallocated sites.
    pub unallocated_mass: S,
    /// phi-mass received by each center.
    pub received: Vec<S>,
}

/// Read off the allocation of a `{0, 1}`-valued density against unit atoms.
pub fn extract_allocation<S: Real>(f: &ConstrainedDensity<S>, tol: S) -> Result<Allocation<S>> {
    let psi = f.psi();
    if let Some(j) = (0..psi.len()).find(|&j| (psi.weight(j) - S::one()).abs() > tol) {
        return Err(Error::Precondition(format!(
            "psi is not a counting measure: atom {j} has weight {}",
            psi.weight(j)
        )));
    }
    let mut target = vec![None; f.site_count()];
    let mut received = vec![S::zero(); f.center_count()];
    let mut unallocated_mass = S::zero();
    for (i, slot) in target.iter_mut().enumerate() {
        let (cs, vs) = f.row(i);
        for (&j, &v) in cs.iter().zip(vs) {
            if v.abs() <= tol {
                continue;
            }
            if (v - S::one()).abs() > tol {
                return Err(Error::Precondition(format!("f({i}, {j}) = {v} is not 0 or 1")));
            }
            if let Some(prev) = slot {
                return Err(Error::Precondition(format!("site {i} is sent to both {prev} and {j}")));
            }
            *slot = Some(j as usize);
        }
        match slot {
            Some(j) => received[*j] += f.phi().weight(i),
            None => unallocated_mass += f.phi().weight(i),
        }
    }
    Ok(Allocation { target, unallocated_mass, received })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AllocationPair {
    pub site: usize,
    pub center: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct AllocationReport {
    pub unstable_pairs: Vec<AllocationPair>,
    pub stable: bool,
}

/// Mutual-desire scan for an allocation.
///
/// A site desires a center strictly closer than its own (or any center when
/// unallocated). A center desires a site it does not hold when it is unsated
/// or holds some site strictly farther away.
pub fn check_stable_allocation<S: Real>(
    alloc: &Allocation<S>,
    f: &ConstrainedDensity<S>,
    tol: S,
) -> AllocationReport {
    let shell = f.tolerances().shell;
    let m = f.center_count();
    let mut farthest = vec![S::neg_infinity(); m];
    for (i, t) in alloc.target.iter().enumerate() {
        if let Some(j) = *t {
            farthest[j] = farthest[j].max(f.dist(i, j));
        }
    }
    let mut unstable_pairs = Vec::new();
    for (i, t) in alloc.target.iter().enumerate() {
        let own = t.map_or(S::infinity(), |j| f.dist(i, j));
        for j in 0..m {
            if *t == Some(j) {
                continue;
            }
            let d = f.dist(i, j);
            let site_wants = t.is_none() || d < own - shell;
            let center_wants = alloc.received[j] < f.psi().weight(j) - tol || farthest[j] > d + shell;
            if site_wants && center_wants {
                unstable_pairs.push(AllocationPair { site: i, center: j });
            }
        }
    }
    AllocationReport { stable: unstable_pairs.is_empty(), unstable_pairs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::ConstraintMode;
    use crate::transport::tests::line;

    #[test]
    fn single_matched_pair_is_stable() {
        let f = ConstrainedDensity::from_triplets(line(&[0.0], 1.0), line(&[0.3], 1.0), [(0, 0, 1.0)], ConstraintMode::DensityCap)
            .unwrap();
        let a = extract_allocation(&f, 1e-9).unwrap();
        assert_eq!(a.target, vec![Some(0)]);
        assert!(check_stable_allocation(&a, &f, 1e-9).stable);
    }

    #[test]
    fn swapped_assignment_is_unstable() {
        let phi = line(&[0.0, 1.0], 1.0);
        let psi = line(&[0.1, 0.9], 1.0);
        let f = ConstrainedDensity::from_triplets(phi, psi, [(0, 1, 1.0), (1, 0, 1.0)], ConstraintMode::DensityCap).unwrap();
        let a = extract_allocation(&f, 1e-9).unwrap();
        let r = check_stable_allocation(&a, &f, 1e-9);
        assert!(!r.stable);
        assert!(r.unstable_pairs.contains(&AllocationPair { site: 0, center: 0 }));
    }

    #[test]
    fn fractional_or_weighted_inputs_rejected() {
        let half = ConstrainedDensity::from_triplets(line(&[0.0], 1.0), line(&[0.3], 1.0), [(0, 0, 0.5)], ConstraintMode::DensityCap)
            .unwrap();
        assert!(matches!(extract_allocation(&half, 1e-9), Err(Error::Precondition(m)) if m.contains("f(0, 0)")));
        let heavy = ConstrainedDensity::from_triplets(line(&[0.0], 1.0), line(&[0.3], 2.0), [(0, 0, 0.5)], ConstraintMode::DensityCap)
            .unwrap();
        assert!(extract_allocation(&heavy, 1e-9).is_err());
    }
}
