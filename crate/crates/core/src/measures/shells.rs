use serde::Serialize;

use crate::scalar::Real;

/// Atoms at (numerically) equal distance from a query point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Shell<S> {
    /// Smallest member distance.
    pub radius: S,
    /// Atom indices, ascending.
    pub atoms: Vec<usize>,
    /// Total weight of the shell.
    pub mass: S,
}

/// Atoms of a measure grouped into spheres around a query point, with
/// cumulative closed-ball masses.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShellIndex<S> {
    pub shells: Vec<Shell<S>>,
    /// `cumulative[k]` is the mass of the closed ball of radius `shells[k].radius`.
    pub cumulative: Vec<S>,
}

impl<S: Real> ShellIndex<S> {
    /// Build from `(distance, atom, weight)` triples in any order.
    pub fn from_distances(mut items: Vec<(S, usize, S)>, shell_tol: S) -> Self {
        items.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut shells = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = S::zero();
        for range in group_shells(&items, |t| t.0, shell_tol) {
            let members = &mut items[range];
            members.sort_by_key(|t| t.1);
            let radius = members.iter().map(|t| t.0).fold(S::infinity(), S::min);
            let mass = members.iter().map(|t| t.2).sum::<S>();
            total += mass;
            shells.push(Shell { radius, atoms: members.iter().map(|t| t.1).collect(), mass });
            cumulative.push(total);
        }
        Self { shells, cumulative }
    }

    pub fn len(&self) -> usize {
        self.shells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shells.is_empty()
    }

    /// Index of the first shell whose closed-ball mass exceeds `budget + tol`.
    pub fn first_exceeding(&self, budget: S, tol: S) -> Option<usize> {
        self.cumulative.iter().position(|&c| c > budget + tol)
    }
}

/// Split a distance-sorted slice into tie classes.
///
/// A new class starts whenever a distance exceeds the first distance of the
/// current class by more than `tol`. Grouping a sorted prefix of a longer list
/// gives the same classes as grouping the full list, up to the final class.
pub fn group_shells<T, S: Real>(
    sorted: &[T],
    key: impl Fn(&T) -> S,
    tol: S,
) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let anchor = key(&sorted[start]);
        let mut end = start + 1;
        while end < sorted.len() && key(&sorted[end]) - anchor <= tol {
            end += 1;
        }
        out.push(start..end);
        start = end;
    }
    out
}
