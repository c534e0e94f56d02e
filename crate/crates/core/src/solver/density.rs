use std::sync::Arc;

use super::instance::ConstraintMode;
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::measures::AtomicMeasure;
use crate::scalar::{Real, Tolerances};

/// Compressed sparse rows with column indices ascending within each row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRows<S> {
    ptr: Vec<usize>,
    idx: Vec<u32>,
    val: Vec<S>,
}

impl<S: Real> SparseRows<S> {
    /// Rows given as `(column, value)` lists in any order; zeros are dropped.
    pub fn from_rows(rows: impl IntoIterator<Item = Vec<(u32, S)>>) -> Self {
        let mut out = Self { ptr: vec![0], idx: Vec::new(), val: Vec::new() };
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                if v != S::zero() {
                    out.idx.push(j);
                    out.val.push(v);
                }
            }
            out.ptr.push(out.idx.len());
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[S]) {
        let r = self.ptr[i]..self.ptr[i + 1];
        (&self.idx[r.clone()], &self.val[r])
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        let (idx, val) = self.row(i);
        idx.binary_search(&(j as u32)).map_or(S::zero(), |k| val[k])
    }

    pub fn transpose(&self, cols: usize) -> Self {
        let mut counts = vec![0usize; cols + 1];
        for &j in &self.idx {
            counts[j as usize + 1] += 1;
        }
        for k in 0..cols {
            counts[k + 1] += counts[k];
        }
        let mut fill = counts.clone();
        let mut idx = vec![0u32; self.nnz()];
        let mut val = vec![S::zero(); self.nnz()];
        for i in 0..self.rows() {
            let (cs, vs) = self.row(i);
            for (&j, &v) in cs.iter().zip(vs) {
                let p = fill[j as usize];
                idx[p] = i as u32;
                val[p] = v;
                fill[j as usize] += 1;
            }
        }
        Self { ptr: counts, idx, val }
    }

    /// `(row, column, value)` for every stored entry, row-major.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        (0..self.rows()).flat_map(move |i| {
            let (cs, vs) = self.row(i);
            cs.iter().zip(vs).map(move |(&j, &v)| (i, j as usize, v))
        })
    }
}

/// A density `f(i, j)` over (site atom, center atom) pairs.
///
/// Nothing here enforces the constraints; `transport::validate_constrained`
/// reports violations.
#[derive(Clone, Debug)]
pub struct ConstrainedDensity<S: Real> {
    phi: Arc<AtomicMeasure<S>>,
    psi: Arc<AtomicMeasure<S>>,
    rows: SparseRows<S>,
    cols: SparseRows<S>,
    mode: ConstraintMode,
    role_swap: bool,
    tol: Tolerances<S>,
}

impl<S: Real> ConstrainedDensity<S> {
    pub fn from_rows(
        phi: Arc<AtomicMeasure<S>>,
        psi: Arc<AtomicMeasure<S>>,
        rows: Vec<Vec<(u32, S)>>,
        mode: ConstraintMode,
    ) -> Result<Self> {
        if phi.geometry() != psi.geometry() {
            return Err(Error::InvalidGeometry("phi and psi live on different geometries".into()));
        }
        if rows.len() != phi.len() {
            return Err(Error::InvalidSpec(format!("{} density rows for {} sites", rows.len(), phi.len())));
        }
        for row in &rows {
            for &(j, v) in row {
                if j as usize >= psi.len() {
                    return Err(Error::InvalidSpec(format!("center index {j} out of range")));
                }
                if !v.is_finite() {
                    return Err(Error::InvalidSpec(format!("non-finite density value {v}")));
                }
            }
            let mut seen: Vec<u32> = row.iter().map(|e| e.0).collect();
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidSpec("duplicate (site, center) entry".into()));
            }
        }
        let rows = SparseRows::from_rows(rows);
        let cols = rows.transpose(psi.len());
        let tol = Tolerances::for_magnitude(phi.magnitude().max(psi.magnitude()));
        Ok(Self { phi, psi, rows, cols, mode, role_swap: false, tol })
    }

    pub fn from_triplets(
        phi: Arc<AtomicMeasure<S>>,
        psi: Arc<AtomicMeasure<S>>,
        triplets: impl IntoIterator<Item = (usize, usize, S)>,
        mode: ConstraintMode,
    ) -> Result<Self> {
        let mut rows = vec![Vec::new(); phi.len()];
        for (i, j, v) in triplets {
            if i >= phi.len() || j >= psi.len() {
                return Err(Error::InvalidSpec(format!("entry ({i}, {j}) out of range")));
            }
            rows[i].push((j as u32, v));
        }
        Self::from_rows(phi, psi, rows, mode)
    }

    /// Evaluate `f(i, j, distance)` on every pair.
    pub fn from_fn(
        phi: Arc<AtomicMeasure<S>>,
        psi: Arc<AtomicMeasure<S>>,
        mode: ConstraintMode,
        f: impl Fn(usize, usize, S) -> S,
    ) -> Result<Self> {
        let g = phi.geometry().clone();
        let rows = (0..phi.len())
            .map(|i| {
                (0..psi.len())
                    .filter_map(|j| {
                        let v = f(i, j, g.dist(phi.position(i), psi.position(j)));
                        (v != S::zero()).then_some((j as u32, v))
                    })
                    .collect()
            })
            .collect();
        Self::from_rows(phi, psi, rows, mode)
    }

    pub fn zero(phi: Arc<AtomicMeasure<S>>, psi: Arc<AtomicMeasure<S>>, mode: ConstraintMode) -> Result<Self> {
        let n = phi.len();
        Self::from_rows(phi, psi, vec![Vec::new(); n], mode)
    }

    pub(crate) fn with_role_swap(mut self, role_swap: bool) -> Self {
        self.role_swap = role_swap;
        self
    }

    pub fn phi(&self) -> &Arc<AtomicMeasure<S>> {
        &self.phi
    }

    pub fn psi(&self) -> &Arc<AtomicMeasure<S>> {
        &self.psi
    }

    pub fn geometry(&self) -> &Geometry<S> {
        self.phi.geometry()
    }

    pub fn mode(&self) -> ConstraintMode {
        self.mode
    }

    /// True for center-optimal results transposed back to (site, center).
    pub fn role_swap(&self) -> bool {
        self.role_swap
    }

    pub fn tolerances(&self) -> Tolerances<S> {
        self.tol
    }

    pub fn site_count(&self) -> usize {
        self.phi.len()
    }

    pub fn center_count(&self) -> usize {
        self.psi.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.nnz()
    }

    pub fn get(&self, site: usize, center: usize) -> S {
        self.rows.get(site, center)
    }

    /// `(centers, values)` of one site, centers ascending.
    pub fn row(&self, site: usize) -> (&[u32], &[S]) {
        self.rows.row(site)
    }

    /// `(sites, values)` of one center, sites ascending.
    pub fn column(&self, center: usize) -> (&[u32], &[S]) {
        self.cols.row(center)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, S)> + '_ {
        self.rows.iter()
    }

    pub fn sparse_rows(&self) -> &SparseRows<S> {
        &self.rows
    }

    pub fn dist(&self, site: usize, center: usize) -> S {
        self.geometry().dist(self.phi.position(site), self.psi.position(center))
    }

    /// Upper bound on `f(site, center)` under the constraint mode.
    pub fn cap(&self, center: usize) -> S {
        match self.mode {
            ConstraintMode::DensityCap => S::one(),
            ConstraintMode::CountingCap => S::one() / self.psi.weight(center),
        }
    }

    /// `sum_j f(i, j) w_j`.
    pub fn row_sum(&self, site: usize) -> S {
        let (cs, vs) = self.row(site);
        cs.iter().zip(vs).map(|(&j, &v)| v * self.psi.weight(j as usize)).sum()
    }

    /// `sum_i f(i, j) u_i`.
    pub fn column_sum(&self, center: usize) -> S {
        let (is, vs) = self.column(center);
        is.iter().zip(vs).map(|(&i, &v)| v * self.phi.weight(i as usize)).sum()
    }

    /// Same density with the roles of sites and centers exchanged.
    pub fn transposed(&self) -> Self {
        Self {
            phi: self.psi.clone(),
            psi: self.phi.clone(),
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            mode: self.mode,
            role_swap: !self.role_swap,
            tol: self.tol,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::measures::Provenance;

    fn line(xs: &[f64]) -> Arc<AtomicMeasure<f64>> {
        let g = Geometry::euclidean(1).unwrap();
        Arc::new(
            AtomicMeasure::new(g, xs.iter().map(|&x| Point(vec![x])).collect(), vec![1.0; xs.len()], Provenance::Explicit)
                .unwrap(),
        )
    }

    #[test]
    fn sparse_transpose_roundtrip() {
        let m = SparseRows::from_rows(vec![vec![(2, 1.0), (0, 0.5)], vec![], vec![(1, 0.25)]]);
        assert_eq!(m.row(0), (&[0u32, 2][..], &[0.5, 1.0][..]));
        let t = m.transpose(3);
        assert_eq!(t.get(2, 0), 1.0);
        assert_eq!(t.get(1, 2), 0.25);
        assert_eq!(t.transpose(3), m);
    }

    #[test]
    fn sums_and_lookup() {
        let f = ConstrainedDensity::from_triplets(line(&[0.0, 1.0]), line(&[0.5]), [(0, 0, 0.5), (1, 0, 0.25)], ConstraintMode::DensityCap)
            .unwrap();
        assert_eq!(f.row_sum(0), 0.5);
        assert_eq!(f.column_sum(0), 0.75);
        assert_eq!(f.get(1, 0), 0.25);
        let t = f.transposed();
        assert_eq!(t.row_sum(0), 0.75);
        assert!(t.role_swap());
    }

    #[test]
    fn rejects_bad_entries() {
        let bad = ConstrainedDensity::from_triplets(line(&[0.0]), line(&[0.5]), [(0, 3, 1.0)], ConstraintMode::DensityCap);
        assert!(bad.is_err());
        let dup =
            ConstrainedDensity::from_triplets(line(&[0.0]), line(&[0.5]), [(0, 0, 1.0), (0, 0, 1.0)], ConstraintMode::DensityCap);
        assert!(dup.is_err());
    }
}
