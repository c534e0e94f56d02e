//! Uniform bucket grid for radius queries over a fixed point set.

use crate::geometry::Geometry;
use crate::scalar::Real;

const LINEAR_SCAN_BELOW: usize = 64;
const MAX_GRID_DIM: usize = 3;

pub(crate) struct NeighborIndex<S> {
    layout: Option<Layout<S>>,
    len: usize,
}

struct Layout<S> {
    origin: Vec<S>,
    cell: Vec<S>,
    counts: Vec<usize>,
    wraps: bool,
    starts: Vec<usize>,
    items: Vec<u32>,
}

impl<S: Real> NeighborIndex<S> {
    /// `coords` is a flat `len * dim` array of canonical coordinates.
    pub fn build(geom: &Geometry<S>, coords: &[S]) -> Self {
        let d = geom.dim();
        let len = coords.len() / d;
        if len < LINEAR_SCAN_BELOW || d > MAX_GRID_DIM {
            return Self { layout: None, len };
        }
        let per_axis = ((len as f64).powf(1.0 / d as f64).ceil() as usize).max(1);
        let (origin, extent, wraps) = match geom.period() {
            Some(p) => (vec![S::zero(); d], p.to_vec(), true),
            None => {
                let mut lo = vec![S::infinity(); d];
                let mut hi = vec![S::neg_infinity(); d];
                for p in coords.chunks_exact(d) {
                    for k in 0..d {
                        lo[k] = lo[k].min(p[k]);
                        hi[k] = hi[k].max(p[k]);
                    }
                }
                let ext = lo.iter().zip(&hi).map(|(&l, &h)| (h - l).max(S::epsilon())).collect();
                (lo, ext, false)
            }
        };
        let counts: Vec<usize> = vec![per_axis; d];
        let cell: Vec<S> = extent
            .iter()
            .zip(&counts)
            .map(|(&e, &c)| e / S::from_usize(c).unwrap())
            .collect();
        let total: usize = counts.iter().product();
        let mut layout = Layout { origin, cell, counts, wraps, starts: vec![0; total + 1], items: vec![0; len] };
        let keys: Vec<usize> = coords.chunks_exact(d).map(|p| layout.key(p)).collect();
        for &k in &keys {
            layout.starts[k + 1] += 1;
        }
        for k in 0..total {
            layout.starts[k + 1] += layout.starts[k];
        }
        let mut fill = layout.starts.clone();
        for (i, &k) in keys.iter().enumerate() {
            layout.items[fill[k]] = i as u32;
            fill[k] += 1;
        }
        Self { layout: Some(layout), len }
    }

    /// Call `f(index, distance)` for every point with `distance <= radius`.
    pub fn for_each_within(
        &self,
        geom: &Geometry<S>,
        coords: &[S],
        query: &[S],
        radius: S,
        mut f: impl FnMut(usize, S),
    ) {
        let d = geom.dim();
        let mut visit = |i: usize| {
            let dist = geom.dist(query, &coords[i * d..(i + 1) * d]);
            if dist <= radius {
                f(i, dist);
            }
        };
        let Some(layout) = &self.layout else {
            (0..self.len).for_each(visit);
            return;
        };
        // Per axis, the list of bucket coordinates to visit.
        let mut ranges: Vec<Vec<usize>> = Vec::with_capacity(d);
        for k in 0..d {
            let n = layout.counts[k];
            if !radius.is_finite() {
                ranges.push((0..n).collect());
                continue;
            }
            let lo = ((query[k] - radius - layout.origin[k]) / layout.cell[k]).floor();
            let hi = ((query[k] + radius - layout.origin[k]) / layout.cell[k]).floor();
            let (lo, hi) = (lo.to_f64_lossy(), hi.to_f64_lossy());
            if layout.wraps {
                if hi - lo + 1.0 >= n as f64 {
                    ranges.push((0..n).collect());
                } else {
                    let ni = n as i64;
                    ranges.push((lo as i64..=hi as i64).map(|c| c.rem_euclid(ni) as usize).collect());
                }
            } else {
                let lo = lo.max(0.0) as i64;
                let hi = hi.min(n as f64 - 1.0) as i64;
                if hi < lo {
                    return;
                }
                ranges.push((lo as usize..=hi as usize).collect());
            }
        }
        let mut cursor = vec![0usize; d];
        loop {
            let mut key = 0;
            for k in 0..d {
                key = key * layout.counts[k] + ranges[k][cursor[k]];
            }
            for &i in &layout.items[layout.starts[key]..layout.starts[key + 1]] {
                visit(i as usize);
            }
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                cursor[k] += 1;
                if cursor[k] < ranges[k].len() {
                    break;
                }
                cursor[k] = 0;
            }
        }
    }
}

impl<S: Real> Layout<S> {
    fn key(&self, p: &[S]) -> usize {
        let mut key = 0;
        for (k, &x) in p.iter().enumerate() {
            let n = self.counts[k];
            let c = ((x - self.origin[k]) / self.cell[k]).floor().to_f64_lossy();
            let c = if c < 0.0 { 0 } else { (c as usize).min(n - 1) };
            key = key * n + c;
        }
        key
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(geom: &Geometry<f64>, coords: &[f64], q: &[f64], r: f64) -> Vec<usize> {
        let d = geom.dim();
        (0..coords.len() / d).filter(|&i| geom.dist(q, &coords[i * d..(i + 1) * d]) <= r).collect()
    }

    #[test]
    fn grid_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for geom in [Geometry::torus(vec![7.0, 3.0]).unwrap(), Geometry::euclidean(2).unwrap()] {
            let coords: Vec<f64> = (0..800).map(|k| rng.random::<f64>() * if k % 2 == 0 { 7.0 } else { 3.0 }).collect();
            let idx = NeighborIndex::build(&geom, &coords);
            assert!(idx.layout.is_some());
            for _ in 0..200 {
                let q = [rng.random::<f64>() * 7.0, rng.random::<f64>() * 3.0];
                let r = rng.random::<f64>() * 4.0;
                let mut got = Vec::new();
                idx.for_each_within(&geom, &coords, &q, r, |i, _| got.push(i));
                got.sort();
                assert_eq!(got, brute(&geom, &coords, &q, r));
            }
        }
    }
}
