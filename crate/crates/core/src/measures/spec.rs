//! Declarative measure construction (the `phi`/`psi` blocks of instance files).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{AtomicMeasure, Provenance};
use crate::error::{Error, Result};
use crate::geometry::{Geometry, Point};
use crate::scalar::Real;

/// Relative size of the generic-position jitter, in units of the spacing.
pub const JITTER_FRACTION: f64 = 1e-3;

/// A scalar applied to every axis, or one value per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn per_axis(&self, dim: usize, what: &str) -> Result<Vec<T>> {
        match self {
            OneOrMany::One(x) => Ok(vec![x.clone(); dim]),
            OneOrMany::Many(v) if v.len() == dim => Ok(v.clone()),
            OneOrMany::Many(v) => Err(Error::InvalidSpec(format!(
                "{what} has {} entries, expected {dim}",
                v.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedAtom {
    pub coords: Vec<f64>,
    #[serde(default = "unit")]
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub dim: usize,
    pub measure: MeasureSpec,
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Atoms {
        atoms: Vec<WeightedAtom>,
    },
    /// One atom per cell center, weight `scale * cell volume`.
    GridLebesgue {
        #[serde(default)]
        window: Option<Vec<[f64; 2]>>,
        resolution: OneOrMany<usize>,
        #[serde(default = "unit")]
        scale: f64,
        #[serde(default)]
        jitter_seed: Option<u64>,
    },
    /// Points `offset + k * spacing`.
    Lattice {
        spacing: OneOrMany<f64>,
        #[serde(default = "unit")]
        weight: f64,
        #[serde(default)]
        offset: Option<Vec<f64>>,
        #[serde(default)]
        random_translation_seed: Option<u64>,
        #[serde(default)]
        window: Option<Vec<[f64; 2]>>,
        #[serde(default)]
        jitter_seed: Option<u64>,
    },
    Poisson {
        intensity: f64,
        seed: u64,
        #[serde(default)]
        window: Option<Vec<[f64; 2]>>,
        #[serde(default = "unit")]
        weight: f64,
    },
    Product {
        factors: Vec<FactorSpec>,
    },
}

/// Materialize a measure spec on the given geometry.
pub fn make_measure<S: Real>(spec: &MeasureSpec, geom: &Geometry<S>) -> Result<AtomicMeasure<S>> {
    let raw = build_raw(spec, &geom_f64(geom)?)?;
    let positions = raw.coords.into_iter().map(|c| Point(c.into_iter().map(S::of).collect())).collect();
    let weights = raw.weights.into_iter().map(S::of).collect();
    Ok(AtomicMeasure::new(geom.clone(), positions, weights, raw.provenance)?
        .with_window_volume(raw.window_volume.map(S::of)))
}

struct Raw {
    coords: Vec<Vec<f64>>,
    weights: Vec<f64>,
    provenance: Provenance,
    window_volume: Option<f64>,
}

fn geom_f64<S: Real>(g: &Geometry<S>) -> Result<Geometry<f64>> {
    match g.period() {
        Some(p) => Geometry::torus(p.iter().map(|x| x.to_f64_lossy()).collect()),
        None => Geometry::euclidean(g.dim()),
    }
}

fn window_for(window: &Option<Vec<[f64; 2]>>, geom: &Geometry<f64>, what: &str) -> Result<Vec<[f64; 2]>> {
    let w = match (window, geom.period()) {
        (Some(w), _) => w.clone(),
        (None, Some(p)) => p.iter().map(|&l| [0.0, l]).collect(),
        (None, None) => {
            return Err(Error::InvalidSpec(format!("{what} needs a window in Euclidean geometry")))
        }
    };
    if w.len() != geom.dim() {
        return Err(Error::InvalidSpec(format!(
            "{what} window has {} axes, geometry has {}",
            w.len(),
            geom.dim()
        )));
    }
    if let Some([lo, hi]) = w.iter().find(|[lo, hi]| !(lo.is_finite() && hi.is_finite() && hi > lo)) {
        return Err(Error::InvalidSpec(format!("{what} window [{lo}, {hi}] is empty")));
    }
    Ok(w)
}

fn jitter(coords: &mut [Vec<f64>], seed: u64, amplitude: &[f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in coords.iter_mut() {
        for (x, &a) in p.iter_mut().zip(amplitude) {
            *x += a * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
}

fn build_raw(spec: &MeasureSpec, geom: &Geometry<f64>) -> Result<Raw> {
    let d = geom.dim();
    match spec {
        MeasureSpec::Atoms { atoms } => {
            if atoms.is_empty() {
                return Err(Error::InvalidSpec("explicit measure has no atoms".into()));
            }
            for a in atoms {
                if a.coords.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: a.coords.len() });
                }
            }
            Ok(Raw {
                coords: atoms.iter().map(|a| a.coords.clone()).collect(),
                weights: atoms.iter().map(|a| a.weight).collect(),
                provenance: Provenance::Explicit,
                window_volume: None,
            })
        }
        MeasureSpec::GridLebesgue { window, resolution, scale, jitter_seed } => {
            let window = window_for(window, geom, "grid_lebesgue")?;
            let res = resolution.per_axis(d, "resolution")?;
            if res.contains(&0) {
                return Err(Error::InvalidSpec("grid resolution must be positive".into()));
            }
            if !(scale.is_finite() && *scale > 0.0) {
                return Err(Error::InvalidSpec(format!("grid scale must be positive, got {scale}")));
            }
            let cell: Vec<f64> = window.iter().zip(&res).map(|([lo, hi], &n)| (hi - lo) / n as f64).collect();
            let weight = scale * cell.iter().product::<f64>();
            let total: usize = res.iter().product();
            let mut coords = Vec::with_capacity(total);
            let mut idx = vec![0usize; d];
            for _ in 0..total {
                coords.push((0..d).map(|k| window[k][0] + (idx[k] as f64 + 0.5) * cell[k]).collect());
                // Last axis varies fastest.
                for k in (0..d).rev() {
                    idx[k] += 1;
                    if idx[k] < res[k] {
                        break;
                    }
                    idx[k] = 0;
                }
            }
            if let Some(seed) = jitter_seed {
                let amp: Vec<f64> = cell.iter().map(|c| c * JITTER_FRACTION).collect();
                jitter(&mut coords, *seed, &amp);
            }
            let volume = window.iter().map(|[lo, hi]| hi - lo).product::<f64>();
            Ok(Raw {
                weights: vec![weight; coords.len()],
                coords,
                provenance: Provenance::Grid { resolution: res, scale: *scale, jittered: jitter_seed.is_some() },
                window_volume: Some(volume),
            })
        }
        MeasureSpec::Lattice { spacing, weight, offset, random_translation_seed, window, jitter_seed } => {
            let spacing = spacing.per_axis(d, "spacing")?;
            if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(Error::InvalidSpec("lattice spacing must be positive".into()));
            }
            if !(weight.is_finite() && *weight > 0.0) {
                return Err(Error::InvalidSpec(format!("lattice weight must be positive, got {weight}")));
            }
            let mut off = match offset {
                Some(o) if o.len() == d => o.clone(),
                Some(o) => return Err(Error::DimensionMismatch { expected: d, got: o.len() }),
                None => vec![0.0; d],
            };
            if let Some(seed) = random_translation_seed {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                for (o, s) in off.iter_mut().zip(&spacing) {
                    *o += s * rng.random::<f64>();
                }
            }
            let window = window_for(window, geom, "lattice")?;
            let mut axes: Vec<Vec<f64>> = Vec::with_capacity(d);
            for k in 0..d {
                let [lo, hi] = window[k];
                let s = spacing[k];
                if geom.is_torus() && window[k] == [0.0, geom.period().unwrap()[k]] {
                    let ratio = (hi - lo) / s;
                    if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
                        return Err(Error::InvalidSpec(format!(
                            "lattice spacing {s} does not divide torus period {}",
                            hi - lo
                        )));
                    }
                    let n = ratio.round() as i64;
                    axes.push((0..n).map(|j| off[k] + j as f64 * s).collect());
                } else {
                    let first = ((lo - off[k]) / s).ceil() as i64;
                    let last = ((hi - off[k]) / s).floor() as i64;
                    axes.push((first..=last).map(|j| off[k] + j as f64 * s).collect());
                }
            }
            if axes.iter().any(|a| a.is_empty()) {
                return Err(Error::InvalidSpec("lattice window contains no points".into()));
            }
            let mut coords = cartesian(&axes);
            if let Some(seed) = jitter_seed {
                let amp: Vec<f64> = spacing.iter().map(|s| s * JITTER_FRACTION).collect();
                jitter(&mut coords, *seed, &amp);
            }
            let volume = window.iter().map(|[lo, hi]| hi - lo).product::<f64>();
            Ok(Raw {
                weights: vec![*weight; coords.len()],
                coords,
                provenance: Provenance::Lattice {
                    spacing,
                    weight: *weight,
                    offset: off,
                    jittered: jitter_seed.is_some(),
                },
                window_volume: Some(volume),
            })
        }
        MeasureSpec::Poisson { intensity, seed, window, weight } => {
            let window = window_for(window, geom, "poisson")?;
            if !(intensity.is_finite() && *intensity > 0.0) {
                return Err(Error::InvalidSpec(format!("poisson intensity must be positive, got {intensity}")));
            }
            if !(weight.is_finite() && *weight > 0.0) {
                return Err(Error::InvalidSpec(format!("poisson weight must be positive, got {weight}")));
            }
            let volume = window.iter().map(|[lo, hi]| hi - lo).product::<f64>();
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let count = Poisson::new(intensity * volume)
                .map_err(|e| Error::InvalidSpec(format!("poisson mean: {e}")))?
                .sample(&mut rng) as usize;
            let coords = (0..count)
                .map(|_| window.iter().map(|[lo, hi]| lo + (hi - lo) * rng.random::<f64>()).collect())
                .collect::<Vec<Vec<f64>>>();
            Ok(Raw {
                weights: vec![*weight; coords.len()],
                coords,
                provenance: Provenance::Poisson { intensity: *intensity, seed: *seed },
                window_volume: Some(volume),
            })
        }
        MeasureSpec::Product { factors } => {
            if factors.is_empty() {
                return Err(Error::InvalidSpec("product needs at least one factor".into()));
            }
            let dims: usize = factors.iter().map(|f| f.dim).sum();
            if dims != d {
                return Err(Error::DimensionMismatch { expected: d, got: dims });
            }
            let mut coords: Vec<Vec<f64>> = vec![Vec::new()];
            let mut weights = vec![1.0];
            let mut provs = Vec::new();
            let mut volume = Some(1.0);
            let mut axis = 0;
            for f in factors {
                if f.dim == 0 {
                    return Err(Error::InvalidSpec("product factor of dimension 0".into()));
                }
                let sub = match geom.period() {
                    Some(p) => Geometry::torus(p[axis..axis + f.dim].to_vec())?,
                    None => Geometry::euclidean(f.dim)?,
                };
                axis += f.dim;
                let part = build_raw(&f.measure, &sub)?;
                let mut next_c = Vec::with_capacity(coords.len() * part.coords.len());
                let mut next_w = Vec::with_capacity(coords.len() * part.coords.len());
                for (c, w) in coords.iter().zip(&weights) {
                    for (pc, pw) in part.coords.iter().zip(&part.weights) {
                        let mut v = c.clone();
                        v.extend_from_slice(pc);
                        next_c.push(v);
                        next_w.push(w * pw);
                    }
                }
                coords = next_c;
                weights = next_w;
                volume = volume.zip(part.window_volume).map(|(a, b)| a * b);
                provs.push(part.provenance);
            }
            Ok(Raw { coords, weights, provenance: Provenance::Product { factors: provs }, window_volume: volume })
        }
    }
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &x in axis {
                let mut v = prefix.clone();
                v.push(x);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(res: usize) -> MeasureSpec {
        MeasureSpec::GridLebesgue {
            window: Some(vec![[0.0, 1.0]]),
            resolution: OneOrMany::One(res),
            scale: 1.0,
            jitter_seed: None,
        }
    }

    #[test]
    fn grid_cell_centers() {
        let g = Geometry::<f64>::euclidean(1).unwrap();
        let m = make_measure(&grid(10), &g).unwrap();
        assert_eq!(m.len(), 10);
        for i in 0..10 {
            assert_relative_eq!(m.position(i)[0], 0.05 + 0.1 * i as f64, epsilon = 1e-12);
            assert_relative_eq!(m.weight(i), 0.1);
        }
        assert_relative_eq!(m.total_mass(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(m.intensity().unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_ball_mass_by_enumeration() {
        let g = Geometry::<f64>::euclidean(1).unwrap();
        let m = make_measure(&grid(10), &g).unwrap();
        let got = m.ball_mass(&[0.5], 0.25, super::super::Closure::Closed).unwrap();
        // Cell centers 0.25, 0.35, ..., 0.75.
        assert_relative_eq!(got, 0.6, epsilon = 1e-12);
    }

    #[test]
    fn lattice_on_torus() {
        let g = Geometry::<f64>::torus(vec![10.0]).unwrap();
        let spec = MeasureSpec::Lattice {
            spacing: OneOrMany::One(1.0),
            weight: 1.0,
            offset: None,
            random_translation_seed: None,
            window: None,
            jitter_seed: None,
        };
        let m = make_measure(&spec, &g).unwrap();
        assert_eq!(m.len(), 10);
        assert_eq!(m.total_mass(), 10.0);

        let bad = MeasureSpec::Lattice {
            spacing: OneOrMany::One(3.0),
            weight: 1.0,
            offset: None,
            random_translation_seed: None,
            window: None,
            jitter_seed: None,
        };
        assert!(make_measure(&bad, &g).is_err());
    }

    #[test]
    fn lattice_random_translation_keeps_count() {
        let g = Geometry::<f64>::torus(vec![10.0, 4.0]).unwrap();
        let spec = MeasureSpec::Lattice {
            spacing: OneOrMany::One(1.0),
            weight: 1.0,
            offset: None,
            random_translation_seed: Some(9),
            window: None,
            jitter_seed: Some(1),
        };
        let m = make_measure(&spec, &g).unwrap();
        assert_eq!(m.len(), 40);
        assert!(m.position(0)[0] > 0.0);
    }

    #[test]
    fn poisson_count_mean() {
        let g = Geometry::<f64>::torus(vec![10.0, 10.0]).unwrap();
        let seeds = 1000;
        let mean = (0..seeds)
            .map(|seed| {
                let spec = MeasureSpec::Poisson { intensity: 1.0, seed, window: None, weight: 1.0 };
                let m = make_measure(&spec, &g).unwrap();
                assert_eq!(m.total_mass(), m.len() as f64);
                m.len() as f64
            })
            .sum::<f64>()
            / seeds as f64;
        // Poisson(100): standard error of the mean is 10 / sqrt(1000).
        assert!((mean - 100.0).abs() <= 3.0 * 10.0 / (seeds as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn product_measure() {
        let g = Geometry::<f64>::torus(vec![3.0, 2.0]).unwrap();
        let spec = MeasureSpec::Product {
            factors: vec![
                FactorSpec {
                    dim: 1,
                    measure: MeasureSpec::Lattice {
                        spacing: OneOrMany::One(1.0),
                        weight: 1.0,
                        offset: None,
                        random_translation_seed: None,
                        window: None,
                        jitter_seed: None,
                    },
                },
                FactorSpec {
                    dim: 1,
                    measure: MeasureSpec::GridLebesgue {
                        window: None,
                        resolution: OneOrMany::One(4),
                        scale: 1.0,
                        jitter_seed: None,
                    },
                },
            ],
        };
        let m = make_measure(&spec, &g).unwrap();
        assert_eq!(m.len(), 12);
        assert_relative_eq!(m.total_mass(), 6.0, epsilon = 1e-12);
        assert_relative_eq!(m.weight(0), 0.5);
    }

    #[test]
    fn spec_errors() {
        let g = Geometry::<f64>::euclidean(1).unwrap();
        let empty = MeasureSpec::GridLebesgue {
            window: Some(vec![[1.0, 1.0]]),
            resolution: OneOrMany::One(4),
            scale: 1.0,
            jitter_seed: None,
        };
        assert!(make_measure(&empty, &g).is_err());
        let zero_res = MeasureSpec::GridLebesgue {
            window: Some(vec![[0.0, 1.0]]),
            resolution: OneOrMany::One(0),
            scale: 1.0,
            jitter_seed: None,
        };
        assert!(make_measure(&zero_res, &g).is_err());
        let neg = MeasureSpec::Poisson { intensity: -1.0, seed: 0, window: Some(vec![[0.0, 1.0]]), weight: 1.0 };
        assert!(make_measure(&neg, &g).is_err());
        let no_window = MeasureSpec::Poisson { intensity: 1.0, seed: 0, window: None, weight: 1.0 };
        assert!(make_measure(&no_window, &g).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let s: MeasureSpec =
            serde_json::from_str(r#"{"type":"grid_lebesgue","window":[[0,2]],"resolution":2000}"#).unwrap();
        assert!(matches!(s, MeasureSpec::GridLebesgue { scale, .. } if scale == 1.0));
        let s: MeasureSpec = serde_json::from_str(r#"{"type":"atoms","atoms":[{"coords":[0.5]}]}"#).unwrap();
        assert!(matches!(s, MeasureSpec::Atoms { .. }));
    }
}
