//! Shift-coupling experiments on torus realizations.
//!
//! A balancing density `f` between `phi = lambda * Lebesgue` and a stationary
//! `psi` gives an extra head scheme: draw `Y` from `f(0, .) psi` and shift
//! `psi` by `Y`. For Poisson `psi` the shifted measure should look like
//! `psi` plus an atom at the origin.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Geometry, Point};
use crate::measures::{make_measure, AtomicMeasure, MeasureSpec, OneOrMany};
use crate::scalar::Real;
use crate::solver::{solve_site_optimal, ConstrainedDensity, SolveOptions};

#[derive(Clone, Debug)]
pub struct CouplingSample<S> {
    pub seed: Option<u64>,
    pub realization: Arc<AtomicMeasure<S>>,
    /// Site (forward) or center (reverse) atom standing in for the origin.
    pub origin_index: usize,
    /// Distance from that atom to the origin.
    pub origin_offset: S,
    /// Index of the drawn partner atom.
    pub chosen: usize,
    pub y: Point<S>,
    /// `theta_Y` of the realization.
    pub shifted: AtomicMeasure<S>,
}

fn draw<S: Real, R: Rng + ?Sized>(indices: &[u32], masses: &[S], rng: &mut R) -> Result<usize> {
    let weights: Vec<f64> = masses.iter().map(|m| m.to_f64_lossy()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::Precondition(format!("cannot sample partner: {e}")))?;
    Ok(indices[dist.sample(rng)] as usize)
}

fn origin<S: Real>(m: &AtomicMeasure<S>) -> Result<(usize, S)> {
    m.nearest_atom(&vec![S::zero(); m.dim()]).ok_or_else(|| Error::Precondition("empty measure".into()))
}

/// Draw `Y` from the row of the site nearest the origin.
pub fn sample_extra_head<S: Real, R: Rng + ?Sized>(f: &ConstrainedDensity<S>, rng: &mut R) -> Result<CouplingSample<S>> {
    let psi = f.psi();
    let (i0, offset) = origin(f.phi())?;
    let mass = f.row_sum(i0);
    let deficit = S::one() - mass;
    if deficit > f.tolerances().mass {
        return Err(Error::Unbalanced { site: i0, mass: mass.to_f64_lossy(), deficit: deficit.to_f64_lossy() });
    }
    let (cs, vs) = f.row(i0);
    let masses: Vec<S> = cs.iter().zip(vs).map(|(&j, &v)| v * psi.weight(j as usize)).collect();
    let j = draw(cs, &masses, rng)?;
    let y = psi.point(j);
    Ok(CouplingSample {
        seed: None,
        realization: psi.clone(),
        origin_index: i0,
        origin_offset: offset,
        chosen: j,
        shifted: psi.translate(&y.0)?,
        y,
    })
}

/// Draw `Y` from the column of the center nearest the origin; the shift is
/// applied to the site measure.
pub fn reverse_extra_head<S: Real, R: Rng + ?Sized>(f: &ConstrainedDensity<S>, rng: &mut R) -> Result<CouplingSample<S>> {
    let phi = f.phi();
    let (j0, offset) = origin(f.psi())?;
    let mass = f.column_sum(j0);
    let deficit = S::one() - mass;
    if deficit > f.tolerances().mass {
        return Err(Error::UnbalancedCenter { center: j0, mass: mass.to_f64_lossy(), deficit: deficit.to_f64_lossy() });
    }
    let (is, vs) = f.column(j0);
    let masses: Vec<S> = is.iter().zip(vs).map(|(&i, &v)| v * phi.weight(i as usize)).collect();
    let i = draw(is, &masses, rng)?;
    let y = phi.point(i);
    Ok(CouplingSample {
        seed: None,
        realization: phi.clone(),
        origin_index: j0,
        origin_offset: offset,
        chosen: i,
        shifted: phi.translate(&y.0)?,
        y,
    })
}

/// `(sum_i u_i g_i(inf) / sum_i u_i, sum_j w_j h_j(inf) / sum_j w_j)`.
pub fn spatial_averages<S: Real>(f: &ConstrainedDensity<S>) -> (S, S) {
    let (phi, psi) = (f.phi(), f.psi());
    let g: S = (0..f.site_count()).map(|i| phi.weight(i) * f.row_sum(i)).sum();
    let h: S = (0..f.center_count()).map(|j| psi.weight(j) * f.column_sum(j)).sum();
    (g / phi.total_mass(), h / psi.total_mass())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingCase {
    /// Equal masses: nothing left over on either side.
    Balanced,
    /// More center mass: all sites exhausted, centers left unsated.
    ExcessCenters,
    ExcessSites,
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingCasesReport<S> {
    pub case: CouplingCase,
    pub phi_mass: S,
    pub psi_mass: S,
    /// phi-mass of sites sending less than `1 - tol`.
    pub unexhausted_mass: S,
    /// psi-mass of centers receiving less than `1 - tol`.
    pub unsated_mass: S,
    /// `sum_i u_i (1 - g_i(inf))`.
    pub site_deficit: S,
    /// `sum_j w_j (1 - h_j(inf))`.
    pub center_deficit: S,
    /// Mass conservation: `max(0, phi - psi)`.
    pub predicted_site_deficit: S,
    pub predicted_center_deficit: S,
    /// The side that should be fully used is, to `tol` relative to its mass.
    pub holds: bool,
}

/// Compare leftover mass against the gap between the two total masses.
pub fn coupling_cases_check<S: Real>(f: &ConstrainedDensity<S>, tol: S) -> CouplingCasesReport<S> {
    let (phi, psi) = (f.phi(), f.psi());
    let (pm, qm) = (phi.total_mass(), psi.total_mass());
    let g: Vec<S> = (0..f.site_count()).map(|i| f.row_sum(i)).collect();
    let h: Vec<S> = (0..f.center_count()).map(|j| f.column_sum(j)).collect();
    let unexhausted_mass = (0..g.len()).filter(|&i| g[i] < S::one() - tol).map(|i| phi.weight(i)).sum();
    let unsated_mass = (0..h.len()).filter(|&j| h[j] < S::one() - tol).map(|j| psi.weight(j)).sum();
    let site_deficit: S = (0..g.len()).map(|i| phi.weight(i) * (S::one() - g[i])).sum();
    let center_deficit: S = (0..h.len()).map(|j| psi.weight(j) * (S::one() - h[j])).sum();
    let scale = S::one() + pm.max(qm);
    let case = if (pm - qm).abs() <= tol * scale {
        CouplingCase::Balanced
    } else if qm > pm {
        CouplingCase::ExcessCenters
    } else {
        CouplingCase::ExcessSites
    };
    let predicted_site_deficit = (pm - qm).max(S::zero());
    let predicted_center_deficit = (qm - pm).max(S::zero());
    let holds = match case {
        CouplingCase::Balanced => site_deficit <= tol * scale && center_deficit <= tol * scale,
        CouplingCase::ExcessCenters => site_deficit <= tol * scale,
        CouplingCase::ExcessSites => center_deficit <= tol * scale,
    };
    CouplingCasesReport {
        case,
        phi_mass: pm,
        psi_mass: qm,
        unexhausted_mass,
        unsated_mass,
        site_deficit,
        center_deficit,
        predicted_site_deficit,
        predicted_center_deficit,
        holds,
    }
}

/// Poisson realizations on a cubic torus against a Lebesgue grid.
#[derive(Clone, Debug, Serialize)]
pub struct PoissonSetup {
    pub dim: usize,
    pub period: f64,
    /// Grid cells per axis.
    pub resolution: usize,
    pub intensity: f64,
}

impl PoissonSetup {
    pub fn geometry<S: Real>(&self) -> Result<Geometry<S>> {
        Geometry::torus(vec![S::of(self.period); self.dim])
    }

    pub fn volume(&self) -> f64 {
        self.period.powi(self.dim as i32)
    }

    /// Unit-intensity grid.
    pub fn grid<S: Real>(&self) -> Result<AtomicMeasure<S>> {
        let spec = MeasureSpec::GridLebesgue {
            window: None,
            resolution: OneOrMany::One(self.resolution),
            scale: 1.0,
            jitter_seed: None,
        };
        make_measure(&spec, &self.geometry()?)
    }

    pub fn poisson<S: Real>(&self, seed: u64) -> Result<AtomicMeasure<S>> {
        let spec = MeasureSpec::Poisson { intensity: self.intensity, seed, window: None, weight: 1.0 };
        make_measure(&spec, &self.geometry()?)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleLog {
    pub seed: u64,
    pub atoms: usize,
    pub stages: usize,
    pub converged: bool,
    pub y: Vec<f64>,
    pub origin_offset: f64,
    /// Shifted realization has an atom exactly at the origin.
    pub origin_is_atom: bool,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PalmStatistics {
    pub radii: Vec<f64>,
    /// Mean number of non-origin atoms of the shifted realization in `B(0, r)`.
    pub mean_counts: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub samples: usize,
    /// Samples lost to non-convergence or empty realizations.
    pub dropped: usize,
    pub origin_always_atom: bool,
    pub per_sample: Vec<SampleLog>,
}

impl PalmStatistics {
    /// `lambda * |B(0, r)|` for each radius.
    pub fn poisson_prediction(&self, intensity: f64, dim: usize) -> Vec<f64> {
        self.radii.iter().map(|&r| intensity * ball_volume(dim, r)).collect()
    }
}

pub fn ball_volume(dim: usize, r: f64) -> f64 {
    let d = dim as f64;
    std::f64::consts::PI.powf(d / 2.0) / gamma_of(d / 2.0 + 1.0) * r.powi(dim as i32)
}

fn gamma_of(x: f64) -> f64 {
    // Half-integers and integers only, which is all ball volumes need.
    if x == 0.5 {
        return std::f64::consts::PI.sqrt();
    }
    if x == 1.0 {
        return 1.0;
    }
    (x - 1.0) * gamma_of(x - 1.0)
}

#[derive(Clone, Debug)]
pub struct SlivnyakConfig<S> {
    pub setup: PoissonSetup,
    pub samples: usize,
    pub radii: Vec<f64>,
    pub seed: u64,
    pub solver: SolveOptions<S>,
}

fn count_within<S: Real>(m: &AtomicMeasure<S>, skip: usize, radii: &[f64]) -> Vec<usize> {
    let origin = vec![S::zero(); m.dim()];
    let mut counts = vec![0; radii.len()];
    for k in (0..m.len()).filter(|&k| k != skip) {
        let d = m.geometry().dist(&origin, m.position(k)).to_f64_lossy();
        for (c, &r) in counts.iter_mut().zip(radii) {
            if d <= r {
                *c += 1;
            }
        }
    }
    counts
}

fn one_sample<S: Real>(cfg: &SlivnyakConfig<S>, grid: &AtomicMeasure<S>, index: usize) -> Result<Option<SampleLog>> {
    let seed = cfg.seed.wrapping_add(index as u64);
    let psi = cfg.setup.poisson::<S>(seed)?;
    if psi.is_empty() {
        return Ok(None);
    }
    let volume = S::of(cfg.setup.volume());
    let phi = grid.scaled(psi.total_mass() / volume)?;
    let res = solve_site_optimal(phi, psi, &cfg.solver)?;
    if !res.converged {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = sample_extra_head(&res.density, &mut rng)?;
    let origin = vec![S::zero(); sample.shifted.dim()];
    let origin_is_atom = sample.shifted.position(sample.chosen) == origin.as_slice();
    Ok(Some(SampleLog {
        seed,
        atoms: sample.realization.len(),
        stages: res.stages_run,
        converged: res.converged,
        y: sample.y.0.iter().map(|c| c.to_f64_lossy()).collect(),
        origin_offset: sample.origin_offset.to_f64_lossy(),
        origin_is_atom,
        counts: count_within(&sample.shifted, sample.chosen, &cfg.radii),
    }))
}

fn mean_and_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    if n == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Solve, draw an extra head and count around the origin for each sample.
pub fn slivnyak_experiment<S: Real>(cfg: &SlivnyakConfig<S>) -> Result<PalmStatistics> {
    let r_max = cfg.radii.iter().copied().fold(0.0, f64::max);
    if r_max > cfg.setup.period / 4.0 {
        return Err(Error::Precondition(format!("radius {r_max} exceeds a quarter period")));
    }
    let grid = cfg.setup.grid::<S>()?;
    let logs: Vec<Option<SampleLog>> =
        (0..cfg.samples).into_par_iter().map(|k| one_sample(cfg, &grid, k)).collect::<Result<_>>()?;
    let dropped = logs.iter().filter(|l| l.is_none()).count();
    let per_sample: Vec<SampleLog> = logs.into_iter().flatten().collect();
    let (mean_counts, std_errors) = (0..cfg.radii.len())
        .map(|r| mean_and_se(per_sample.iter().map(move |s| s.counts[r] as f64)))
        .unzip();
    Ok(PalmStatistics {
        radii: cfg.radii.clone(),
        mean_counts,
        std_errors,
        samples: per_sample.len(),
        dropped,
        origin_always_atom: per_sample.iter().all(|s| s.origin_is_atom),
        per_sample,
    })
}

#[derive(Clone, Debug)]
pub struct IntensityGapConfig<S> {
    /// Grid resolution and the Poisson intensity of `psi`.
    pub setup: PoissonSetup,
    /// Intensity of the Lebesgue sites.
    pub site_intensity: f64,
    pub samples: usize,
    pub seed: u64,
    pub solver: SolveOptions<S>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IntensityGapSample {
    pub seed: u64,
    pub mean_g: f64,
    pub mean_h: f64,
    pub site_deficit: f64,
    pub center_deficit: f64,
    pub unsated_mass: f64,
    pub unexhausted_mass: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IntensityGapStatistics {
    pub samples: Vec<IntensityGapSample>,
    pub dropped: usize,
    pub mean_g: f64,
    pub mean_h: f64,
    pub mean_site_deficit: f64,
    pub mean_center_deficit: f64,
    /// `(min(1, l_psi / l_phi), min(1, l_phi / l_psi))`.
    pub predicted_averages: (f64, f64),
    /// `|l_phi - l_psi| * volume` on the deficient side.
    pub predicted_gap: f64,
}

/// Spatial averages and leftover mass at unequal intensities.
pub fn intensity_gap_experiment<S: Real>(cfg: &IntensityGapConfig<S>) -> Result<IntensityGapStatistics> {
    let grid = cfg.setup.grid::<S>()?.scaled(S::of(cfg.site_intensity))?;
    let tol = grid.tolerances().mass;
    let logs: Vec<Option<IntensityGapSample>> = (0..cfg.samples)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.seed.wrapping_add(k as u64);
            let psi = cfg.setup.poisson::<S>(seed)?;
            if psi.is_empty() {
                return Ok(None);
            }
            let res = solve_site_optimal(grid.clone(), psi, &cfg.solver)?;
            if !res.converged {
                return Ok(None);
            }
            let (g, h) = spatial_averages(&res.density);
            let rep = coupling_cases_check(&res.density, tol);
            Ok(Some(IntensityGapSample {
                seed,
                mean_g: g.to_f64_lossy(),
                mean_h: h.to_f64_lossy(),
                site_deficit: rep.site_deficit.to_f64_lossy(),
                center_deficit: rep.center_deficit.to_f64_lossy(),
                unsated_mass: rep.unsated_mass.to_f64_lossy(),
                unexhausted_mass: rep.unexhausted_mass.to_f64_lossy(),
            }))
        })
        .collect::<Result<_>>()?;
    let dropped = logs.iter().filter(|l| l.is_none()).count();
    let samples: Vec<IntensityGapSample> = logs.into_iter().flatten().collect();
    let n = samples.len().max(1) as f64;
    let avg = |f: fn(&IntensityGapSample) -> f64| samples.iter().map(f).sum::<f64>() / n;
    let (lp, lq) = (cfg.site_intensity, cfg.setup.intensity);
    Ok(IntensityGapStatistics {
        mean_g: avg(|s| s.mean_g),
        mean_h: avg(|s| s.mean_h),
        mean_site_deficit: avg(|s| s.site_deficit),
        mean_center_deficit: avg(|s| s.center_deficit),
        predicted_averages: ((lq / lp).min(1.0), (lp / lq).min(1.0)),
        predicted_gap: (lp - lq).abs() * cfg.setup.volume(),
        dropped,
        samples,
    })
}
