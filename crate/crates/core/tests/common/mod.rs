#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stable_transport::transport::{
    check_monotonicity, check_optimality, check_stable, mass_transport_identity, monotonicity_setup, sated_or_exhausted,
    validate_constrained,
};
use stable_transport::{
    solve_center_optimal, solve_instance, solve_site_optimal, solve_site_optimal_with_probes, ConstraintMode, Geometry,
    Instance, Measure, Point, Provenance, SolveOptions,
};

pub const PERIOD: f64 = 8.0;
/// Coordinates are multiples of this, so translations by multiples of it are
/// exact in binary floating point.
pub const QUANTUM: f64 = 1.0 / (1u64 << 20) as f64;

pub struct Generic {
    pub seed: u64,
    pub phi: Arc<Measure>,
    pub psi: Arc<Measure>,
    pub shift: Vec<f64>,
}

fn dyadic(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0..(PERIOD / QUANTUM) as u64) as f64 * QUANTUM
}

/// Torus instance with a scaled midpoint grid on one side and at most 50
/// random atoms with random weights on the other.
pub fn generic_instance(seed: u64) -> Generic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=2usize);
    let g = Geometry::torus(vec![PERIOD; d]).unwrap();
    let res = if d == 1 { [32usize, 64, 128, 256][rng.random_range(0..4)] } else { [8usize, 16][rng.random_range(0..2)] };
    let h = PERIOD / res as f64;
    let cells = res.pow(d as u32);
    let mut grid = Vec::with_capacity(cells);
    for k in 0..cells {
        let (a, b) = (k / res, k % res);
        grid.push(Point::new(if d == 1 { vec![(k as f64 + 0.5) * h] } else { vec![(a as f64 + 0.5) * h, (b as f64 + 0.5) * h] }));
    }
    let scale = rng.random_range(0.3..3.0);
    let grid = Measure::new(g.clone(), grid, vec![scale * h.powi(d as i32); cells], Provenance::Explicit).unwrap();
    let n = rng.random_range(1..=50usize);
    let atoms: Vec<Point<f64>> = (0..n).map(|_| Point::new((0..d).map(|_| dyadic(&mut rng)).collect())).collect();
    let weights = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
    let atoms = Measure::new(g, atoms, weights, Provenance::Explicit).unwrap();
    let shift = (0..d).map(|_| dyadic(&mut rng)).collect();
    let (phi, psi) = if rng.random_bool(0.5) { (grid, atoms) } else { (atoms, grid) };
    Generic { seed, phi: Arc::new(phi), psi: Arc::new(psi), shift }
}

/// Small all-atomic torus instance in generic position.
pub fn atomic_instance(seed: u64, sites: usize, centers: usize) -> (Arc<Measure>, Arc<Measure>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Geometry::torus(vec![PERIOD; 2]).unwrap();
    let mut make = |n: usize| {
        let pts = (0..n).map(|_| Point::new(vec![dyadic(&mut rng), dyadic(&mut rng)])).collect();
        let w = (0..n).map(|_| rng.random_range(0.2..1.5)).collect();
        Arc::new(Measure::new(g.clone(), pts, w, Provenance::Explicit).unwrap())
    };
    let phi = make(sites);
    (phi, make(centers))
}

#[derive(Default, Debug)]
pub struct StageChecks {
    pub stages: usize,
    pub failures: Vec<String>,
}

const STAGE_SLACK: f64 = 1e-12;

/// Solve while asserting the per-stage monotonicity and sub-balance
/// properties after every stage.
pub fn solve_with_stage_checks(phi: &Arc<Measure>, psi: &Arc<Measure>) -> (stable_transport::Solution, StageChecks) {
    let inst = Arc::new(Instance::new(phi.clone(), psi.clone(), ConstraintMode::DensityCap).unwrap());
    let n = phi.len();
    let m = psi.len();
    let tol = inst.tolerances().mass * 10.0;
    let mut prev: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); n];
    let mut prev_a = vec![0.0f64; n];
    let mut prev_r = vec![f64::INFINITY; m];
    let mut sated = vec![false; m];
    let mut checks = StageChecks::default();
    let res = solve_instance(inst, &SolveOptions::default(), |st| {
        // After skipped stages the previous R is not at hand; fall back to
        // the applied mass the state records.
        let consecutive = st.stage() == checks.stages + 1;
        checks.stages = st.stage();
        let mut fail = |msg: String| {
            if checks.failures.len() < 20 {
                checks.failures.push(format!("stage {}: {msg}", st.stage()));
            }
        };
        let mut column = vec![0.0f64; m];
        for i in 0..n {
            let row: Vec<(usize, f64, f64)> = st.row(i).map(|(j, _, a, r)| (j, a, r)).collect();
            let mut applied = 0.0;
            for &(j, a, r) in &row {
                if !(r >= 0.0 && r <= a + STAGE_SLACK && a <= 1.0 + STAGE_SLACK) {
                    fail(format!("bounds broken at ({i}, {j}): A={a} R={r}"));
                }
                let (pa, pr) = prev[i].binary_search_by_key(&j, |e| e.0).map_or((0.0, 0.0), |k| (prev[i][k].1, prev[i][k].2));
                if a < pa - STAGE_SLACK || r < pr - STAGE_SLACK {
                    fail(format!("decrease at ({i}, {j}): A {pa} -> {a}, R {pr} -> {r}"));
                }
                applied += (a - pr) * psi.weight(j);
                column[j] += (a - r) * phi.weight(i);
            }
            if !consecutive {
                applied = st.applied_mass()[i];
            }
            let ai = st.application_radius()[i];
            if ai < prev_a[i] {
                fail(format!("application radius of {i} shrank: {} -> {ai}", prev_a[i]));
            }
            if applied > 1.0 + tol || (ai.is_finite() && (applied - 1.0).abs() > tol) {
                fail(format!("site {i} applies {applied} with radius {ai}"));
            }
            prev_a[i] = ai;
            prev[i] = {
                let mut r = row;
                r.sort_by_key(|e| e.0);
                r
            };
        }
        for j in 0..m {
            let rj = st.rejection_radius()[j];
            if rj > prev_r[j] {
                fail(format!("rejection radius of {j} grew: {} -> {rj}", prev_r[j]));
            }
            prev_r[j] = rj;
            if column[j] > 1.0 + tol || (rj.is_finite() && (column[j] - 1.0).abs() > tol) {
                fail(format!("center {j} holds {} with radius {rj}", column[j]));
            }
            if sated[j] && column[j] < 1.0 - tol {
                fail(format!("center {j} was sated and now holds {}", column[j]));
            }
            sated[j] |= column[j] >= 1.0 - tol;
        }
    });
    (res, checks)
}

/// Every solver property on one generic instance; returns failure messages.
pub fn check_generic(inst: &Generic) -> Vec<String> {
    let mut out = Vec::new();
    let (res, stages) = solve_with_stage_checks(&inst.phi, &inst.psi);
    out.extend(stages.failures);
    if !res.converged {
        out.push(format!("no convergence after {} stages", res.stages_run));
    }
    let f = &res.density;
    let tol = f.tolerances().mass * 10.0;
    let v = validate_constrained(f);
    if !v.is_constrained() {
        out.push(format!("{} constraint violations, first {:?}", v.violations.len(), v.violations[0]));
    }
    let st = check_stable(f, tol);
    if !st.is_stable() {
        out.push(format!("{} unstable pairs, first {:?}", st.unstable_count, st.unstable_pairs[0]));
    }
    if !sated_or_exhausted(f, tol).holds {
        out.push("sated-or-exhausted fails".into());
    }
    let mut radii: Vec<f64> = f.entries().map(|(i, j, _)| f.dist(i, j)).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    radii.push(f64::INFINITY);
    for &t in &radii {
        let (a, b) = mass_transport_identity(f, t);
        if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1.0) {
            out.push(format!("Fubini fails at t={t}: {a} vs {b}"));
            break;
        }
    }
    if res.stages_run <= 20_000 {
        let plain = SolveOptions { extrapolate: false, max_stages: 20_000, ..SolveOptions::default() };
        let p = solve_site_optimal(inst.phi.clone(), inst.psi.clone(), &plain).unwrap();
        let same = p.stages_run == res.stages_run
            && p.density.nnz() == f.nnz()
            && f.entries().zip(p.density.entries()).all(|(x, y)| x.0 == y.0 && x.1 == y.1 && (x.2 - y.2).abs() <= 1e-9);
        if !same {
            out.push("skipping identical stages changed the result".into());
        }
    }
    let moved = solve_site_optimal(
        inst.phi.translate(&inst.shift).unwrap(),
        inst.psi.translate(&inst.shift).unwrap(),
        &SolveOptions::default(),
    )
    .unwrap();
    let same = moved.stages_run == res.stages_run
        && moved.density.nnz() == f.nnz()
        && f.entries().zip(moved.density.entries()).all(|(x, y)| x.0 == y.0 && x.1 == y.1 && x.2.to_bits() == y.2.to_bits());
    if !same {
        out.push("translated instance gives a different density".into());
    }
    out.into_iter().map(|m| format!("seed {}: {m}", inst.seed)).collect()
}

/// Optimality sandwich and monotonicity under adding sites and lightening
/// centers, on a small atomic instance.
pub fn check_order_properties(seed: u64) -> Vec<String> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (phi, psi) = atomic_instance(seed, rng.random_range(4..=30), rng.random_range(4..=30));
    let opts = SolveOptions::default();
    let fs = solve_site_optimal(phi.clone(), psi.clone(), &opts).unwrap();
    let fc = solve_center_optimal(phi.clone(), psi.clone(), &opts).unwrap();
    let tol = 1e-9;
    for (name, f) in [("f_s", &fs.density), ("f_c", &fc.density)] {
        let r = check_optimality(f, &fs.density, &fc.density, tol);
        if !r.holds {
            out.push(format!("optimality sandwich fails for {name}: {r:?}"));
        }
    }

    // mu: phi with heavier atoms and two extra sites; nu: psi lighter, one atom dropped.
    let g = phi.geometry().clone();
    let mut mu_pts: Vec<Point<f64>> = (0..phi.len()).map(|i| phi.point(i)).collect();
    let mut mu_w: Vec<f64> = (0..phi.len()).map(|i| phi.weight(i) * rng.random_range(1.0..1.5)).collect();
    for _ in 0..2 {
        mu_pts.push(Point::new(vec![dyadic(&mut rng), dyadic(&mut rng)]));
        mu_w.push(rng.random_range(0.2..1.5));
    }
    let drop = rng.random_range(0..psi.len());
    let (nu_pts, nu_w): (Vec<Point<f64>>, Vec<f64>) = (0..psi.len())
        .filter(|&j| j != drop || psi.len() == 1)
        .map(|j| (psi.point(j), psi.weight(j) * rng.random_range(0.5..1.0)))
        .unzip();
    let mu = Arc::new(Measure::new(g.clone(), mu_pts, mu_w, Provenance::Explicit).unwrap());
    let nu = Arc::new(Measure::new(g, nu_pts, nu_w, Provenance::Explicit).unwrap());
    let setup = monotonicity_setup(phi.clone(), psi.clone(), mu.clone(), nu.clone()).unwrap();
    let base = solve_site_optimal_with_probes(phi, psi, &setup.probes, &opts).unwrap();
    for (name, f) in [
        ("f_s(mu, nu)", solve_site_optimal(mu.clone(), nu.clone(), &opts).unwrap().density),
        ("f_c(mu, nu)", solve_center_optimal(mu, nu, &opts).unwrap().density),
    ] {
        let r = check_monotonicity(&setup, &f, &base, tol).unwrap();
        if !r.holds {
            out.push(format!("monotonicity fails for {name}: {r:?}"));
        }
    }
    out.into_iter().map(|m| format!("seed {seed}: {m}")).collect()
}
