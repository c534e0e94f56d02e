//! End-to-end acceptance run: one PASS/FAIL line per criterion.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use stable_transport::coupling::{
    intensity_gap_experiment, slivnyak_experiment, IntensityGapConfig, PoissonSetup, SlivnyakConfig,
};
use stable_transport::golden::{self, golden_band_width, GoldenReport};
use stable_transport::voronoi::{in_territory, territory_diagnostics, voronoi_row, DiagnosticsOptions};
use stable_transport::{Geometry, Measure, Point, Provenance, SolveOptions};

struct Outcome {
    passed: bool,
    detail: String,
}

fn golden_outcome(reports: &[GoldenReport], max_seconds: Option<f64>) -> Outcome {
    let mut passed = reports.iter().all(|r| r.passed);
    let mut detail: Vec<String> = reports.iter().map(|r| format!("{}: {}", r.name, r.summary)).collect();
    if let Some(limit) = max_seconds {
        let total: f64 = reports.iter().map(|r| r.seconds).sum();
        passed &= total <= limit;
        detail.push(format!("runtime {total:.1}s (limit {limit:.0}s)"));
    }
    Outcome { passed, detail: detail.join("; ") }
}

fn failed(e: impl std::fmt::Display) -> Outcome {
    Outcome { passed: false, detail: format!("error: {e}") }
}

fn interval() -> Outcome {
    let opts = SolveOptions { convergence_tol: 1e-10, ..SolveOptions::default() };
    match golden::interval::<f64>(2.0, 2000, &opts) {
        Ok(r) => {
            let band = r.metrics["band_width"];
            let mut o = golden_outcome(&[r], Some(60.0));
            let within = (band - golden_band_width()).abs() <= 0.0015;
            o.passed &= within;
            o.detail = format!("band {band:.4} vs {:.6} (within 3 cells: {within}); {}", golden_band_width(), o.detail);
            o
        }
        Err(e) => failed(e),
    }
}

fn z_line() -> Outcome {
    let opts = SolveOptions::default();
    match golden::z_line::<f64>(11, 1100, &opts) {
        Ok(r) => {
            let share = r.metrics["share"];
            let mut o = golden_outcome(&[r], None);
            o.passed &= share >= 0.998;
            o
        }
        Err(e) => failed(e),
    }
}

fn hexagons() -> Outcome {
    let opts = SolveOptions::default();
    match (golden::z_cross_r::<f64>(4, 200, &opts), golden::square_kernel::<f64>(4, 200)) {
        (Ok(hex), Ok(square)) => {
            let share = hex.metrics["share"];
            let witness = square.metrics["witness"] == 1.0;
            let mut o = golden_outcome(&[hex, square], None);
            o.passed &= share >= 0.995 && witness;
            o
        }
        (Err(e), _) | (_, Err(e)) => failed(e),
    }
}

fn half_lines() -> Outcome {
    match golden::half_lines::<f64>(1500, &SolveOptions::default()) {
        Ok(r) => {
            let exact = r.metrics["mismatched_sites"] == 0.0;
            let mut o = golden_outcome(&[r], None);
            o.passed &= exact;
            o
        }
        Err(e) => failed(e),
    }
}

fn z_plus_r() -> Outcome {
    match golden::z_plus_r::<f64>(4, 800, &SolveOptions::default()) {
        Ok(r) => {
            let share = r.metrics["share"];
            let mut o = golden_outcome(&[r], None);
            o.passed &= share >= 0.995;
            o
        }
        Err(e) => failed(e),
    }
}

fn property_suite() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut stages = 0;
    for seed in 0..100u64 {
        let inst = common::generic_instance(seed);
        failures.extend(common::check_generic(&inst));
        stages = stages.max(solve_stages(&inst));
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        passed: failures.is_empty() && secs <= 600.0,
        detail: format!(
            "100 instances, {} failures{}; longest run {stages} stages; {secs:.1}s (limit 600s)",
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    }
}

fn solve_stages(inst: &common::Generic) -> usize {
    stable_transport::solve_site_optimal(inst.phi.clone(), inst.psi.clone(), &SolveOptions::default())
        .map(|r| r.stages_run)
        .unwrap_or(0)
}

fn order_suite() -> Outcome {
    let failures: Vec<String> = (0..20u64).flat_map(common::check_order_properties).collect();
    Outcome {
        passed: failures.is_empty(),
        detail: format!(
            "20 instances, {} failures{}",
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    }
}

/// Poisson process of intensity `lambda` on the torus plus an atom at the
/// origin, counting the other atoms within `r` of the origin.
fn direct_palm_counts(lambda: f64, period: f64, r: f64, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = Poisson::new(lambda * period * period).unwrap();
    let wrap = |x: f64| {
        let x = x.rem_euclid(period);
        x.min(period - x)
    };
    let counts: Vec<f64> = (0..samples)
        .map(|_| {
            let n = count.sample(&mut rng) as usize;
            (0..n)
                .filter(|_| {
                    let (x, y) = (wrap(rng.random_range(0.0..period)), wrap(rng.random_range(0.0..period)));
                    x * x + y * y <= r * r
                })
                .count() as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / samples as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (samples as f64 - 1.0);
    (mean, (var / samples as f64).sqrt())
}

fn slivnyak() -> Outcome {
    let start = Instant::now();
    let (oracle, oracle_se) = direct_palm_counts(1.0, 10.0, 1.0, 100_000, 99);
    let cfg = SlivnyakConfig {
        setup: PoissonSetup { dim: 2, period: 10.0, resolution: 100, intensity: 1.0 },
        samples: 500,
        radii: vec![1.0],
        seed: 20_000,
        solver: SolveOptions::<f64>::default(),
    };
    match slivnyak_experiment(&cfg) {
        Ok(stats) => {
            let (mean, se) = (stats.mean_counts[0], stats.std_errors[0]);
            let secs = start.elapsed().as_secs_f64();
            let near_pi = (mean - PI).abs() <= 3.0 * se;
            let oracle_ok = (oracle - PI).abs() <= 3.0 * oracle_se;
            Outcome {
                passed: near_pi && oracle_ok && stats.origin_always_atom && stats.dropped == 0 && secs <= 1800.0,
                detail: format!(
                    "mean count {mean:.4} +- {se:.4} vs pi (|diff| = {:.2} se); direct simulation {oracle:.4} +- {oracle_se:.4}; \
                     origin always an atom: {}; {} samples, {} dropped; {secs:.1}s",
                    (mean - PI).abs() / se,
                    stats.origin_always_atom,
                    stats.samples,
                    stats.dropped
                ),
            }
        }
        Err(e) => failed(e),
    }
}

fn intensity_gap() -> Outcome {
    let setup = PoissonSetup { dim: 2, period: 10.0, resolution: 100, intensity: 2.0 };
    let volume = setup.volume();
    let cfg = IntensityGapConfig { setup, site_intensity: 1.0, samples: 50, seed: 40_000, solver: SolveOptions::<f64>::default() };
    match intensity_gap_experiment(&cfg) {
        Ok(s) => {
            let averages = (s.mean_g - 1.0).abs() <= 0.02 && (s.mean_h - 0.5).abs() <= 0.02;
            let target = (1.0f64 - 2.0).abs() * volume;
            let deficit = (s.mean_center_deficit - target).abs() <= 0.1 * target;
            Outcome {
                passed: averages && deficit && s.dropped == 0,
                detail: format!(
                    "averages ({:.4}, {:.4}) vs (1, 0.5); unsated center mass {:.2} vs gap x volume {target:.0}; {} dropped",
                    s.mean_g,
                    s.mean_h,
                    s.mean_center_deficit,
                    s.dropped
                ),
            }
        }
        Err(e) => failed(e),
    }
}

fn voronoi() -> Outcome {
    let g = Geometry::euclidean(2).unwrap();
    let mut disagreements = 0usize;
    let mut skipped = 0usize;
    let mut worst_norm: f64 = 0.0;
    let mut exact_norm = true;
    for set in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + set);
        let n = rng.random_range(5..=40);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)]).collect();
        let counting =
            Measure::new(g.clone(), pts.iter().map(|p| Point::new(p.to_vec())).collect(), vec![1.0; n], Provenance::Explicit)
                .unwrap();
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let weighted =
            Measure::new(g.clone(), pts.iter().map(|p| Point::new(p.to_vec())).collect(), weights, Provenance::Explicit)
                .unwrap();
        for _ in 0..10_000 {
            let x = [rng.random_range(-2.0..12.0), rng.random_range(-2.0..12.0)];
            let mut by_dist: Vec<(f64, usize)> =
                pts.iter().enumerate().map(|(j, p)| ((p[0] - x[0]).hypot(p[1] - x[1]), j)).collect();
            by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
            if by_dist[1].0 - by_dist[0].0 <= 1e-9 * (1.0 + by_dist[1].0) {
                skipped += 1;
                continue;
            }
            let nearest = by_dist[0].1;
            let row = voronoi_row(&counting, &x).unwrap();
            let members: Vec<usize> = row.values.iter().map(|e| e.0).collect();
            if members != [nearest] || !in_territory(&counting, &x, nearest).unwrap() || in_territory(&counting, &x, by_dist[1].1).unwrap() {
                disagreements += 1;
            }
            exact_norm &= row.values.iter().map(|&(j, v)| v * counting.weight(j)).sum::<f64>() == 1.0;
            let row = voronoi_row(&weighted, &x).unwrap();
            if row.radius.is_finite() {
                let total: f64 = row.values.iter().map(|&(j, v)| v * weighted.weight(j)).sum();
                worst_norm = worst_norm.max((total - 1.0).abs());
            }
        }
    }
    let triangle = Measure::new(
        g,
        (0..3).map(|k| Point::new(vec![(2.0 * PI * k as f64 / 3.0).cos(), (2.0 * PI * k as f64 / 3.0).sin()])).collect(),
        vec![0.5; 3],
        Provenance::Explicit,
    )
    .unwrap();
    let opts = DiagnosticsOptions { check_convexity: true, ..DiagnosticsOptions::for_dim(2) };
    let diag = territory_diagnostics(&triangle, 0, &opts).unwrap();
    let star = diag.star_shaped && diag.convex == Some(false);
    Outcome {
        passed: disagreements == 0 && exact_norm && worst_norm <= 1e-12 && star,
        detail: format!(
            "{disagreements} disagreements in 100000 queries ({skipped} on bisectors skipped); counting rows sum to 1 exactly: \
             {exact_norm}; weighted rows within {worst_norm:.1e} of 1; triangle territory star-shaped: {}, convex: {:?}",
            diag.star_shaped, diag.convex
        ),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 golden interval", interval),
        ("2 integer atoms on a circle", z_line),
        ("3 hexagon cells and square kernel", hexagons),
        ("4 half-lines", half_lines),
        ("5 lines plus integer atoms", z_plus_r),
        ("6 generic property suite", property_suite),
        ("7 optimality and monotonicity", order_suite),
        ("8 Palm counts after the extra head", slivnyak),
        ("9 unequal intensities", intensity_gap),
        ("10 Voronoi kernels", voronoi),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut all = true;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        all &= o.passed;
        println!(
            "{}: criterion {name} [{:.1}s]: {}",
            if o.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
