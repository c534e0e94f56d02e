use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::Serialize;
use stable_transport::coupling::{slivnyak_experiment, PalmStatistics, PoissonSetup, SlivnyakConfig};
use stable_transport::io::{
    load_density, save_density, write_json, write_radii_curve, write_unstable_pairs, DensityHeader, GeometrySpec,
    InstanceSpec, SolveSummary,
};
use stable_transport::measures::OneOrMany;
use stable_transport::transport::{
    check_balanced, check_stable, mass_transport_identity, sated_or_exhausted, validate_constrained, BalanceReport,
    ConstraintReport, StabilityReport,
};
use stable_transport::voronoi::{territory_diagnostics, DiagnosticsOptions};
use stable_transport::{golden, solve_center_optimal, solve_site_optimal, Error, MeasureSpec, Result};

use crate::{svg, SolverFlags};

/// Process exit status of a command that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Failed = 1,
    NotConverged = 3,
}

/// Largest number of radii at which the Fubini identity is evaluated.
const FUBINI_RADII: usize = 256;
const FUBINI_TOL: f64 = 1e-9;

fn load_spec(path: &Path, flags: Option<&SolverFlags>) -> Result<InstanceSpec> {
    let mut spec = InstanceSpec::load(path)?;
    if let Some(f) = flags {
        if let Some(t) = f.tol {
            spec.solver.convergence_tol = t;
        }
        if let Some(n) = f.max_stages {
            spec.solver.max_stages = n;
        }
        if let Some(c) = f.constraint {
            spec.solver.constraint_mode = c.into();
        }
        // Re-run validation on the overridden options.
        spec = InstanceSpec::from_json(&serde_json::to_string(&spec)?)?;
    }
    Ok(spec)
}

fn output_dir(out: Option<&Path>, spec: &InstanceSpec) -> Result<PathBuf> {
    let dir = out.map(Path::to_path_buf).or_else(|| spec.output.dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| ".".into());
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn solve(
    spec_path: &Path,
    flags: &SolverFlags,
    center_optimal: bool,
    plot: bool,
    strict: bool,
    out: Option<&Path>,
) -> Result<Status> {
    let spec = load_spec(spec_path, Some(flags))?;
    let (phi, psi) = spec.measures::<f64>()?;
    let opts = spec.solve_options::<f64>();
    let res = if center_optimal {
        solve_center_optimal(phi.clone(), psi.clone(), &opts)?
    } else {
        solve_site_optimal(phi.clone(), psi.clone(), &opts)?
    };
    let dir = output_dir(out, &spec)?;
    let density_path = dir.join(spec.output.density.as_deref().unwrap_or("density.csv"));
    let summary_path = dir.join(spec.output.summary.as_deref().unwrap_or("summary.json"));
    let mut header = DensityHeader::for_density(&res.density);
    header.stages = Some(res.stages_run);
    header.converged = Some(res.converged);
    save_density(&res.density, &header, &density_path)?;
    write_json(&SolveSummary::new(&res), File::create(&summary_path)?)?;
    println!(
        "{} sites, {} centers: {} stages ({} evaluated), residual {:.3e}, converged: {}",
        phi.len(),
        psi.len(),
        res.stages_run,
        res.stages_computed,
        res.residual,
        res.converged
    );
    println!("wrote {} and {}", density_path.display(), summary_path.display());
    if plot || spec.output.plot {
        if phi.dim() <= 2 {
            let path = dir.join("territories.svg");
            fs::write(&path, svg::transport_plot(&res.density))?;
            println!("wrote {}", path.display());
        } else {
            eprintln!("warning: no plot for dimension {}", phi.dim());
        }
    }
    Ok(if strict && !res.converged { Status::NotConverged } else { Status::Ok })
}

#[derive(Serialize)]
struct VerifyReport {
    tolerance: f64,
    constraints: ConstraintReport<f64>,
    balance: BalanceReport<f64>,
    stability: StabilityReport<f64>,
    fubini_max_relative_error: f64,
    fubini_radii: usize,
    sated_or_exhausted: bool,
    passed: bool,
}

fn fubini_error(f: &stable_transport::ConstrainedDensity<f64>) -> (f64, usize) {
    let mut radii: Vec<f64> = f.entries().map(|(i, j, _)| f.dist(i, j)).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    if radii.len() > FUBINI_RADII {
        let step = radii.len() as f64 / FUBINI_RADII as f64;
        radii = (0..FUBINI_RADII).map(|k| radii[(k as f64 * step) as usize]).collect();
    }
    radii.push(f64::INFINITY);
    let worst = radii
        .iter()
        .map(|&t| {
            let (a, b) = mass_transport_identity(f, t);
            (a - b).abs() / a.abs().max(b.abs()).max(1.0)
        })
        .fold(0.0, f64::max);
    (worst, radii.len())
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn verify(spec_path: &Path, density_path: &Path, tol: Option<f64>, require_balanced: bool, out: Option<&Path>) -> Result<Status> {
    let spec = load_spec(spec_path, None)?;
    let (phi, psi) = spec.measures::<f64>()?;
    let (f, header) = load_density(density_path, phi, psi)?;
    let tol = tol.unwrap_or(header.mass_tol * 10.0);
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidSpec(format!("tolerance must be positive, got {tol}")));
    }
    let constraints = validate_constrained(&f);
    let balance = check_balanced(&f, tol);
    let stability = check_stable(&f, tol);
    let (fubini, fubini_radii) = fubini_error(&f);
    let soe = sated_or_exhausted(&f, tol);

    let constrained = constraints.is_constrained();
    match constraints.violations.first() {
        None => println!("constrained: PASS"),
        Some(v) => println!(
            "constrained: FAIL ({} violations; first: {:?} bound at site {:?}, center {:?}, value {})",
            constraints.violations.len(),
            v.kind,
            v.site,
            v.center,
            v.value
        ),
    }
    println!(
        "stable: {} ({} unstable pairs)",
        verdict(stability.is_stable()),
        stability.unstable_count
    );
    println!("fubini: {} (max relative error {fubini:.2e} over {fubini_radii} radii)", verdict(fubini <= FUBINI_TOL));
    println!(
        "sated or exhausted: {} (unexhausted mass {:.3e}, unsated mass {:.3e})",
        verdict(soe.holds),
        soe.unexhausted_mass + 0.0,
        soe.unsated_mass + 0.0
    );
    println!(
        "balanced: {} (max row deviation {:.3e}, max column deviation {:.3e}){}",
        if balance.balanced { "yes" } else { "no" },
        balance.max_row_deviation,
        balance.max_column_deviation,
        if require_balanced { "" } else { " [informational]" }
    );
    let passed = constrained
        && stability.is_stable()
        && fubini <= FUBINI_TOL
        && soe.holds
        && (balance.balanced || !require_balanced);
    println!("{}", if passed { "PASS" } else { "FAIL" });
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        if !stability.unstable_pairs.is_empty() {
            write_unstable_pairs(&stability.unstable_pairs, File::create(dir.join("unstable_pairs.csv"))?)?;
        }
        let report = VerifyReport {
            tolerance: tol,
            constraints,
            balance,
            stability,
            fubini_max_relative_error: fubini,
            fubini_radii,
            sated_or_exhausted: soe.holds,
            passed,
        };
        write_json(&report, File::create(dir.join("verify.json"))?)?;
    }
    Ok(if passed { Status::Ok } else { Status::Failed })
}

#[derive(Serialize)]
struct TerritorySummary {
    center: usize,
    star_shaped: bool,
    bounded: bool,
    max_extent: f64,
    convex: Option<bool>,
}

pub fn voronoi(spec_path: &Path, plot: bool, convexity: bool, seed: u64, out: Option<&Path>) -> Result<Status> {
    let spec = load_spec(spec_path, None)?;
    let (_, psi) = spec.measures::<f64>()?;
    let opts = DiagnosticsOptions { check_convexity: convexity, seed, ..DiagnosticsOptions::for_dim(psi.dim()) };
    let diagnostics = (0..psi.len()).map(|j| territory_diagnostics(&psi, j, &opts)).collect::<Result<Vec<_>>>()?;
    let summary: Vec<TerritorySummary> = diagnostics
        .iter()
        .map(|d| TerritorySummary {
            center: d.center,
            star_shaped: d.star_shaped,
            bounded: d.bounded,
            max_extent: d.max_extent,
            convex: d.convex,
        })
        .collect();
    let dir = output_dir(out, &spec)?;
    let path = dir.join("voronoi.json");
    write_json(&summary, File::create(&path)?)?;
    let star = summary.iter().filter(|s| s.star_shaped).count();
    let bounded = summary.iter().filter(|s| s.bounded).count();
    print!("{} territories: {star} star-shaped, {bounded} bounded", summary.len());
    if convexity {
        print!(", {} convex", summary.iter().filter(|s| s.convex == Some(true)).count());
    }
    println!();
    println!("wrote {}", path.display());
    if plot || spec.output.plot {
        if psi.dim() == 2 {
            let path = dir.join("voronoi.svg");
            fs::write(&path, svg::territory_plot(&psi, &diagnostics))?;
            println!("wrote {}", path.display());
        } else {
            eprintln!("warning: territory plots are planar only");
        }
    }
    Ok(Status::Ok)
}

/// Reads the Poisson setup off an instance: equal torus periods, a grid for
/// `phi` and a Poisson `psi`.
fn poisson_setup(spec: &InstanceSpec) -> Result<(PoissonSetup, u64)> {
    let GeometrySpec::Torus { period } = &spec.geometry else {
        return Err(Error::InvalidSpec("the extra-head experiment needs a torus".into()));
    };
    if period.iter().any(|&p| p != period[0]) {
        return Err(Error::InvalidSpec("the extra-head experiment needs equal periods".into()));
    }
    let resolution = match &spec.phi {
        MeasureSpec::GridLebesgue { resolution: OneOrMany::One(n), window: None, .. } => *n,
        MeasureSpec::GridLebesgue { resolution: OneOrMany::Many(v), window: None, .. } if v.iter().all(|&n| n == v[0]) => v[0],
        _ => return Err(Error::InvalidSpec("phi must be a full-torus grid with one resolution".into())),
    };
    let MeasureSpec::Poisson { intensity, seed, window: None, .. } = &spec.psi else {
        return Err(Error::InvalidSpec("psi must be a full-torus Poisson process".into()));
    };
    Ok((PoissonSetup { dim: period.len(), period: period[0], resolution, intensity: *intensity }, *seed))
}

#[allow(clippy::too_many_arguments)]
pub fn couple(
    spec_path: &Path,
    samples: usize,
    radii: &[f64],
    seed: Option<u64>,
    flags: &SolverFlags,
    plot: bool,
    strict: bool,
    out: Option<&Path>,
) -> Result<Status> {
    let spec = load_spec(spec_path, Some(flags))?;
    let (setup, spec_seed) = poisson_setup(&spec)?;
    if samples == 0 || radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidSpec("need a positive sample count and positive radii".into()));
    }
    let cfg = SlivnyakConfig {
        setup: setup.clone(),
        samples,
        radii: radii.to_vec(),
        seed: seed.unwrap_or(spec_seed),
        solver: spec.solve_options::<f64>(),
    };
    let stats: PalmStatistics = slivnyak_experiment(&cfg)?;
    let dir = output_dir(out, &spec)?;
    write_json(&stats, File::create(dir.join("palm.json"))?)?;
    write_radii_curve(&stats.radii, &stats.mean_counts, &stats.std_errors, File::create(dir.join("palm_radii.csv"))?)?;
    let prediction = stats.poisson_prediction(setup.intensity, setup.dim);
    for k in 0..stats.radii.len() {
        println!(
            "r = {}: mean count {:.4} +- {:.4} (Poisson {:.4})",
            stats.radii[k], stats.mean_counts[k], stats.std_errors[k], prediction[k]
        );
    }
    println!("{} samples, {} dropped; origin always an atom: {}", stats.samples, stats.dropped, stats.origin_always_atom);
    println!("wrote {}", dir.join("palm.json").display());
    if plot || spec.output.plot {
        let path = dir.join("palm.svg");
        fs::write(&path, svg::palm_plot(&stats, &prediction))?;
        println!("wrote {}", path.display());
    }
    Ok(if strict && stats.dropped > 0 { Status::NotConverged } else { Status::Ok })
}

pub fn example(name: &str, resolution: Option<usize>, alpha: Option<f64>) -> Result<Status> {
    let report = golden::run_example(name, resolution, alpha)?;
    println!("{}", report.line());
    Ok(if report.passed { Status::Ok } else { Status::Failed })
}
