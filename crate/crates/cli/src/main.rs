//! `stable-transport` command-line front end.

mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stable_transport::ConstraintMode;

/// Stable constrained transport between measures.
#[derive(Parser, Debug)]
#[command(name = "stable-transport", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Constraint {
    /// `f <= 1`.
    Density,
    /// `f(., j) <= 1 / w_j`.
    Counting,
}

impl From<Constraint> for ConstraintMode {
    fn from(c: Constraint) -> Self {
        match c {
            Constraint::Density => ConstraintMode::DensityCap,
            Constraint::Counting => ConstraintMode::CountingCap,
        }
    }
}

#[derive(clap::Args, Debug)]
pub struct SolverFlags {
    /// Convergence tolerance on the per-stage change of (A, R).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_stages: Option<usize>,
    #[arg(long, value_enum)]
    pub constraint: Option<Constraint>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve an instance and write the density, a summary and optionally a plot.
    Solve {
        spec: PathBuf,
        #[command(flatten)]
        solver: SolverFlags,
        /// Let centers propose instead of sites.
        #[arg(long)]
        center_optimal: bool,
        #[arg(long)]
        plot: bool,
        /// Exit with status 3 when the iteration does not converge.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a density file against its instance.
    Verify {
        spec: PathBuf,
        density: PathBuf,
        /// Mass tolerance of the checks; defaults to ten times the file's.
        #[arg(long)]
        tol: Option<f64>,
        /// Treat an unbalanced density as a failure.
        #[arg(long)]
        require_balanced: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Territory diagnostics for every center of psi.
    Voronoi {
        spec: PathBuf,
        #[arg(long)]
        plot: bool,
        /// Also test territories for convexity.
        #[arg(long)]
        convexity: bool,
        /// Seed for ray directions in dimension four and up.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extra-head experiment: Palm counts around the origin after the shift.
    Couple {
        spec: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Comma-separated radii.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        radii: Vec<f64>,
        /// Base seed; defaults to the seed of the Poisson spec.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long)]
        plot: bool,
        /// Exit with status 3 when any sample fails to converge.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in closed-form example and compare.
    Example {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(stable_transport::golden::EXAMPLES))]
        name: String,
        #[arg(long)]
        resolution: Option<usize>,
        /// Interval length for the `interval` example.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Print the version.
    Version,
}

fn configure_threads() {
    let Ok(value) = std::env::var("PALM_TRANSPORT_THREADS") else {
        return;
    };
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("warning: could not size the thread pool: {e}");
            }
        }
        _ => eprintln!("warning: ignoring PALM_TRANSPORT_THREADS={value}"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let outcome = match cli.command {
        Command::Solve { spec, solver, center_optimal, plot, strict, out } => {
            commands::solve(&spec, &solver, center_optimal, plot, strict, out.as_deref())
        }
        Command::Verify { spec, density, tol, require_balanced, out } => {
            commands::verify(&spec, &density, tol, require_balanced, out.as_deref())
        }
        Command::Voronoi { spec, plot, convexity, seed, out } => commands::voronoi(&spec, plot, convexity, seed, out.as_deref()),
        Command::Couple { spec, samples, radii, seed, solver, plot, strict, out } => {
            commands::couple(&spec, samples, &radii, seed, &solver, plot, strict, out.as_deref())
        }
        Command::Example { name, resolution, alpha } => commands::example(&name, resolution, alpha),
        Command::Version => {
            println!("stable-transport {}", env!("CARGO_PKG_VERSION"));
            Ok(commands::Status::Ok)
        }
    };
    match outcome {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
