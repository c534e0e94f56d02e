//! Stable constrained transport between atomic measures.
//!
//! Sites carry the mass of `phi`, centers the mass of `psi`. A constrained
//! density `f(i, j)` in `[0, cap]` sends at most unit mass from every site
//! and delivers at most unit mass to every center; it is stable when no site
//! and center both prefer each other to some partner they currently use.
//!
//! * [`solver`] runs the fractional Gale–Shapley stages and returns the
//!   site-optimal or center-optimal stable density.
//! * [`transport`] verifies constraints, balance, stability, optimality and
//!   monotonicity of arbitrary densities.
//! * [`voronoi`] evaluates the Voronoi transport kernel of a measure.
//! * [`coupling`] samples extra heads and runs Palm-statistics experiments.
//! * [`golden`] holds closed-form instances used as regression targets.
//!
//! Everything is generic over [`Real`]; the `f64` and `f32` aliases below fix
//! the scalar.
//!
//! ```
//! use stable_transport::{solve_site_optimal, Geometry, Measure, Point, Provenance, SolveOptions};
//!
//! let g = Geometry::euclidean(1).unwrap();
//! let phi = Measure::new(g.clone(), vec![Point::new(vec![0.0])], vec![1.0], Provenance::Explicit).unwrap();
//! let psi = Measure::new(g, vec![Point::new(vec![0.4])], vec![1.0], Provenance::Explicit).unwrap();
//! let res = solve_site_optimal(phi, psi, &SolveOptions::default()).unwrap();
//! assert!(res.converged);
//! assert_eq!(res.density.get(0, 0), 1.0);
//! ```

pub mod coupling;
pub mod error;
pub mod geometry;
pub mod golden;
pub mod io;
pub mod measures;
pub mod scalar;
pub mod solver;
pub mod transport;
pub mod voronoi;

pub use error::{Error, Result};
pub use geometry::{Geometry, Point};
pub use measures::{make_measure, AtomicMeasure, Closure, MeasureSpec, Provenance};
pub use scalar::{Real, Tolerances};
pub use solver::{
    solve_center_optimal, solve_instance, solve_site_optimal, solve_site_optimal_with_probes, ConstrainedDensity,
    ConstraintMode, Instance, SolveOptions, SolveResult, StageState,
};

pub type Measure = AtomicMeasure<f64>;
pub type Density = ConstrainedDensity<f64>;
pub type Solution = SolveResult<f64>;

pub type Measure32 = AtomicMeasure<f32>;
pub type Density32 = ConstrainedDensity<f32>;
pub type Solution32 = SolveResult<f32>;
