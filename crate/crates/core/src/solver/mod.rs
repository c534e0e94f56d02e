//! Site-optimal and center-optimal Gale–Shapley stages on atomic instances.
//!
//! Stage `n` first lets every site apply (with full weight inside its
//! application radius, fractionally on the boundary shell), then lets every
//! center reject applications beyond its rejection radius. `A_n` and `R_n`
//! increase with `n`; the limit density is `f_s = A - R`.

mod density;
mod instance;
mod state;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use density::{ConstrainedDensity, SparseRows};
pub use instance::{ConstraintMode, Instance};
pub use state::StageState;

use crate::error::Result;
use crate::geometry::Point;
use crate::measures::AtomicMeasure;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions<S> {
    /// Stop once the sup-norm change of `(A, R)` over a stage is at most this.
    pub convergence_tol: S,
    /// Cap on evaluated stages.
    pub max_stages: usize,
    pub constraint_mode: ConstraintMode,
    /// Skip ahead through runs of identical stages (see [`StageState::jump`]).
    pub extrapolate: bool,
}

impl<S: Real> Default for SolveOptions<S> {
    fn default() -> Self {
        Self {
            convergence_tol: S::of(1e-12).max(S::epsilon() * S::of(4.0)),
            max_stages: 10_000,
            constraint_mode: ConstraintMode::DensityCap,
            extrapolate: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult<S: Real> {
    pub density: ConstrainedDensity<S>,
    /// Index `n` of the last stage reached.
    pub stages_run: usize,
    /// Stages actually evaluated; smaller than `stages_run` when runs of
    /// identical stages were skipped.
    pub stages_computed: usize,
    pub residual: S,
    pub converged: bool,
    /// `g_i(inf)`, the mass sent by each site.
    pub g: Vec<S>,
    /// `h_j(inf)`, the mass received by each center.
    pub h: Vec<S>,
    /// Final `A` per proposing atom (probes last), in the proposing frame.
    pub application: SparseRows<S>,
    pub application_radius: Vec<S>,
    pub rejection_radius: Vec<S>,
    /// `A - R` on probe rows.
    pub probe_density: SparseRows<S>,
}

/// Run the stages to convergence from `R_0 = 0`.
pub fn solve_site_optimal<S: Real>(
    phi: impl Into<Arc<AtomicMeasure<S>>>,
    psi: impl Into<Arc<AtomicMeasure<S>>>,
    opts: &SolveOptions<S>,
) -> Result<SolveResult<S>> {
    let instance = Instance::new(phi.into(), psi.into(), opts.constraint_mode)?;
    Ok(solve_instance(Arc::new(instance), opts, |_| {}))
}

/// The same iteration with centers proposing, transposed back so that the
/// density is indexed `(site, center)`.
pub fn solve_center_optimal<S: Real>(
    phi: impl Into<Arc<AtomicMeasure<S>>>,
    psi: impl Into<Arc<AtomicMeasure<S>>>,
    opts: &SolveOptions<S>,
) -> Result<SolveResult<S>> {
    let instance = Instance::new(phi.into(), psi.into(), opts.constraint_mode)?;
    Ok(solve_instance(Arc::new(instance.swapped()), opts, |_| {}).into_center_optimal(opts.constraint_mode))
}

/// Site-optimal solve that also evaluates the limit functions at `probes`.
pub fn solve_site_optimal_with_probes<S: Real>(
    phi: impl Into<Arc<AtomicMeasure<S>>>,
    psi: impl Into<Arc<AtomicMeasure<S>>>,
    probes: &[Point<S>],
    opts: &SolveOptions<S>,
) -> Result<SolveResult<S>> {
    let instance = Instance::with_probe_sites(phi.into(), psi.into(), opts.constraint_mode, probes)?;
    Ok(solve_instance(Arc::new(instance), opts, |_| {}))
}

const MIN_JUMP: usize = 4;

/// Run the stages on a prepared instance, calling `observe` after each
/// computed stage.
pub fn solve_instance<S: Real>(
    instance: Arc<Instance<S>>,
    opts: &SolveOptions<S>,
    mut observe: impl FnMut(&StageState<S>),
) -> SolveResult<S> {
    let mut state = StageState::new(instance.clone());
    let mut residual = S::infinity();
    let mut converged = false;
    let mut computed = 0;
    while computed < opts.max_stages {
        let k = if opts.extrapolate { state.affine_horizon() } else { 0 };
        let saved = (k >= MIN_JUMP).then(|| {
            let saved = state.clone();
            state.jump(k);
            saved
        });
        let da = state.application_step();
        let dr = state.rejection_step();
        computed += 1;
        if let Some(saved) = saved {
            if !state.jump_confirmed() {
                state = saved;
                state.block_jumps();
                continue;
            }
        }
        residual = da.max(dr);
        observe(&state);
        if residual <= opts.convergence_tol {
            converged = true;
            break;
        }
    }
    finish(&state, &instance, residual, converged, computed)
}

fn finish<S: Real>(
    state: &StageState<S>,
    inst: &Instance<S>,
    residual: S,
    converged: bool,
    computed: usize,
) -> SolveResult<S> {
    let n = inst.site_count();
    let atoms = inst.sites.atoms;
    let mut density_rows = Vec::with_capacity(atoms);
    let mut probe_rows = Vec::new();
    let mut app_rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut f = Vec::new();
        let mut a = Vec::new();
        for (j, _, av, rv) in state.row(i) {
            let v = av - rv;
            if v > S::zero() {
                f.push((j as u32, v));
            }
            if av > S::zero() {
                a.push((j as u32, av));
            }
        }
        if i < atoms {
            density_rows.push(f);
        } else {
            probe_rows.push(f);
        }
        app_rows.push(a);
    }
    let density = ConstrainedDensity::from_rows(inst.phi.clone(), inst.psi.clone(), density_rows, inst.mode)
        .expect("solver rows are well formed");
    let g = (0..density.site_count()).map(|i| density.row_sum(i)).collect();
    let h = (0..density.center_count()).map(|j| density.column_sum(j)).collect();
    SolveResult {
        density,
        stages_run: state.stage(),
        stages_computed: computed,
        residual,
        converged,
        g,
        h,
        application: SparseRows::from_rows(app_rows),
        application_radius: state.application_radius().to_vec(),
        rejection_radius: state.rejection_radius().to_vec(),
        probe_density: SparseRows::from_rows(probe_rows),
    }
}

impl<S: Real> SolveResult<S> {
    fn into_center_optimal(self, mode: ConstraintMode) -> Self {
        let swapped = self.density.transposed();
        let density = ConstrainedDensity::from_rows(
            swapped.phi().clone(),
            swapped.psi().clone(),
            (0..swapped.site_count())
                .map(|i| {
                    let (cs, vs) = swapped.row(i);
                    cs.iter().copied().zip(vs.iter().copied()).collect()
                })
                .collect(),
            mode,
        )
        .expect("transposed rows are well formed")
        .with_role_swap(true);
        Self { g: self.h, h: self.g, density, ..self }
    }
}
