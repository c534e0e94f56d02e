//! Per-stage functions of the site-optimal iteration.
//!
//! Each site keeps a row of candidate centers ordered by distance and grouped
//! into shells; rows grow on demand through the center neighbor index. Each
//! center keeps the list of sites that have ever applied to it.

use std::sync::Arc;

use rayon::prelude::*;

use super::instance::Instance;
use crate::measures::group_shells;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug)]
struct Entry<S> {
    center: u32,
    dist: S,
    a: S,
    r: S,
}

#[derive(Clone, Debug)]
struct Row<S> {
    entries: Vec<Entry<S>>,
    /// Start offset of each shell in `entries`.
    shells: Vec<u32>,
    /// Every center at distance `<= complete_upto` is present, no other is.
    complete_upto: S,
    fetch_radius: S,
    exhaustive: bool,
    /// Entries past this prefix have `a == 0`.
    reach: usize,
}

#[derive(Clone, Copy, Debug)]
struct Applicant<S> {
    dist: S,
    site: u32,
    pos: u32,
}

struct RowUpdate<S> {
    site: usize,
    a: S,
    c: S,
    applied: S,
    delta: S,
    /// `(position, newly positive, change of A)` for every entry that moved.
    changed: Vec<(u32, bool, S)>,
}

struct ColumnUpdate<S> {
    center: usize,
    r: S,
    c_prime: S,
    held: S,
    /// `(site, position, new value)`.
    changed: Vec<(u32, u32, S)>,
}

/// Change of one row entry over the last stage.
#[derive(Clone, Copy, Debug)]
struct Change<S> {
    site: u32,
    pos: u32,
    da: S,
    dr: S,
}

/// State of the iteration after some number of stages.
#[derive(Clone)]
pub struct StageState<S: Real> {
    instance: Arc<Instance<S>>,
    stage: usize,
    rows: Vec<Row<S>>,
    applicants: Vec<Vec<Applicant<S>>>,
    applicants_sorted: Vec<bool>,
    a: Vec<S>,
    c: Vec<S>,
    r: Vec<S>,
    c_prime: Vec<S>,
    applied: Vec<S>,
    held: Vec<S>,
    site_dirty: Vec<bool>,
    center_dirty: Vec<bool>,
    changes: Vec<Change<S>>,
    prev_changes: Vec<Change<S>>,
    /// Consecutive stages without a change of any radius or applicant list.
    steady_run: usize,
    structural: bool,
    jumps_blocked: bool,
}

impl<S: Real> StageState<S> {
    /// Stage 0: nothing applied, nothing rejected.
    pub fn new(instance: Arc<Instance<S>>) -> Self {
        let n = instance.site_count();
        let m = instance.center_count();
        let row = Row {
            entries: Vec::new(),
            shells: Vec::new(),
            complete_upto: S::neg_infinity(),
            fetch_radius: instance.initial_radius * S::of(0.5),
            exhaustive: false,
            reach: 0,
        };
        Self {
            stage: 0,
            rows: vec![row; n],
            applicants: vec![Vec::new(); m],
            applicants_sorted: vec![true; m],
            a: vec![S::zero(); n],
            c: vec![S::one(); n],
            r: vec![S::infinity(); m],
            c_prime: vec![S::zero(); m],
            applied: vec![S::zero(); n],
            held: vec![S::zero(); m],
            site_dirty: vec![true; n],
            center_dirty: vec![false; m],
            changes: Vec::new(),
            prev_changes: Vec::new(),
            steady_run: 0,
            structural: false,
            jumps_blocked: false,
            instance,
        }
    }

    pub fn instance(&self) -> &Arc<Instance<S>> {
        &self.instance
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    /// Recompute `A_n` from `R_{n-1}`; returns the largest entry change.
    pub fn application_step(&mut self) -> S {
        self.stage += 1;
        let inst = &*self.instance;
        let dirty = &self.site_dirty;
        let updates: Vec<RowUpdate<S>> = self
            .rows
            .par_iter_mut()
            .enumerate()
            .filter(|(i, _)| dirty[*i])
            .map(|(i, row)| apply_row(row, inst, i))
            .collect();
        self.site_dirty.iter_mut().for_each(|d| *d = false);
        std::mem::swap(&mut self.changes, &mut self.prev_changes);
        self.changes.clear();
        let mut structural = false;
        let mut delta = S::zero();
        for u in updates {
            structural |= u.a != self.a[u.site];
            self.a[u.site] = u.a;
            self.c[u.site] = u.c;
            self.applied[u.site] = u.applied;
            delta = delta.max(u.delta);
            let row = &self.rows[u.site];
            for (pos, fresh, da) in u.changed {
                let e = &row.entries[pos as usize];
                let j = e.center as usize;
                self.center_dirty[j] = true;
                self.changes.push(Change { site: u.site as u32, pos, da, dr: S::zero() });
                if fresh {
                    structural = true;
                    self.applicants[j].push(Applicant { dist: e.dist, site: u.site as u32, pos });
                    self.applicants_sorted[j] = false;
                }
            }
        }
        self.note_structure(structural, false);
        delta
    }

    /// Recompute `R_n` from `A_n`; returns the largest entry change.
    pub fn rejection_step(&mut self) -> S {
        let inst = &*self.instance;
        let rows = &self.rows;
        let dirty = &self.center_dirty;
        let updates: Vec<ColumnUpdate<S>> = self
            .applicants
            .par_iter_mut()
            .zip(self.applicants_sorted.par_iter_mut())
            .enumerate()
            .filter(|(j, _)| dirty[*j])
            .map(|(j, (apps, sorted))| {
                if !*sorted {
                    apps.sort_by(|x, y| x.dist.partial_cmp(&y.dist).unwrap().then(x.site.cmp(&y.site)));
                    *sorted = true;
                }
                reject_column(apps, rows, inst, j)
            })
            .collect();
        self.center_dirty.iter_mut().for_each(|d| *d = false);
        let mut structural = false;
        let mut delta = S::zero();
        for u in updates {
            structural |= u.r != self.r[u.center];
            self.r[u.center] = u.r;
            self.c_prime[u.center] = u.c_prime;
            self.held[u.center] = u.held;
            for (site, pos, value) in u.changed {
                let e = &mut self.rows[site as usize].entries[pos as usize];
                delta = delta.max((value - e.r).abs());
                self.changes.push(Change { site, pos, da: S::zero(), dr: value - e.r });
                e.r = value;
                self.site_dirty[site as usize] = true;
            }
        }
        self.note_structure(structural, true);
        self.changes.sort_unstable_by_key(|c| (c.site, c.pos));
        self.changes.dedup_by(|later, kept| {
            let same = later.site == kept.site && later.pos == kept.pos;
            if same {
                kept.da += later.da;
                kept.dr += later.dr;
            }
            same
        });
        delta
    }

    fn note_structure(&mut self, structural: bool, end_of_stage: bool) {
        self.structural |= structural;
        if !end_of_stage {
            return;
        }
        if self.structural {
            self.steady_run = 0;
            self.jumps_blocked = false;
        } else {
            self.steady_run += 1;
        }
        self.structural = false;
    }

    /// Whether the last two stages changed the same entries by the same
    /// amounts with every radius fixed.
    fn is_steady(&self) -> bool {
        if self.steady_run < 2 || self.changes.is_empty() || self.changes.len() != self.prev_changes.len() {
            return false;
        }
        let eps = S::epsilon() * S::of(16.0);
        let close = |x: S, y: S, scale: S| (x - y).abs() <= S::of(1e-6) * x.abs().max(y.abs()) + eps * (S::one() + scale);
        self.changes.iter().zip(&self.prev_changes).all(|(c, p)| {
            let e = &self.rows[c.site as usize].entries[c.pos as usize];
            c.site == p.site && c.pos == p.pos && close(c.da, p.da, e.a) && close(c.dr, p.dr, e.a)
        })
    }

    /// Number of further stages over which the last stage's change can be
    /// repeated verbatim without any entry reaching its cap or any gap
    /// `A - R` closing; zero when the iteration is not in such a regime.
    pub fn affine_horizon(&self) -> usize {
        if self.jumps_blocked || !self.is_steady() {
            return 0;
        }
        let inst = &*self.instance;
        let tol = inst.tol.mass * S::of(10.0);
        let two = S::of(2.0);
        let mut k = S::infinity();
        for c in &self.changes {
            if c.da < S::zero() || c.dr < S::zero() {
                return 0;
            }
            let e = &self.rows[c.site as usize].entries[c.pos as usize];
            let j = e.center as usize;
            if c.da > S::zero() {
                let slack = inst.cap(c.site as usize, j) - e.a - two * c.da - tol / inst.centers.weights[j];
                k = k.min(slack / c.da);
            }
            let closing = c.dr - c.da;
            if closing > S::zero() {
                let u = inst.sites.weights[c.site as usize];
                let margin = if u > S::zero() { tol / u } else { S::zero() };
                k = k.min((e.a - e.r - two * closing - margin) / closing);
            }
        }
        if k.is_infinite() {
            return 0;
        }
        k.floor().to_usize().unwrap_or(0)
    }

    /// Advance by `k` stages of the current steady regime at once. The next
    /// stage recomputes every touched row and column.
    pub fn jump(&mut self, k: usize) {
        let ks = S::of(k as f64);
        for c in &self.changes {
            let e = &mut self.rows[c.site as usize].entries[c.pos as usize];
            e.a += ks * c.da;
            e.r += ks * c.dr;
            self.site_dirty[c.site as usize] = true;
            self.center_dirty[e.center as usize] = true;
        }
        self.stage += k;
    }

    /// Whether the stage after a [`jump`](Self::jump) repeated the change
    /// the jump extrapolated.
    pub fn jump_confirmed(&self) -> bool {
        self.is_steady()
    }

    /// Stop extrapolating until some radius changes.
    pub fn block_jumps(&mut self) {
        self.jumps_blocked = true;
    }

    /// `a_n(i)`, `+inf` when the site can never exhaust itself.
    pub fn application_radius(&self) -> &[S] {
        &self.a
    }

    /// `r_n(j)`, `+inf` when the center is unsated.
    pub fn rejection_radius(&self) -> &[S] {
        &self.r
    }

    /// Boundary constant `c_n(i)`.
    pub fn boundary_constant(&self) -> &[S] {
        &self.c
    }

    /// Boundary constant `c'_n(j)`.
    pub fn rejection_constant(&self) -> &[S] {
        &self.c_prime
    }

    /// `sum_j (A_n - R_{n-1})(i, j) w_j` at the last application step.
    pub fn applied_mass(&self) -> &[S] {
        &self.applied
    }

    /// `sum_i (A_n - R_n)(i, j) u_i` at the last rejection step.
    pub fn held_mass(&self) -> &[S] {
        &self.held
    }

    /// Nonzero `(center, distance, A, R)` entries of a site row, in row order.
    pub fn row(&self, site: usize) -> impl Iterator<Item = (usize, S, S, S)> + '_ {
        let row = &self.rows[site];
        row.entries[..row.reach].iter().map(|e| (e.center as usize, e.dist, e.a, e.r))
    }

    pub fn application(&self, site: usize, center: usize) -> S {
        self.row(site).find(|e| e.0 == center).map_or(S::zero(), |e| e.2)
    }

    pub fn rejection(&self, site: usize, center: usize) -> S {
        self.row(site).find(|e| e.0 == center).map_or(S::zero(), |e| e.3)
    }
}

fn shell_range<S>(row: &Row<S>, k: usize) -> std::ops::Range<usize> {
    let start = row.shells[k] as usize;
    let end = row.shells.get(k + 1).map_or(row.entries.len(), |&e| e as usize);
    start..end
}

/// Append the next complete shells of candidate centers to a row.
fn extend_row<S: Real>(row: &mut Row<S>, inst: &Instance<S>, site: usize) {
    let geom = &inst.geometry;
    let query = inst.site_position(site);
    let tol = inst.tol.shell;
    let total = inst.center_count();
    loop {
        let mut radius = row.fetch_radius * S::of(2.0);
        if !(radius < geom.max_distance()) {
            radius = S::infinity();
        }
        row.fetch_radius = radius;
        let floor = row.complete_upto;
        let mut fresh: Vec<(S, u32)> = Vec::new();
        inst.center_index.for_each_within(geom, &inst.centers.coords, query, radius, |j, d| {
            if d > floor {
                fresh.push((d, j as u32));
            }
        });
        fresh.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap().then(x.1.cmp(&y.1)));
        let all = row.entries.len() + fresh.len() == total;
        let mut added = false;
        for g in group_shells(&fresh, |t| t.0, tol) {
            let anchor = fresh[g.start].0;
            if !all && anchor + tol > radius {
                break;
            }
            let members = &mut fresh[g];
            members.sort_by_key(|t| t.1);
            row.shells.push(row.entries.len() as u32);
            row.entries.extend(members.iter().map(|&(dist, center)| Entry {
                center,
                dist,
                a: S::zero(),
                r: S::zero(),
            }));
            row.complete_upto = anchor + tol;
            added = true;
        }
        if all {
            row.exhaustive = true;
            row.complete_upto = S::infinity();
        }
        if added || row.exhaustive {
            return;
        }
    }
}

fn apply_row<S: Real>(row: &mut Row<S>, inst: &Instance<S>, site: usize) -> RowUpdate<S> {
    let w = &inst.centers.weights;
    let budget = S::one() + inst.tol.mass;
    let mut cum = S::zero();
    let mut k = 0;
    // (shell index, t, residual mass on the shell)
    let boundary = loop {
        if k == row.shells.len() {
            if row.exhaustive {
                break None;
            }
            extend_row(row, inst, site);
            continue;
        }
        let range = shell_range(row, k);
        let res: S = row.entries[range]
            .iter()
            .map(|e| (inst.cap(site, e.center as usize) - e.r).max(S::zero()) * w[e.center as usize])
            .sum();
        if cum + res > budget {
            let room = S::one() - cum;
            let t = if room <= inst.tol.mass { S::zero() } else { (room / res).min(S::one()) };
            break Some((k, t, res));
        }
        cum += res;
        k += 1;
    };

    let mut delta = S::zero();
    let mut changed = Vec::new();
    let mut set = |pos: usize, value: S, e: &mut Entry<S>| {
        if value != e.a {
            delta = delta.max((value - e.a).abs());
            changed.push((pos as u32, e.a == S::zero() && value > S::zero(), value - e.a));
            e.a = value;
        }
    };
    let (full_shells, a, c, applied, new_reach) = match boundary {
        Some((k, t, res)) => {
            let range = shell_range(row, k);
            for pos in range.clone() {
                let e = &mut row.entries[pos];
                let cap = inst.cap(site, e.center as usize);
                let value = e.r + t * (cap - e.r);
                set(pos, value, e);
            }
            let radius = row.entries[range.start].dist;
            (k, radius, S::one() - t, cum + t * res, range.end)
        }
        None => (row.shells.len(), S::infinity(), S::one(), cum, row.entries.len()),
    };
    let interior_end = if full_shells < row.shells.len() { row.shells[full_shells] as usize } else { row.entries.len() };
    for pos in 0..interior_end {
        let e = &mut row.entries[pos];
        let cap = inst.cap(site, e.center as usize);
        set(pos, cap, e);
    }
    for pos in new_reach..row.reach.max(new_reach) {
        let e = &mut row.entries[pos];
        set(pos, S::zero(), e);
    }
    row.reach = new_reach;
    RowUpdate { site, a, c, applied, delta, changed }
}

fn reject_column<S: Real>(
    apps: &[Applicant<S>],
    rows: &[Row<S>],
    inst: &Instance<S>,
    center: usize,
) -> ColumnUpdate<S> {
    let u = &inst.sites.weights;
    let budget = S::one() + inst.tol.mass;
    let value_a = |x: &Applicant<S>| rows[x.site as usize].entries[x.pos as usize].a;
    let mut cum = S::zero();
    let mut changed = Vec::new();
    let mut push = |x: &Applicant<S>, value: S| {
        if value != rows[x.site as usize].entries[x.pos as usize].r {
            changed.push((x.site, x.pos, value));
        }
    };
    let mut result = None;
    let mut order: Vec<usize> = Vec::new();
    for g in group_shells(apps, |x| x.dist, inst.tol.shell) {
        let members = &apps[g.clone()];
        let mass = if members.len() == 1 {
            value_a(&members[0]) * u[members[0].site as usize]
        } else {
            order.clear();
            order.extend(0..members.len());
            order.sort_by_key(|&k| members[k].site);
            order.iter().map(|&k| value_a(&members[k]) * u[members[k].site as usize]).sum()
        };
        if result.is_none() && cum + mass > budget {
            let room = S::one() - cum;
            let c_prime = if room <= inst.tol.mass { S::one() } else { (S::one() - room / mass).max(S::zero()) };
            for x in members {
                push(x, c_prime * value_a(x));
            }
            result = Some((members[0].dist, c_prime, cum + (S::one() - c_prime) * mass));
            continue;
        }
        for x in members {
            push(x, if result.is_some() { value_a(x) } else { S::zero() });
        }
        if result.is_none() {
            cum += mass;
        }
    }
    let (r, c_prime, held) = result.unwrap_or((S::infinity(), S::zero(), cum));
    ColumnUpdate { center, r, c_prime, held, changed }
}
