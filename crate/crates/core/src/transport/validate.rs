use serde::Serialize;

use crate::scalar::Real;
use crate::solver::ConstrainedDensity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Negative,
    Cap,
    Row,
    Column,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation<S> {
    pub kind: ViolationKind,
    pub site: Option<usize>,
    pub center: Option<usize>,
    pub value: S,
    /// Amount by which the bound is exceeded.
    pub excess: S,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstraintReport<S> {
    pub violations: Vec<Violation<S>>,
    pub tolerance: S,
}

impl<S> ConstraintReport<S> {
    pub fn is_constrained(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Cap, row and column violations beyond `value_tol * (1 + bound)`.
pub fn validate_constrained<S: Real>(f: &ConstrainedDensity<S>) -> ConstraintReport<S> {
    let tol = f.tolerances().value;
    let slack = |bound: S| tol * (S::one() + bound.abs());
    let mut violations = Vec::new();
    for (i, j, v) in f.entries() {
        let cap = f.cap(j);
        if v < -slack(S::zero()) {
            violations.push(Violation { kind: ViolationKind::Negative, site: Some(i), center: Some(j), value: v, excess: -v });
        } else if v > cap + slack(cap) {
            violations.push(Violation { kind: ViolationKind::Cap, site: Some(i), center: Some(j), value: v, excess: v - cap });
        }
    }
    for i in 0..f.site_count() {
        let s = f.row_sum(i);
        if s > S::one() + slack(S::one()) {
            violations.push(Violation { kind: ViolationKind::Row, site: Some(i), center: None, value: s, excess: s - S::one() });
        }
    }
    for j in 0..f.center_count() {
        let s = f.column_sum(j);
        if s > S::one() + slack(S::one()) {
            violations.push(Violation { kind: ViolationKind::Column, site: None, center: Some(j), value: s, excess: s - S::one() });
        }
    }
    ConstraintReport { violations, tolerance: tol }
}

#[derive(Clone, Debug, Serialize)]
pub struct BalanceReport<S> {
    pub max_row_deviation: S,
    pub worst_site: Option<usize>,
    pub max_column_deviation: S,
    pub worst_center: Option<usize>,
    pub tolerance: S,
    pub balanced: bool,
}

/// Largest deviation of row and column sums from 1.
pub fn check_balanced<S: Real>(f: &ConstrainedDensity<S>, tol: S) -> BalanceReport<S> {
    let worst = |n: usize, sum: &dyn Fn(usize) -> S| {
        (0..n).fold((S::zero(), None), |(best, at), k| {
            let dev = (sum(k) - S::one()).abs();
            if at.is_none() || dev > best {
                (dev, Some(k))
            } else {
                (best, at)
            }
        })
    };
    let (max_row_deviation, worst_site) = worst(f.site_count(), &|i| f.row_sum(i));
    let (max_column_deviation, worst_center) = worst(f.center_count(), &|j| f.column_sum(j));
    BalanceReport {
        max_row_deviation,
        worst_site,
        max_column_deviation,
        worst_center,
        tolerance: tol,
        balanced: max_row_deviation <= tol && max_column_deviation <= tol,
    }
}
