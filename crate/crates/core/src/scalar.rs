//! Scalar abstraction.
//!
//! Everything in the crate is generic over [`Real`], implemented for `f32` and
//! `f64`. Tolerances are derived from the scalar's machine epsilon so that the
//! same code paths behave sensibly in both precisions.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar used for coordinates, masses and density values.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`; panics only on values no float can hold.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Real")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Default relative tolerance for grouping distances into tie classes.
    fn shell_unit() -> Self {
        Self::of(1e-9).max(Self::epsilon() * Self::of(64.0))
    }

    /// Default absolute tolerance for comparing accumulated masses against 1.
    fn mass_unit() -> Self {
        Self::of(1e-10).max(Self::epsilon() * Self::of(1e4))
    }

    /// Default tolerance on density values (caps, desire predicates).
    fn value_unit() -> Self {
        Self::of(1e-9).max(Self::epsilon() * Self::of(1e3))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Tolerances shared by every computation on one instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances<S> {
    /// Two distances from the same query point lie on one sphere iff they
    /// differ by at most this much.
    pub shell: S,
    /// Slack when comparing cumulative masses against the unit budget.
    pub mass: S,
    /// Slack on density values.
    pub value: S,
}

impl<S: Real> Tolerances<S> {
    /// Tolerances for an instance whose coordinates have magnitude at most
    /// `coordinate_magnitude`.
    pub fn for_magnitude(coordinate_magnitude: S) -> Self {
        Self {
            shell: S::shell_unit() * (S::one() + coordinate_magnitude.abs()),
            mass: S::mass_unit(),
            value: S::value_unit(),
        }
    }
}
