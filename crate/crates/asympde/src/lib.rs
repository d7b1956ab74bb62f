//! Numerical laboratory for large-time asymptotics of nonlinear parabolic
//! Cauchy problems
//!
//! ```text
//!     ∂ₜu = Δu + F(x, t, u, ∇u),   u(·,0) = φ,   x ∈ ℝᴺ, t > 0.
//! ```
//!
//! The library builds higher-order asymptotic expansions of `u` out of the
//! Gauss kernel and its derivatives, integrates the PDE with a spectral
//! heat-semigroup scheme, and measures how fast the solution approaches each
//! expansion in scaled Lebesgue norms.  The pieces are:
//!
//! * [`multi_index`] / [`kernel`] — multi-index calculus, the Gauss kernel
//!   `G(x,t) = (4πt)^{-N/2} e^{-|x|²/4t}`, its normalized derivatives
//!   `g_α(x,t) = ((-1)^{|α|}/α!) ∂^α_x G(x, 1+t)` and their closed-form
//!   polynomial moments.
//! * [`field`] — periodic uniform grids, sampled fields, norms, quadrature,
//!   and the FFT-backed heat semigroup `e^{τΔ}` with spectral derivatives.
//! * [`moments`] — corrected moment coefficients `M_α(f,t)` and the
//!   projection `P_i(t)` that removes the first `i` kernel modes from a
//!   field, leaving it with vanishing moments.
//! * [`dynamics`] — nonlinearity plug-ins: semilinear powers, convective
//!   divergence forms, a parabolic chemotaxis coupling, and small systems.
//! * [`solver`] — mild-solution time stepping: heat propagation plus a
//!   trapezoid Duhamel term, resolved by Picard iteration on each segment,
//!   with mass/moment audits.
//! * [`expansion`] — the expansion hierarchy `U_n`, the frozen-profile
//!   variant `ũ`, and the fully explicit variant `û` with limit
//!   coefficients.
//! * [`rates`] — scaled error-norm series, log-log slope fits, predicted
//!   decay exponents, and pass/fail verdicts.
//!
//! Everything numeric is generic over the scalar type through [`Scalar`]
//! (any float that the FFT backend accepts — `f32` or `f64`).  The aliases
//! below fix the `f64` instantiations that the experiments and the
//! command-line driver use.

pub mod dynamics;
pub mod error;
pub mod expansion;
pub mod field;
pub mod kernel;
pub mod moments;
pub mod multi_index;
pub mod rates;
pub mod solver;
pub mod spectral;

use num_traits::{Float, FloatConst, NumAssignOps};
use std::fmt::{Display, LowerExp};
use std::iter::Sum;

pub use error::{Error, Result};
pub use multi_index::MultiIndex;

/// Scalar type the numerical core is generic over.
///
/// Combines the float operations the analysis needs (`exp`, `powf`, `ln`,
/// π-constants) with the bounds of the FFT backend.  Implemented by `f32`
/// and `f64`; the shipped experiments all run in `f64` because their
/// tolerances (down to 1e-10) are unreachable in single precision.
pub trait Scalar:
    Float + FloatConst + rustfft::FftNum + NumAssignOps + Sum + Display + LowerExp
{
}

impl<T> Scalar for T where
    T: Float + FloatConst + rustfft::FftNum + NumAssignOps + Sum + Display + LowerExp
{
}

/// Convert an `f64` constant into the working scalar type.
#[inline]
pub(crate) fn real<T: Scalar>(x: f64) -> T {
    T::from(x).expect("constant not representable in scalar type")
}

/// Default scalar type of the shipped experiments.
pub type Real = f64;
/// `f64` grid.
pub type Grid64 = field::Grid<f64>;
/// `f64` sampled field.
pub type Field64 = field::Field<f64>;
/// `f64` moment table.
pub type MomentTable64 = moments::MomentTable<f64>;
/// `f64` nonlinearity plug-in.
pub type Nonlinearity64 = dynamics::Nonlinearity<f64>;
/// `f64` trajectory.
pub type Trajectory64 = solver::Trajectory<f64>;
/// `f64` expansion profile.
pub type ExpansionProfile64 = expansion::ExpansionProfile<f64>;
/// `f64` error-norm series.
pub type NormSeries64 = rates::NormSeries<f64>;
