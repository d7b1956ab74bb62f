//! The Gauss kernel, its normalized derivatives, and their closed-form
//! polynomial moments.
//!
//! Conventions used throughout the crate:
//!
//! * `G(x,t) = (4πt)^{-N/2} exp(-|x|²/4t)` is the heat kernel on ℝᴺ;
//! * `g_α(x,t) = ((-1)^{|α|}/α!) (∂_x^α G)(x, 1+t)` — note the shifted time
//!   `1+t`, so the family is smooth down to `t = 0` and satisfies
//!   `e^{(t-s)Δ} g_α(·,s) = g_α(·,t)` under the heat flow;
//! * moments are taken against plain monomials, `∫ x^β g_α(x,t) dx`.
//!
//! Derivatives are evaluated through the Hermite recurrence
//! `H_{n+1}(z) = 2z H_n(z) - 2n H_{n-1}(z)` with `z = x/(2√(1+t))`, which is
//! numerically stable for every order admitted by
//! [`MAX_ORDER`](crate::multi_index::MAX_ORDER).

use crate::error::{Error, Result};
use crate::multi_index::{binomial, double_factorial, MultiIndex, MAX_ORDER};
use crate::{real, Scalar};

/// Exponent beyond which `exp(-|x|²/4t)` underflows `f64`; the kernel and
/// all its tabulated derivatives are returned as exact zero there.
const EXP_UNDERFLOW: f64 = 700.0;

/// The heat kernel `G(x,t)` itself (no time shift).
///
/// Errors on `t ≤ 0`.
pub fn gauss<T: Scalar>(x: &[T], t: T) -> Result<T> {
    if t <= T::zero() {
        return Err(Error::domain("gauss", format!("time {t} is not positive")));
    }
    let four_pi_t = real::<T>(4.0) * T::PI() * t;
    let mut q = T::zero();
    for &xi in x {
        q = q + xi * xi;
    }
    let arg = q / (real::<T>(4.0) * t);
    if arg > real(EXP_UNDERFLOW) {
        return Ok(T::zero());
    }
    let norm = four_pi_t.powf(-real::<T>(0.5) * real(x.len() as f64));
    Ok(norm * (-arg).exp())
}

/// Normalized kernel derivative `g_α(x,t)`.
///
/// Expects `t ≥ 0` (the effective kernel time is `1 + t`) and
/// `|α| ≤ MAX_ORDER`.  Values whose Gaussian factor underflows are exact
/// zeros, so far-field samples never degrade into subnormal noise.
pub fn g_alpha<T: Scalar>(alpha: &MultiIndex, x: &[T], t: T) -> T {
    assert_eq!(alpha.dim(), x.len(), "dimension mismatch in g_alpha");
    assert!(
        alpha.order() <= MAX_ORDER,
        "derivative order {} exceeds supported maximum {}",
        alpha.order(),
        MAX_ORDER
    );
    debug_assert!(t >= T::zero());
    let tau = T::one() + t;
    let mut value = T::one();
    for axis in 0..x.len() {
        value = value * g_axis_factor(alpha.entry(axis), x[axis], tau);
        if value == T::zero() {
            return T::zero();
        }
    }
    value
}

/// One-axis factor `(1/a!) (4πτ)^{-1/2} (2√τ)^{-a} H_a(z) e^{-z²}`,
/// `z = x/(2√τ)`.  Exposed to the field sampler, which exploits the
/// separability for outer-product evaluation.
pub(crate) fn g_axis_factor<T: Scalar>(a: u32, x: T, tau: T) -> T {
    let half_width = real::<T>(2.0) * tau.sqrt();
    let z = x / half_width;
    let z2 = z * z;
    if z2 > real(EXP_UNDERFLOW) {
        return T::zero();
    }
    let gaussian = (real::<T>(4.0) * T::PI() * tau).powf(real(-0.5)) * (-z2).exp();
    let hermite = hermite(a, z);
    let scale = half_width.powi(-(a as i32)) / real::<T>(crate::multi_index::factorial(a) as f64);
    scale * hermite * gaussian
}

/// Physicists' Hermite polynomial `H_n(z)` by forward recurrence.
fn hermite<T: Scalar>(n: u32, z: T) -> T {
    let mut h_prev = T::one();
    if n == 0 {
        return h_prev;
    }
    let two = real::<T>(2.0);
    let mut h = two * z;
    for k in 1..n {
        let next = two * z * h - two * real::<T>(k as f64) * h_prev;
        h_prev = h;
        h = next;
    }
    h
}

/// Closed-form Gaussian moment `∫ x^β G(x, 1+t) dx`.
///
/// Factorizes over axes; odd one-axis moments vanish and even ones are
/// `(k-1)!! (2(1+t))^{k/2}`.
pub fn gaussian_moment<T: Scalar>(beta: &MultiIndex, t: T) -> T {
    debug_assert!(t >= -T::one());
    let tau = T::one() + t;
    let mut value = T::one();
    for axis in 0..beta.dim() {
        let k = beta.entry(axis);
        if k % 2 == 1 {
            return T::zero();
        }
        let dfac = real::<T>(double_factorial(k.saturating_sub(1)) as f64);
        value = value * dfac * (real::<T>(2.0) * tau).powi((k / 2) as i32);
    }
    value
}

/// Closed-form mixed moment `∫ x^β g_α(x,t) dx`.
///
/// Zero unless `α ≤ β` componentwise; otherwise integration by parts gives
/// `[β!/(α!(β-α)!)] ∫ x^{β-α} G(x,1+t) dx`.
pub fn g_alpha_moment<T: Scalar>(alpha: &MultiIndex, beta: &MultiIndex, t: T) -> T {
    assert_eq!(alpha.dim(), beta.dim(), "dimension mismatch in g_alpha_moment");
    if !alpha.le(beta) {
        return T::zero();
    }
    let diff = beta.checked_sub(alpha).expect("checked by partial order");
    let mut coeff = 1.0f64;
    for axis in 0..alpha.dim() {
        coeff *= binomial(beta.entry(axis), alpha.entry(axis)) as f64;
    }
    real::<T>(coeff) * gaussian_moment(&diff, t)
}

/// Evaluation policy for kernel sampling: dimension plus whether the
/// shifted time `1+t` (the convention of the `g_α` family) is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelParams {
    pub dimension: usize,
    pub time_shift: bool,
}

impl KernelParams {
    /// Shifted-time parameters, the convention of the expansion machinery.
    pub fn shifted(dimension: usize) -> Self {
        KernelParams {
            dimension,
            time_shift: true,
        }
    }

    /// Raw heat-kernel parameters, `G(x,t)` at face value.
    pub fn raw(dimension: usize) -> Self {
        KernelParams {
            dimension,
            time_shift: false,
        }
    }

    /// Evaluate the kernel under this policy.
    pub fn evaluate<T: Scalar>(&self, x: &[T], t: T) -> Result<T> {
        assert_eq!(x.len(), self.dimension);
        let time = if self.time_shift { T::one() + t } else { t };
        gauss(x, time)
    }
}
