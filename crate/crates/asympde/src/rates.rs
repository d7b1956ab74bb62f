//! Scaled error-norm series, log-log slope fitting, and decay-rate
//! verdicts.
//!
//! The decay theorems bound quantities of the form
//!
//! ```text
//!     t^{(N/2)(1-1/q)+j/2} ‖∇ʲ[u(t) − U(t)]‖_q ≲ (1+t)^{-γ} (· log(2+t))
//! ```
//!
//! A [`NormSeries`] records the left side at the trajectory's times,
//! [`fit_slope`] turns it into a measured exponent, and a [`RateVerdict`]
//! compares that against the predicted `γ`.  All verdicts are one-sided:
//! the theorems are upper bounds, so a steeper measured slope passes.

use crate::error::{Error, Result};
use crate::expansion::{ExpansionProfile, ExpansionVariant};
use crate::field::{lq_norm, weighted_l1_norm, Field};
use crate::solver::Trajectory;
use crate::spectral::Spectral;
use crate::{real, Scalar};
use std::fmt::Write as _;

/// Fixed margin used for verdicts on weighted-norm series: the weighted
/// bound holds with loss `t^σ` for every `σ > 0`, so any fixed small σ
/// yields a valid testable exponent.
pub const WEIGHTED_SIGMA: f64 = 0.05;

/// A scaled error-norm series: pairs `(t, scaled value)` at strictly
/// increasing times, with exact zeros dropped (the count is kept so the
/// drop is visible, not silent).
#[derive(Debug, Clone)]
pub struct NormSeries<T: Scalar> {
    q: T,
    j: usize,
    weight: Option<T>,
    points: Vec<(T, T)>,
    dropped: usize,
}

impl<T: Scalar> NormSeries<T> {
    /// Validate and build a series.  Exact-zero values are dropped and
    /// counted; negative, NaN, or non-finite values are refused, as are
    /// non-increasing times.
    pub fn from_points(
        q: T,
        j: usize,
        weight: Option<T>,
        raw: Vec<(T, T)>,
    ) -> Result<Self> {
        if !(q >= T::one()) {
            return Err(Error::domain("norm series", format!("q = {q} must be ≥ 1")));
        }
        if j > 1 {
            return Err(Error::domain(
                "norm series",
                format!("derivative order j = {j} not supported (j ∈ {{0,1}})"),
            ));
        }
        if let Some(l) = weight {
            if !(l >= T::zero()) {
                return Err(Error::domain(
                    "norm series",
                    format!("weight l = {l} must be ≥ 0"),
                ));
            }
        }
        let mut points = Vec::with_capacity(raw.len());
        let mut dropped = 0usize;
        let mut prev_t: Option<T> = None;
        for (t, v) in raw {
            if let Some(p) = prev_t {
                if !(t > p) {
                    return Err(Error::domain(
                        "norm series",
                        format!("times must increase strictly ({p} then {t})"),
                    ));
                }
            }
            prev_t = Some(t);
            if !v.is_finite() || v < T::zero() {
                return Err(Error::NonFinite {
                    t: t.to_f64().unwrap_or(f64::NAN),
                });
            }
            if v == T::zero() {
                dropped += 1;
            } else {
                points.push((t, v));
            }
        }
        Ok(NormSeries {
            q,
            j,
            weight,
            points,
            dropped,
        })
    }

    pub fn q(&self) -> T {
        self.q
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn weight(&self) -> Option<T> {
        self.weight
    }

    pub fn points(&self) -> &[(T, T)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of exact-zero values removed at construction.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Last recorded time, if any point survived.
    pub fn horizon(&self) -> Option<T> {
        self.points.last().map(|&(t, _)| t)
    }

    /// CSV with header `t,scaled_value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,scaled_value\n");
        for &(t, v) in &self.points {
            writeln!(out, "{t:.16e},{v:.16e}").expect("string write");
        }
        out
    }
}

/// Outcome of comparing a fitted slope against a predicted decay exponent.
#[derive(Debug, Clone, Copy)]
pub struct RateVerdict<T: Scalar> {
    pub fitted_slope: T,
    pub predicted_exponent: T,
    pub log_correction: bool,
    pub tolerance: T,
    pub window: (T, T),
    /// One-sided: `fitted_slope ≤ −predicted_exponent + tolerance`.
    pub pass: bool,
}

impl<T: Scalar> RateVerdict<T> {
    /// Informational sharpness: the measured slope sits within `margin` of
    /// the prediction (never a failure criterion — the bounds are one-sided).
    pub fn sharp(&self, margin: T) -> bool {
        (self.fitted_slope + self.predicted_exponent).abs() <= margin
    }

    /// One CSV row `fitted_slope,predicted_exponent,log,window_lo,window_hi,pass`.
    pub fn csv_row(&self) -> String {
        format!(
            "{:.6e},{:.6e},{},{:.6e},{:.6e},{}",
            self.fitted_slope,
            self.predicted_exponent,
            self.log_correction,
            self.window.0,
            self.window.1,
            if self.pass { "pass" } else { "fail" }
        )
    }
}

impl<T: Scalar> std::fmt::Display for RateVerdict<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "slope {:.4} vs predicted -{:.4}{} on [{:.3}, {:.3}] (tol {:.3}): {}",
            self.fitted_slope,
            self.predicted_exponent,
            if self.log_correction { " (log-corrected)" } else { "" },
            self.window.0,
            self.window.1,
            self.tolerance,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Decay exponent predicted for `u − U_n`: `min{K/2, (n+1)(A−1)}`, with a
/// logarithmic correction exactly on the balance `2(n+1)(A−1) = K`.
pub fn predicted_rate<T: Scalar>(k_weight: T, a: T, n: usize) -> Result<(T, bool)> {
    if !(a > T::one()) {
        return Err(Error::domain(
            "predicted_rate",
            format!("decay exponent A = {a} must exceed 1"),
        ));
    }
    if !(k_weight >= T::zero()) {
        return Err(Error::domain(
            "predicted_rate",
            format!("weight exponent K = {k_weight} must be ≥ 0"),
        ));
    }
    let half = real::<T>(0.5);
    let n_term = real::<T>((n + 1) as f64) * (a - T::one());
    let exponent = (k_weight * half).min(n_term);
    let log_flag = ((n_term + n_term) - k_weight).abs() <= real(1e-12);
    Ok((exponent, log_flag))
}

/// Decay exponent predicted for the frozen- and limit-coefficient
/// modifications: `min{K/2, 2(A−1)}`, log correction exactly when
/// `K = 4(A−1)`.
pub fn predicted_rate_tilde<T: Scalar>(k_weight: T, a: T) -> Result<(T, bool)> {
    if !(a > T::one()) {
        return Err(Error::domain(
            "predicted_rate_tilde",
            format!("decay exponent A = {a} must exceed 1"),
        ));
    }
    if !(k_weight >= T::zero()) {
        return Err(Error::domain(
            "predicted_rate_tilde",
            format!("weight exponent K = {k_weight} must be ≥ 0"),
        ));
    }
    let two = real::<T>(2.0);
    let tail = two * (a - T::one());
    let exponent = (k_weight / two).min(tail);
    let log_flag = (k_weight - two * tail).abs() <= real(1e-12);
    Ok((exponent, log_flag))
}

/// Decay exponent predicted for weighted series: the weighted bound loses
/// an arbitrarily small power, standardized here to [`WEIGHTED_SIGMA`]:
/// `min{K/2 − σ, (n+1)(A−1)}`, never log-corrected.
pub fn predicted_rate_weighted<T: Scalar>(k_weight: T, a: T, n: usize) -> Result<(T, bool)> {
    let (_, _) = predicted_rate(k_weight, a, n)?;
    let half = real::<T>(0.5);
    let n_term = real::<T>((n + 1) as f64) * (a - T::one());
    Ok(((k_weight * half - real(WEIGHTED_SIGMA)).min(n_term), false))
}

/// Measure the scaled error-norm series of a trajectory against an
/// expansion profile, at every recorded time `t ≥ 1`.
///
/// Unweighted (`weight = None`): `t^{(N/2)(1−1/q)+j/2} ‖∇ʲ(u−U)‖_q`.
/// Weighted (`weight = Some(l)`): `t^{j/2} (1+t)^{−l/2} |||∇ʲ(u−U)|||_l`
/// with the `(1+|x|)^l`-weighted L¹ norm (`q` is ignored in the scaling but
/// recorded).  Multi-component states enter through the pointwise Euclidean
/// magnitude across components (and axes, for `j = 1`).
pub fn measure_error_series<T: Scalar>(
    trajectory: &Trajectory<T>,
    profile: &ExpansionProfile<T>,
    q: T,
    j: usize,
    weight: Option<T>,
) -> Result<NormSeries<T>> {
    if profile.grid() != trajectory.grid() {
        return Err(Error::GridMismatch);
    }
    if profile.components() != trajectory.components() {
        return Err(Error::domain(
            "measure_error_series",
            format!(
                "profile has {} components, trajectory {}",
                profile.components(),
                trajectory.components()
            ),
        ));
    }
    if j > 1 {
        return Err(Error::domain(
            "measure_error_series",
            format!("derivative order j = {j} not supported (j ∈ {{0,1}})"),
        ));
    }
    let grid = trajectory.grid();
    let spectral = if j == 1 { Some(Spectral::new(grid)) } else { None };
    let n_over_2 = real::<T>(grid.dim() as f64 / 2.0);
    let half = real::<T>(0.5);

    let mut raw = Vec::new();
    for (k, &t) in trajectory.times().iter().enumerate() {
        if !(t >= T::one()) {
            continue;
        }
        // pointwise squared magnitude of the error (all components; all
        // axes when j = 1)
        let mut sq = Field::zeros(grid);
        for c in 0..trajectory.components() {
            let err = trajectory.state(k)[c].sub(&profile.evaluate(c, t)?);
            if let Some(spec) = &spectral {
                for axis in 0..grid.dim() {
                    let d = spec.derivative(&err, axis);
                    sq = sq.zip_map(&d, |s, v| s + v * v);
                }
            } else {
                sq = sq.zip_map(&err, |s, v| s + v * v);
            }
        }
        let magnitude = sq.map(|s| s.sqrt());
        let value = match weight {
            None => {
                let scale = t.powf(n_over_2 * (T::one() - T::one() / q) + real::<T>(j as f64) * half);
                scale * lq_norm(&magnitude, q)?
            }
            Some(l) => {
                let scale = t.powf(real::<T>(j as f64) * half)
                    * (T::one() + t).powf(-l * half);
                scale * weighted_l1_norm(&magnitude, l)?
            }
        };
        raw.push((t, value));
    }
    NormSeries::from_points(q, j, weight, raw)
}

/// Least-squares slope of `log(value)` against `log(t)` over the points
/// with `t ∈ [window.0, window.1]`; with `log_corrected`, values are first
/// divided by `log(2+t)`.  Needs at least 8 points in the window.
pub fn fit_slope<T: Scalar>(
    series: &NormSeries<T>,
    window: (T, T),
    log_corrected: bool,
) -> Result<T> {
    let two = real::<T>(2.0);
    let pts: Vec<(T, T)> = series
        .points()
        .iter()
        .filter(|&&(t, _)| t >= window.0 && t <= window.1)
        .map(|&(t, v)| {
            let v = if log_corrected { v / (two + t).ln() } else { v };
            (t.ln(), v.ln())
        })
        .collect();
    if pts.len() < 8 {
        return Err(Error::TooFewPoints {
            needed: 8,
            got: pts.len(),
        });
    }
    let n = real::<T>(pts.len() as f64);
    let mean_x = pts.iter().map(|&(x, _)| x).sum::<T>() / n;
    let mean_y = pts.iter().map(|&(_, y)| y).sum::<T>() / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for &(x, y) in &pts {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == T::zero() {
        return Err(Error::domain("fit_slope", "window has no time spread"));
    }
    Ok(sxy / sxx)
}

/// Default fit window `[T/10, T/2]` for a series reaching horizon `T`:
/// early times carry the transient, late times the truncation effects.
pub fn default_window<T: Scalar>(series: &NormSeries<T>) -> Result<(T, T)> {
    let horizon = series.horizon().ok_or(Error::TooFewPoints {
        needed: 8,
        got: 0,
    })?;
    Ok((horizon / real(10.0), horizon / real(2.0)))
}

/// Verdict for a series against an explicitly supplied prediction.
pub fn verdict_with_prediction<T: Scalar>(
    series: &NormSeries<T>,
    exponent: T,
    log_flag: bool,
    tolerance: T,
    window: Option<(T, T)>,
) -> Result<RateVerdict<T>> {
    let window = match window {
        Some(w) => w,
        None => default_window(series)?,
    };
    let slope = fit_slope(series, window, log_flag)?;
    Ok(RateVerdict {
        fitted_slope: slope,
        predicted_exponent: exponent,
        log_correction: log_flag,
        tolerance,
        window,
        pass: slope <= -exponent + tolerance,
    })
}

/// Verdict for a measured series against the decay theorem matching the
/// profile variant: the inductive profiles use `min{K/2, (n+1)(A−1)}`, the
/// frozen- and limit-coefficient modifications use `min{K/2, 2(A−1)}`.
/// Weighted series use the weighted prediction regardless of variant.
pub fn verdict<T: Scalar>(
    series: &NormSeries<T>,
    k_weight: T,
    a: T,
    variant: ExpansionVariant,
    tolerance: T,
    window: Option<(T, T)>,
) -> Result<RateVerdict<T>> {
    let (exponent, log_flag) = if series.weight().is_some() {
        let n = match variant {
            ExpansionVariant::Un(n) => n,
            ExpansionVariant::Tilde(_) | ExpansionVariant::Hat => 1,
        };
        predicted_rate_weighted(k_weight, a, n)?
    } else {
        match variant {
            ExpansionVariant::Un(n) => predicted_rate(k_weight, a, n)?,
            ExpansionVariant::Tilde(_) | ExpansionVariant::Hat => {
                predicted_rate_tilde(k_weight, a)?
            }
        }
    };
    verdict_with_prediction(series, exponent, log_flag, tolerance, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn synthetic<F: Fn(f64) -> f64>(f: F) -> NormSeries<f64> {
        let raw: Vec<(f64, f64)> = (0..60)
            .map(|i| {
                let t = 1.0 * 1.1f64.powi(i);
                (t, f(t))
            })
            .collect();
        NormSeries::from_points(1.0, 0, None, raw).unwrap()
    }

    #[test]
    fn predicted_rate_examples() {
        assert_eq!(predicted_rate(2.0, 1.5, 0).unwrap(), (0.5, false));
        assert_eq!(predicted_rate(2.0, 1.5, 1).unwrap(), (1.0, true));
        assert_eq!(predicted_rate(0.0, 2.0, 0).unwrap(), (0.0, false));
        assert_eq!(predicted_rate(0.0, 2.0, 3).unwrap(), (0.0, false));
        assert!(predicted_rate(2.0, 1.0, 0).is_err());
        assert!(predicted_rate(-1.0, 2.0, 0).is_err());
        // the pure heat flow has infinite decay exponent: the weight wins
        let (e, log) = predicted_rate(2.0, f64::INFINITY, 0).unwrap();
        assert_eq!(e, 1.0);
        assert!(!log);
    }

    #[test]
    fn predicted_rate_tilde_examples() {
        assert_eq!(predicted_rate_tilde(2.0, 1.5).unwrap(), (1.0, true));
        assert_eq!(predicted_rate_tilde(1.0, 2.0).unwrap(), (0.5, false));
        assert_eq!(predicted_rate_tilde(6.0, 1.5).unwrap(), (1.0, false));
        assert!(predicted_rate_tilde(2.0, 0.9).is_err());
    }

    #[test]
    fn weighted_prediction_subtracts_sigma() {
        let (e, log) = predicted_rate_weighted::<f64>(2.0, 1.5, 1).unwrap();
        assert!((e - 0.95).abs() < 1e-14);
        assert!(!log);
        // the n-term can still be the binding one
        let (e, _) = predicted_rate_weighted::<f64>(2.0, 1.5, 0).unwrap();
        assert!((e - 0.5).abs() < 1e-14);
    }

    #[test]
    fn fit_recovers_exact_power_laws() {
        let s = synthetic(|t| t.powf(-1.0));
        let w = (2.0, 50.0);
        assert!((fit_slope(&s, w, false).unwrap() + 1.0).abs() < 1e-6);

        let s = synthetic(|t| 3.0 * t.powf(-0.5));
        assert!((fit_slope(&s, w, false).unwrap() + 0.5).abs() < 1e-6);

        let s = synthetic(|t| t.powf(-1.0) * (2.0 + t).ln());
        assert!((fit_slope(&s, w, true).unwrap() + 1.0).abs() < 1e-3);
    }

    #[test]
    fn fit_requires_enough_points() {
        let s = synthetic(|t| t.powf(-1.0));
        match fit_slope(&s, (2.0, 2.5), false) {
            Err(Error::TooFewPoints { needed: 8, got }) => assert!(got < 8),
            other => panic!("expected TooFewPoints, got {other:?}"),
        }
    }

    #[test]
    fn series_validation_and_zero_dropping() {
        let s = NormSeries::from_points(
            1.0,
            0,
            None,
            vec![(1.0, 0.5), (2.0, 0.0), (3.0, 0.25), (4.0, 0.0)],
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dropped(), 2);
        assert_eq!(s.horizon(), Some(3.0));

        assert!(NormSeries::<f64>::from_points(0.5, 0, None, vec![]).is_err());
        assert!(NormSeries::<f64>::from_points(1.0, 2, None, vec![]).is_err());
        assert!(NormSeries::from_points(1.0, 0, Some(-1.0), vec![(1.0, 1.0)]).is_err());
        assert!(NormSeries::from_points(1.0, 0, None, vec![(2.0, 1.0), (2.0, 1.0)]).is_err());
        assert!(NormSeries::from_points(1.0, 0, None, vec![(1.0, -0.1)]).is_err());
        assert!(NormSeries::from_points(1.0, 0, None, vec![(1.0, f64::NAN)]).is_err());
    }

    #[test]
    fn verdicts_are_one_sided() {
        let s = synthetic(|t| t.powf(-1.0));
        // actual decay is faster than predicted: pass
        let v = verdict_with_prediction(&s, 0.5, false, 0.1, Some((2.0, 50.0))).unwrap();
        assert!(v.pass);
        assert!(!v.sharp(0.15));
        // prediction steeper than reality: fail
        let v = verdict_with_prediction(&s, 1.5, false, 0.1, Some((2.0, 50.0))).unwrap();
        assert!(!v.pass);
        // sharp case
        let v = verdict_with_prediction(&s, 1.0, false, 0.1, Some((2.0, 50.0))).unwrap();
        assert!(v.pass);
        assert!(v.sharp(0.15));
    }

    #[test]
    fn default_window_is_a_tenth_to_a_half() {
        let s = synthetic(|t| t.powf(-1.0));
        let h = s.horizon().unwrap();
        let w = default_window(&s).unwrap();
        assert!((w.0 - h / 10.0).abs() < 1e-12);
        assert!((w.1 - h / 2.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let s = NormSeries::from_points(1.0, 0, None, vec![(1.0, 0.5), (2.0, 0.25)]).unwrap();
        let csv = s.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,scaled_value"));
        assert_eq!(lines.count(), 2);
        let v = RateVerdict {
            fitted_slope: -1.0,
            predicted_exponent: 0.5,
            log_correction: false,
            tolerance: 0.1,
            window: (2.0, 50.0),
            pass: true,
        };
        assert!(v.csv_row().ends_with("pass"));
    }

    proptest! {
        #[test]
        fn fit_is_scale_invariant(c in 1e-6f64..1e6, gamma in 0.1f64..3.0) {
            let base = synthetic(|t| t.powf(-gamma));
            let scaled = synthetic(|t| c * t.powf(-gamma));
            let w = (2.0, 50.0);
            let s1 = fit_slope(&base, w, false).unwrap();
            let s2 = fit_slope(&scaled, w, false).unwrap();
            prop_assert!((s1 - s2).abs() <= 1e-12);
        }

        #[test]
        fn predicted_exponent_is_monotone_then_saturates(
            a in 1.0001f64..4.0,
            k in 0.0f64..6.0,
            n in 0usize..5,
        ) {
            let (e0, _) = predicted_rate(k, a, n).unwrap();
            let (e1, _) = predicted_rate(k, a, n + 1).unwrap();
            prop_assert!(e1 >= e0);
            if (n as f64 + 1.0) * (a - 1.0) >= k / 2.0 {
                prop_assert!((e1 - e0).abs() <= 1e-15);
            }
        }
    }
}
