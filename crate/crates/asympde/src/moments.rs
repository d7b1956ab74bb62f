//! Corrected moment coefficients `M_α(f,t)` and the projection `P_i(t)`
//! that strips the leading kernel modes off a field.
//!
//! The coefficients are defined recursively: `M₀ = ∫f`, and for higher α
//! the raw monomial moment is corrected by the closed-form moments of the
//! kernel modes already accounted for,
//!
//! ```text
//!     M_α(f,t) = ∫ x^α f dx − Σ_{ρ ≤ α, ρ ≠ α} M_ρ(f,t) ∫ x^α g_ρ(x,t) dx.
//! ```
//!
//! By construction the remainder `P_i(t)f = f − Σ_{|α| ≤ i} M_α g_α(·,t)`
//! then has vanishing moments: `∫ x^α P_i(t)f dx = 0` for all `|α| ≤ i` —
//! exactly, by induction, with the only numerical error coming from the
//! quadrature of the raw moments.  The recursion references only strictly
//! smaller indices, so evaluating in (order, lexicographic) order is
//! always valid and ties within one order are immaterial.

use crate::error::{Error, Result};
use crate::field::{lq_norm, moment_of_field, sample_g_alpha, Field};
use crate::kernel::g_alpha_moment;
use crate::multi_index::MultiIndex;
use crate::spectral::heat_apply;
use crate::Scalar;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Hard cap on the moment order of a table.  Above this the monomial
/// weight amplifies domain-truncation error faster than the experiments
/// can control.
pub const MAX_MOMENT_CAP: usize = 6;

/// Quadrature-validity threshold: the boundary magnitude of the field,
/// amplified by `L^order`, must stay below this for polynomial moments on
/// the truncated box to be trustworthy.
pub const MOMENT_TAIL_LIMIT: f64 = 1e-6;

/// `[k]`: the unique integer in `(k-1, k]`, defined for `k ≥ 0`.
///
/// For integer `k` this is `k` itself; otherwise it rounds down.
pub fn bracket<T: Scalar>(k: T) -> Result<usize> {
    if k.is_nan() || k < T::zero() {
        return Err(Error::domain("bracket", format!("{k} is not a nonnegative real")));
    }
    Ok(k.floor()
        .to_usize()
        .ok_or_else(|| Error::domain("bracket", format!("{k} out of range")))?)
}

/// The complete set of corrected coefficients `M_α(f,t)` for `|α| ≤ k_cap`,
/// frozen at the time the field was measured at.
#[derive(Debug, Clone)]
pub struct MomentTable<T: Scalar> {
    k_cap: usize,
    time: T,
    entries: BTreeMap<MultiIndex, T>,
}

impl<T: Scalar> MomentTable<T> {
    /// Assemble a coefficient table directly; used by the expansion builders
    /// whose coefficients are combinations (limit values, transported
    /// integrals) rather than moments of a single field.
    pub(crate) fn from_entries(k_cap: usize, time: T, entries: BTreeMap<MultiIndex, T>) -> Self {
        MomentTable {
            k_cap,
            time,
            entries,
        }
    }

    pub fn k_cap(&self) -> usize {
        self.k_cap
    }

    /// The time the table was computed at; projections must use the same.
    pub fn time(&self) -> T {
        self.time
    }

    pub fn get(&self, alpha: &MultiIndex) -> Option<T> {
        self.entries.get(alpha).copied()
    }

    /// Entries in nondecreasing |α| order (ties lexicographic).
    pub fn iter(&self) -> impl Iterator<Item = (&MultiIndex, T)> {
        self.entries.iter().map(|(a, &v)| (a, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest coefficient magnitude — a conditioning indicator recorded
    /// in experiment reports.
    pub fn max_abs(&self) -> T {
        self.entries
            .values()
            .fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    /// CSV rows `alpha,moment,time` with the multi-index dash-joined.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,moment,time\n");
        for (alpha, value) in self.iter() {
            writeln!(out, "{},{:.16e},{:.16e}", alpha.label(), value, self.time)
                .expect("string write");
        }
        out
    }
}

/// Compute the corrected moment table of a field at time `t` up to order
/// `k_cap`.
///
/// Fails if the cap exceeds [`MAX_MOMENT_CAP`] or if the field's boundary
/// magnitude, amplified by `L^k_cap`, exceeds [`MOMENT_TAIL_LIMIT`] — in
/// that regime the truncated-domain quadrature no longer represents the
/// integrals over ℝᴺ.
pub fn moment_coefficients<T: Scalar>(
    f: &Field<T>,
    t: T,
    k_cap: usize,
) -> Result<MomentTable<T>> {
    if k_cap > MAX_MOMENT_CAP {
        return Err(Error::MomentCapExceeded {
            requested: k_cap,
            max: MAX_MOMENT_CAP,
        });
    }
    let boundary = f.boundary_max().to_f64().unwrap_or(f64::NAN);
    let half_extent = f.grid().half_extent().to_f64().unwrap_or(f64::NAN);
    let amplified = boundary * half_extent.powi(k_cap as i32);
    if !(amplified <= MOMENT_TAIL_LIMIT) {
        return Err(Error::MomentQuadratureInvalid {
            boundary,
            order: k_cap,
            amplified,
            limit: MOMENT_TAIL_LIMIT,
        });
    }
    let mut entries: BTreeMap<MultiIndex, T> = BTreeMap::new();
    // (order, lex) iteration: every proper divisor is already present.
    for alpha in MultiIndex::up_to(f.grid().dim(), k_cap as u32) {
        let raw = moment_of_field(f, &alpha);
        let mut correction = T::zero();
        for rho in alpha.lower_set() {
            let m_rho = entries[&rho];
            correction = correction + m_rho * g_alpha_moment(&rho, &alpha, t);
        }
        entries.insert(alpha, raw - correction);
    }
    Ok(MomentTable {
        k_cap,
        time: t,
        entries,
    })
}

/// The projection `P_i(t)f = f − Σ_{|α| ≤ i} M_α(f,t) g_α(·,t)`.
///
/// `table` must have been computed from `f` at exactly the time `t` passed
/// here; a mismatched time means the subtracted kernel modes would not
/// correspond to the tabulated coefficients, so it is refused.
pub fn project_p<T: Scalar>(
    f: &Field<T>,
    table: &MomentTable<T>,
    t: T,
    i: usize,
) -> Result<Field<T>> {
    if i > table.k_cap {
        return Err(Error::MomentCapExceeded {
            requested: i,
            max: table.k_cap,
        });
    }
    if t != table.time {
        return Err(Error::TimeMismatch {
            table_time: table.time.to_f64().unwrap_or(f64::NAN),
            requested: t.to_f64().unwrap_or(f64::NAN),
        });
    }
    let mut out = f.clone();
    for (alpha, m_alpha) in table.iter() {
        if alpha.order() as usize > i {
            break; // iteration is ordered by |α|
        }
        let mode = sample_g_alpha(f.grid(), alpha, t);
        out.add_scaled(-m_alpha, &mode);
    }
    Ok(out)
}

/// Convenience: build the table and project in one call.
pub fn project<T: Scalar>(f: &Field<T>, t: T, i: usize) -> Result<Field<T>> {
    let table = moment_coefficients(f, t, i)?;
    project_p(f, &table, t, i)
}

/// Commutation defect `‖P_i(t) e^{tΔ}φ − e^{tΔ} P_i(0)φ‖₁`.
///
/// Analytically zero: heat propagation commutes with the projection
/// because the corrected coefficients are invariant along the flow and the
/// kernel modes reproduce.  The returned number is the discretization's
/// defect.
pub fn commute_check<T: Scalar>(phi: &Field<T>, t: T, i: usize) -> Result<T> {
    let evolved = heat_apply(phi, t)?;
    let lhs = project(&evolved, t, i)?;
    let projected_initial = project(phi, T::zero(), i)?;
    let rhs = heat_apply(&projected_initial, t)?;
    lq_norm(&lhs.sub(&rhs), T::one())
}
