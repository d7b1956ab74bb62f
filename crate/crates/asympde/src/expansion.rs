//! Higher-order large-time expansion profiles.
//!
//! Every profile approximates a solution of `∂ₜu = Δu + F` by a short
//! series of kernel modes plus (beyond leading order) a Duhamel-type
//! correction:
//!
//! * **Inductive profiles** `U_n` — the kernel series carries the corrected
//!   moments of the solution itself, and the correction re-inserts the
//!   projected source evaluated along the previous profile, iterated `n`
//!   times starting from the pure series `U₀`.
//! * **Frozen-series modification** (`Tilde`) — the Duhamel source is
//!   evaluated once and for all on a fixed kernel series whose coefficients
//!   are the large-time limits of the solution's moments, truncated to the
//!   orders that actually converge.
//! * **Limit-coefficient modification** (`Hat`) — the source is evaluated
//!   on the mass-scaled kernel alone; the Duhamel term is left unprojected
//!   and the kernel coefficients become explicit functions of time that
//!   absorb the projected modes.
//!
//! All builders consume a solved [`Trajectory`] and record one coefficient
//! table (and, beyond leading order, one correction field) per trajectory
//! node, so profiles can be evaluated at exactly the recorded times.

use crate::dynamics::Nonlinearity;
use crate::error::{Error, Result};
use crate::field::{sample_g_alpha, Field, Grid};
use crate::moments::{bracket, moment_coefficients, project, MomentTable};
use crate::multi_index::MultiIndex;
use crate::rates::RateVerdict;
use crate::solver::Trajectory;
use crate::spectral::Spectral;
use crate::{real, Scalar};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Deepest supported inductive profile: each level multiplies the build
/// cost by a full source sweep, and the decay exponent saturates at
/// `K/2` long before this.
pub const MAX_DEPTH: usize = 4;

/// Which expansion family a profile belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionVariant {
    /// Inductive profile of depth `n` (`Un(0)` is the bare kernel series).
    Un(usize),
    /// Frozen-series modification with requested frozen order `J`.
    Tilde(usize),
    /// Limit-coefficient modification.
    Hat,
}

impl ExpansionVariant {
    /// Short machine-friendly name, used in artifact file names.
    pub fn label(&self) -> String {
        match self {
            ExpansionVariant::Un(n) => format!("u{n}"),
            ExpansionVariant::Tilde(j) => format!("tilde{j}"),
            ExpansionVariant::Hat => "hat".to_string(),
        }
    }
}

impl std::fmt::Display for ExpansionVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExpansionVariant::Un(n) => write!(f, "inductive profile U_{n}"),
            ExpansionVariant::Tilde(j) => write!(f, "frozen-series profile (J = {j})"),
            ExpansionVariant::Hat => write!(f, "limit-coefficient profile"),
        }
    }
}

/// Outcome of extrapolating a time integral beyond the solved horizon by a
/// power-law fit on its integrand's last decade.
#[derive(Debug, Clone)]
pub struct TailReport<T: Scalar> {
    /// What was extrapolated.
    pub quantity: String,
    /// Fitted decay exponent of the integrand (`-∞` when the integrand is
    /// numerically zero over the fit window).
    pub fitted_exponent: T,
    /// The tail value actually added (zero when unreliable).
    pub tail_value: T,
    /// Whether the extrapolation was trusted: enough points, consistent
    /// sign, and an integrable fitted decay.
    pub reliable: bool,
}

/// A scalar coefficient traced along the trajectory, with the tail
/// extrapolation that was applied to it (if any).
#[derive(Debug, Clone)]
pub struct CoefficientSeries<T: Scalar> {
    alpha: MultiIndex,
    times: Vec<T>,
    values: Vec<T>,
    tail: Option<TailReport<T>>,
}

impl<T: Scalar> CoefficientSeries<T> {
    pub fn alpha(&self) -> &MultiIndex {
        &self.alpha
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn tail(&self) -> Option<&TailReport<T>> {
        self.tail.as_ref()
    }

    /// CSV with header `t,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(out, "{t:.16e},{v:.16e}").expect("string write");
        }
        out
    }
}

/// A fully assembled expansion profile: per recorded time, one coefficient
/// table per component and (beyond the bare series) one correction field
/// per component.
#[derive(Debug, Clone)]
pub struct ExpansionProfile<T: Scalar> {
    grid: Grid<T>,
    variant: ExpansionVariant,
    k_weight: T,
    k_cap: usize,
    times: Vec<T>,
    /// `[node][component]` kernel-series coefficients.
    coefficients: Vec<Vec<MomentTable<T>>>,
    /// `[node][component]` Duhamel corrections, absent for the bare series.
    corrections: Option<Vec<Vec<Field<T>>>>,
    tail_reports: Vec<TailReport<T>>,
}

impl<T: Scalar> ExpansionProfile<T> {
    pub fn grid(&self) -> Grid<T> {
        self.grid
    }

    pub fn variant(&self) -> ExpansionVariant {
        self.variant
    }

    /// The moment-weight exponent `K` the profile was built for.
    pub fn k_weight(&self) -> T {
        self.k_weight
    }

    /// Highest kernel-mode order kept in the series, `[K]`.
    pub fn k_cap(&self) -> usize {
        self.k_cap
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn components(&self) -> usize {
        self.coefficients.first().map_or(0, |node| node.len())
    }

    /// Coefficient table at recorded node `k` for one component.
    pub fn coefficient_table(&self, k: usize, component: usize) -> &MomentTable<T> {
        &self.coefficients[k][component]
    }

    /// Duhamel correction at recorded node `k`, if the profile carries one.
    pub fn correction(&self, k: usize, component: usize) -> Option<&Field<T>> {
        self.corrections.as_ref().map(|c| &c[k][component])
    }

    /// Tail extrapolations performed while building (empty when none were
    /// needed).
    pub fn tail_reports(&self) -> &[TailReport<T>] {
        &self.tail_reports
    }

    fn node_index(&self, t: T) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| s == t)
            .ok_or(Error::MissingTime {
                t: t.to_f64().unwrap_or(f64::NAN),
            })
    }

    fn evaluate_at_node(&self, k: usize, component: usize) -> Field<T> {
        let t = self.times[k];
        let mut out = assemble_series(self.grid, &self.coefficients[k][component], t);
        if let Some(corrections) = &self.corrections {
            out = out.add(&corrections[k][component]);
        }
        out
    }

    /// The profile field of one component at a recorded time.
    pub fn evaluate(&self, component: usize, t: T) -> Result<Field<T>> {
        Ok(self.evaluate_at_node(self.node_index(t)?, component))
    }

    /// Spatial gradient of the profile at a recorded time: the kernel
    /// series is differentiated in closed form (`∂ⱼ g_α = −(αⱼ+1) g_{α+eⱼ}`),
    /// the correction spectrally.
    pub fn gradient(
        &self,
        component: usize,
        t: T,
        spectral: &Spectral<T>,
    ) -> Result<Vec<Field<T>>> {
        if spectral.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let k = self.node_index(t)?;
        let mut out = Vec::with_capacity(self.grid.dim());
        for axis in 0..self.grid.dim() {
            let mut d = Field::zeros(self.grid);
            for (alpha, m) in self.coefficients[k][component].iter() {
                let factor = -(real::<T>(alpha.entry(axis) as f64) + T::one());
                let mode = sample_g_alpha(self.grid, &alpha.plus_unit(axis), t);
                d.add_scaled(m * factor, &mode);
            }
            if let Some(corrections) = &self.corrections {
                d = d.add(&spectral.derivative(&corrections[k][component], axis));
            }
            out.push(d);
        }
        Ok(out)
    }

    /// `sup_{t ≥ 1} t^{N/2} ‖U(t)‖_∞` over the recorded times — the
    /// uniform-boundedness indicator for the scaled profile.
    pub fn scaled_sup_linf(&self, component: usize) -> Result<T> {
        if component >= self.components() {
            return Err(Error::domain(
                "scaled_sup_linf",
                format!("component {component} out of range"),
            ));
        }
        let n_half = real::<T>(self.grid.dim() as f64 / 2.0);
        let mut sup = T::zero();
        for (k, &t) in self.times.iter().enumerate() {
            if t >= T::one() {
                let value = t.powf(n_half) * self.evaluate_at_node(k, component).max_abs();
                sup = sup.max(value);
            }
        }
        Ok(sup)
    }
}

/// `Σ_α M_α g_α(·,t)` for every entry of a coefficient table.
fn assemble_series<T: Scalar>(grid: Grid<T>, table: &MomentTable<T>, t: T) -> Field<T> {
    let mut out = Field::zeros(grid);
    for (alpha, m) in table.iter() {
        out.add_scaled(m, &sample_g_alpha(grid, alpha, t));
    }
    out
}

/// Per-node corrected moment tables of the solution itself.
fn solution_tables<T: Scalar>(
    trajectory: &Trajectory<T>,
    k_cap: usize,
) -> Result<Vec<Vec<MomentTable<T>>>> {
    trajectory
        .times()
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            (0..trajectory.components())
                .map(|c| moment_coefficients(&trajectory.state(k)[c], t, k_cap))
                .collect()
        })
        .collect()
}

/// Trajectory/nonlinearity compatibility shared by every builder.
fn validate_pair<T: Scalar>(
    trajectory: &Trajectory<T>,
    nonlinearity: &Nonlinearity<T>,
) -> Result<()> {
    if nonlinearity.dim() != trajectory.grid().dim() {
        return Err(Error::domain(
            "expansion",
            format!(
                "nonlinearity dimension {} does not match grid dimension {}",
                nonlinearity.dim(),
                trajectory.grid().dim()
            ),
        ));
    }
    if trajectory.components() != nonlinearity.duhamel_components() {
        return Err(Error::domain(
            "expansion",
            format!(
                "trajectory carries {} components, the nonlinearity evolves {}",
                trajectory.components(),
                nonlinearity.duhamel_components()
            ),
        ));
    }
    if nonlinearity.needs_chemical_field() && trajectory.chem(0).is_none() {
        return Err(Error::MissingChemotaxisState);
    }
    Ok(())
}

/// Trapezoid accumulation of `J(t_k) = ∫₀^{t_k} e^{(t_k−s)Δ} W(s) ds` over
/// the trajectory nodes: `J_{k+1} = e^{ΔₖΔ}(J_k + (Δₖ/2) W_k) + (Δₖ/2) W_{k+1}`.
/// The integrand callback is invoked exactly once per node, in order.
fn accumulate_duhamel<T: Scalar>(
    spectral: &Spectral<T>,
    times: &[T],
    components: usize,
    mut integrand: impl FnMut(usize) -> Result<Vec<Field<T>>>,
) -> Result<Vec<Vec<Field<T>>>> {
    let grid = spectral.grid();
    let half = real::<T>(0.5);
    let mut current: Vec<Field<T>> = (0..components).map(|_| Field::zeros(grid)).collect();
    let mut out = Vec::with_capacity(times.len());
    out.push(current.clone());
    let mut w_prev = integrand(0)?;
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        let w_next = integrand(k)?;
        let mut next = Vec::with_capacity(components);
        for c in 0..components {
            let mut j = current[c].clone();
            j.add_scaled(half * dt, &w_prev[c]);
            let mut j = spectral.heat(&j, dt)?;
            j.add_scaled(half * dt, &w_next[c]);
            next.push(j);
        }
        out.push(next.clone());
        current = next;
        w_prev = w_next;
    }
    Ok(out)
}

/// Cumulative trapezoid integral of a sampled time series, starting at 0.
fn cumtrapz<T: Scalar>(times: &[T], values: &[T]) -> Vec<T> {
    debug_assert_eq!(times.len(), values.len());
    let half = real::<T>(0.5);
    let mut acc = T::zero();
    let mut out = Vec::with_capacity(values.len());
    out.push(acc);
    for k in 1..values.len() {
        acc += half * (times[k] - times[k - 1]) * (values[k] + values[k - 1]);
        out.push(acc);
    }
    out
}

/// Extrapolate `∫_T^∞ y(s) ds` from samples of `y` by fitting a power law
/// on the last decade `[T/10, T]`.  The tail is only applied when the fit
/// is trustworthy: at least 8 points of consistent sign decaying with an
/// integrable exponent (`< −1.05`).  An integrand that never rises above
/// `floor` over the window is treated as exactly zero — reliably so.
fn tail_estimate<T: Scalar>(
    times: &[T],
    values: &[T],
    floor: T,
    quantity: String,
) -> (T, TailReport<T>) {
    let horizon = *times.last().expect("nonempty time grid");
    let lo = horizon / real(10.0);
    let window: Vec<(T, T)> = times
        .iter()
        .zip(values)
        .filter(|&(&t, _)| t >= lo)
        .map(|(&t, &v)| (t, v))
        .collect();
    let peak = window
        .iter()
        .fold(T::zero(), |m, &(_, v)| m.max(v.abs()));
    if peak <= floor {
        return (
            T::zero(),
            TailReport {
                quantity,
                fitted_exponent: T::neg_infinity(),
                tail_value: T::zero(),
                reliable: true,
            },
        );
    }
    let unreliable = |exponent: T, quantity: String| {
        (
            T::zero(),
            TailReport {
                quantity,
                fitted_exponent: exponent,
                tail_value: T::zero(),
                reliable: false,
            },
        )
    };
    // points that carry signal; they must agree in sign for a power law
    let pts: Vec<(T, T)> = window.iter().copied().filter(|&(_, v)| v.abs() > floor).collect();
    let sign = if pts.last().map_or(T::one(), |&(_, v)| v) > T::zero() {
        T::one()
    } else {
        -T::one()
    };
    if pts.len() < 8 || pts.iter().any(|&(_, v)| v * sign <= T::zero()) {
        return unreliable(T::nan(), quantity);
    }
    let logs: Vec<(T, T)> = pts.iter().map(|&(t, v)| (t.ln(), v.abs().ln())).collect();
    let n = real::<T>(logs.len() as f64);
    let mean_x = logs.iter().map(|&(x, _)| x).sum::<T>() / n;
    let mean_y = logs.iter().map(|&(_, y)| y).sum::<T>() / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for &(x, y) in &logs {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == T::zero() {
        return unreliable(T::nan(), quantity);
    }
    let slope = sxy / sxx;
    if !(slope < real(-1.05)) {
        return unreliable(slope, quantity);
    }
    // |y| ≈ c t^slope beyond the horizon: ∫_T^∞ = c T^{slope+1} / (−slope−1)
    let ln_c = mean_y - slope * mean_x;
    let tail = sign * ln_c.exp() * horizon.powf(slope + T::one()) / (-slope - T::one());
    (
        tail,
        TailReport {
            quantity,
            fitted_exponent: slope,
            tail_value: tail,
            reliable: true,
        },
    )
}

/// The bare kernel series of one component at a single recorded time.
pub fn build_u0<T: Scalar>(trajectory: &Trajectory<T>, k_weight: T, t: T) -> Result<Field<T>> {
    let k_cap = bracket(k_weight)?;
    let k = trajectory.index_of(t)?;
    let table = moment_coefficients(&trajectory.state(k)[0], t, k_cap)?;
    Ok(assemble_series(trajectory.grid(), &table, t))
}

/// Build the inductive profile `U_n`.
///
/// `U₀` is the kernel series with the solution's own corrected moments up
/// to order `[K]`; each further level adds the projected Duhamel integral
/// of the source evaluated along the previous level's profile.
pub fn build_un<T: Scalar>(
    trajectory: &Trajectory<T>,
    nonlinearity: &Nonlinearity<T>,
    k_weight: T,
    n: usize,
) -> Result<ExpansionProfile<T>> {
    validate_pair(trajectory, nonlinearity)?;
    if n > MAX_DEPTH {
        return Err(Error::Unsupported(format!(
            "profile depth {n} exceeds the supported maximum {MAX_DEPTH}"
        )));
    }
    let k_cap = bracket(k_weight)?;
    if n >= 1 && !(nonlinearity.decay_exponent() > T::one()) {
        return Err(Error::domain(
            "build_un",
            format!(
                "source decay exponent A = {} must exceed 1 for the Duhamel correction to settle",
                nonlinearity.decay_exponent()
            ),
        ));
    }
    let grid = trajectory.grid();
    let times: Vec<T> = trajectory.times().to_vec();
    let comps = trajectory.components();
    let coefficients = solution_tables(trajectory, k_cap)?;

    let mut corrections: Option<Vec<Vec<Field<T>>>> = None;
    if n >= 1 {
        let spectral = Spectral::new(grid);
        // the kernel series is shared by every level
        let base: Vec<Vec<Field<T>>> = times
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                (0..comps)
                    .map(|c| assemble_series(grid, &coefficients[k][c], t))
                    .collect()
            })
            .collect();
        for _level in 1..=n {
            let previous = corrections.take();
            let next = accumulate_duhamel(&spectral, &times, comps, |k| {
                let t = times[k];
                let state: Vec<Field<T>> = (0..comps)
                    .map(|c| match &previous {
                        Some(p) => base[k][c].add(&p[k][c]),
                        None => base[k][c].clone(),
                    })
                    .collect();
                let source = nonlinearity.evaluate(&spectral, t, &state, trajectory.chem(k))?;
                source.iter().map(|f| project(f, t, k_cap)).collect()
            })?;
            corrections = Some(next);
        }
    }

    Ok(ExpansionProfile {
        grid,
        variant: ExpansionVariant::Un(n),
        k_weight,
        k_cap,
        times,
        coefficients,
        corrections,
        tail_reports: Vec::new(),
    })
}

/// Build the frozen-series modification.
///
/// The Duhamel source is evaluated on a fixed kernel series whose
/// coefficients are the solution's moments at the final recorded time —
/// the numerical stand-ins for their large-time limits.  Only orders that
/// converge are frozen: strictly below `min{J, 2(A−1)}`; `J = 0` freezes
/// the mass alone.
pub fn build_tilde_u<T: Scalar>(
    trajectory: &Trajectory<T>,
    nonlinearity: &Nonlinearity<T>,
    k_weight: T,
    j_freeze: usize,
) -> Result<ExpansionProfile<T>> {
    validate_pair(trajectory, nonlinearity)?;
    let k_cap = bracket(k_weight)?;
    if j_freeze > k_cap {
        return Err(Error::domain(
            "build_tilde_u",
            format!("frozen order J = {j_freeze} exceeds the series cap [K] = {k_cap}"),
        ));
    }
    let a = nonlinearity.decay_exponent();
    if !(a > T::one()) {
        return Err(Error::domain(
            "build_tilde_u",
            format!("source decay exponent A = {a} must exceed 1"),
        ));
    }
    let grid = trajectory.grid();
    let times: Vec<T> = trajectory.times().to_vec();
    let comps = trajectory.components();
    let coefficients = solution_tables(trajectory, k_cap)?;

    let k_end = times.len() - 1;
    let t_end = times[k_end];
    // effective frozen order: only coefficients with a large-time limit
    let j_effective = real::<T>(j_freeze as f64).min(real::<T>(2.0) * (a - T::one()));
    let mut frozen: Vec<MomentTable<T>> = Vec::with_capacity(comps);
    for c in 0..comps {
        let full = moment_coefficients(&trajectory.state(k_end)[c], t_end, k_cap)?;
        let mut entries = BTreeMap::new();
        for (alpha, value) in full.iter() {
            let ord = real::<T>(alpha.order() as f64);
            let keep = if j_freeze == 0 {
                alpha.order() == 0
            } else {
                ord < j_effective
            };
            if keep {
                // a frozen coefficient must actually converge
                if !(a > T::one() + ord / real(2.0)) {
                    return Err(Error::domain(
                        "build_tilde_u",
                        format!(
                            "coefficient of order {} has no large-time limit at decay exponent A = {a}",
                            alpha.order()
                        ),
                    ));
                }
                entries.insert(alpha.clone(), value);
            }
        }
        frozen.push(MomentTable::from_entries(k_cap, t_end, entries));
    }

    let spectral = Spectral::new(grid);
    let corrections = accumulate_duhamel(&spectral, &times, comps, |k| {
        let t = times[k];
        let state: Vec<Field<T>> = frozen
            .iter()
            .map(|table| assemble_series(grid, table, t))
            .collect();
        let source = nonlinearity.evaluate(&spectral, t, &state, trajectory.chem(k))?;
        source.iter().map(|f| project(f, t, k_cap)).collect()
    })?;

    Ok(ExpansionProfile {
        grid,
        variant: ExpansionVariant::Tilde(j_freeze),
        k_weight,
        k_cap,
        times,
        coefficients,
        corrections: Some(corrections),
        tail_reports: Vec::new(),
    })
}

/// Everything the limit-coefficient builders need from one sweep along the
/// trajectory: limit masses (with their extrapolation reports), the
/// source-mass series of the actual solution, per-node moment tables of the
/// mass-kernel source, and its unprojected Duhamel accumulation.
struct HatIngredients<T: Scalar> {
    mass: Vec<T>,
    reports: Vec<TailReport<T>>,
    /// `[component][node]` — `∫ F(u(s)) dx` along the solved trajectory.
    source_mass_actual: Vec<Vec<T>>,
    /// `[node][component]` — corrected moments of `F_M` up to the cap.
    fm_tables: Vec<Vec<MomentTable<T>>>,
    /// `[node][component]` — unprojected Duhamel accumulation of `F_M`.
    corrections: Vec<Vec<Field<T>>>,
}

fn hat_ingredients<T: Scalar>(
    trajectory: &Trajectory<T>,
    nonlinearity: &Nonlinearity<T>,
    k_cap: usize,
) -> Result<HatIngredients<T>> {
    let grid = trajectory.grid();
    let spectral = Spectral::new(grid);
    let times = trajectory.times();
    let comps = trajectory.components();
    let k_end = times.len() - 1;
    let zero_idx = MultiIndex::zero(grid.dim());

    // source mass along the actual solution, for the limit-mass estimate
    let mut source_mass_actual: Vec<Vec<T>> = vec![Vec::with_capacity(times.len()); comps];
    for (k, &t) in times.iter().enumerate() {
        let f = nonlinearity.evaluate(&spectral, t, trajectory.state(k), trajectory.chem(k))?;
        for c in 0..comps {
            source_mass_actual[c].push(f[c].integral());
        }
    }

    // limit mass = final corrected mass + extrapolated remaining production
    let mut mass = Vec::with_capacity(comps);
    let mut reports = Vec::with_capacity(comps);
    for c in 0..comps {
        let final_table = moment_coefficients(&trajectory.state(k_end)[c], times[k_end], 0)?;
        let m_end = final_table.get(&zero_idx).expect("order zero always tabulated");
        let floor = real::<T>(1e-13) * (T::one() + m_end.abs());
        let (tail, report) = tail_estimate(
            times,
            &source_mass_actual[c],
            floor,
            format!("remaining mass production beyond the horizon (component {c})"),
        );
        mass.push(m_end + tail);
        reports.push(report);
    }

    // mass-kernel source: moment tables + unprojected Duhamel accumulation
    let mut fm_tables: Vec<Vec<MomentTable<T>>> = Vec::with_capacity(times.len());
    let corrections = accumulate_duhamel(&spectral, times, comps, |k| {
        let t = times[k];
        let state: Vec<Field<T>> = mass
            .iter()
            .map(|&m| sample_g_alpha(grid, &zero_idx, t).scale(m))
            .collect();
        let f = nonlinearity.evaluate(&spectral, t, &state, trajectory.chem(k))?;
        let tables: Vec<MomentTable<T>> = f
            .iter()
            .map(|fc| moment_coefficients(fc, t, k_cap))
            .collect::<Result<_>>()?;
        fm_tables.push(tables);
        Ok(f)
    })?;

    Ok(HatIngredients {
        mass,
        reports,
        source_mass_actual,
        fm_tables,
        corrections,
    })
}

/// Build the limit-coefficient modification.
///
/// The source is evaluated on the mass-scaled kernel alone (`F_M`), its
/// Duhamel integral is kept unprojected, and the kernel coefficients become
/// explicit functions of time: the order-zero coefficient is the limit mass
/// minus the total source production plus the remaining production
/// difference, every higher coefficient is the solution's moment minus the
/// accumulated source moment.  Integrals beyond the horizon are
/// extrapolated by power-law fits and recorded as tail reports.
pub fn build_hat_u<T: Scalar>(
    trajectory: &Trajectory<T>,
    nonlinearity: &Nonlinearity<T>,
    k_weight: T,
) -> Result<ExpansionProfile<T>> {
    validate_pair(trajectory, nonlinearity)?;
    let a = nonlinearity.decay_exponent();
    if !(a > T::one()) {
        return Err(Error::domain(
            "build_hat_u",
            format!("source decay exponent A = {a} must exceed 1"),
        ));
    }
    let k_cap = bracket(k_weight)?;
    let grid = trajectory.grid();
    let times: Vec<T> = trajectory.times().to_vec();
    let comps = trajectory.components();
    let k_end = times.len() - 1;
    let zero_idx = MultiIndex::zero(grid.dim());
    let alphas = MultiIndex::up_to(grid.dim(), k_cap as u32);

    let solution = solution_tables(trajectory, k_cap)?;
    let ingredients = hat_ingredients(trajectory, nonlinearity, k_cap)?;
    let mut tail_reports = ingredients.reports;

    let mut coefficients: Vec<Vec<MomentTable<T>>> =
        (0..times.len()).map(|_| Vec::with_capacity(comps)).collect();
    for c in 0..comps {
        // cumulative source moments Σ_α ∫₀^t M_α(F_M(s), s) ds
        let mut accumulated: BTreeMap<MultiIndex, Vec<T>> = BTreeMap::new();
        for alpha in &alphas {
            let series: Vec<T> = (0..times.len())
                .map(|k| {
                    ingredients.fm_tables[k][c]
                        .get(alpha)
                        .expect("index within the table cap")
                })
                .collect();
            accumulated.insert(alpha.clone(), cumtrapz(&times, &series));
        }

        let floor = real::<T>(1e-13) * (T::one() + ingredients.mass[c].abs());
        let fm_mass: Vec<T> = (0..times.len())
            .map(|k| {
                ingredients.fm_tables[k][c]
                    .get(&zero_idx)
                    .expect("order zero always tabulated")
            })
            .collect();
        let (total_tail, report) = tail_estimate(
            &times,
            &fm_mass,
            floor,
            format!("total mass-kernel source production (component {c})"),
        );
        let total_production = accumulated[&zero_idx][k_end] + total_tail;
        tail_reports.push(report);

        // remaining production difference ∫_t^∞ ∫ [F_M − F(u)] dx ds
        let diff: Vec<T> = (0..times.len())
            .map(|k| fm_mass[k] - ingredients.source_mass_actual[c][k])
            .collect();
        let cum_diff = cumtrapz(&times, &diff);
        let (diff_tail, report) = tail_estimate(
            &times,
            &diff,
            floor,
            format!("order-zero coefficient tail (component {c})"),
        );
        tail_reports.push(report);

        for k in 0..times.len() {
            let mut entries = BTreeMap::new();
            for alpha in &alphas {
                let value = if alpha.order() == 0 {
                    ingredients.mass[c] - total_production
                        + (cum_diff[k_end] - cum_diff[k] + diff_tail)
                } else {
                    solution[k][c].get(alpha).expect("index within the table cap")
                        - accumulated[alpha][k]
                };
                entries.insert(alpha.clone(), value);
            }
            coefficients[k].push(MomentTable::from_entries(k_cap, times[k], entries));
        }
    }

    Ok(ExpansionProfile {
        grid,
        variant: ExpansionVariant::Hat,
        k_weight,
        k_cap,
        times,
        coefficients,
        corrections: Some(ingredients.corrections),
        tail_reports,
    })
}

/// Trace one kernel coefficient of the limit-coefficient modification
/// (first component) along the trajectory.
///
/// For `|α| ≥ 1` this is the solution moment minus the accumulated source
/// moment; the order-zero coefficient is the remaining production
/// difference `∫_t^∞ ∫ [F_M − F(u)] dx ds`, which vanishes identically for
/// divergence-form sources.
pub fn c_alpha_series<T: Scalar>(
    trajectory: &Trajectory<T>,
    nonlinearity: &Nonlinearity<T>,
    alpha: &MultiIndex,
) -> Result<CoefficientSeries<T>> {
    validate_pair(trajectory, nonlinearity)?;
    if alpha.dim() != trajectory.grid().dim() {
        return Err(Error::domain(
            "c_alpha_series",
            format!(
                "index dimension {} does not match grid dimension {}",
                alpha.dim(),
                trajectory.grid().dim()
            ),
        ));
    }
    let a = nonlinearity.decay_exponent();
    if !(a > T::one()) {
        return Err(Error::domain(
            "c_alpha_series",
            format!("source decay exponent A = {a} must exceed 1"),
        ));
    }
    let ord = alpha.order() as usize;
    let times: Vec<T> = trajectory.times().to_vec();
    let k_end = times.len() - 1;
    let ingredients = hat_ingredients(trajectory, nonlinearity, ord)?;

    if ord == 0 {
        let fm_mass: Vec<T> = (0..times.len())
            .map(|k| {
                ingredients.fm_tables[k][0]
                    .get(alpha)
                    .expect("order zero always tabulated")
            })
            .collect();
        let diff: Vec<T> = (0..times.len())
            .map(|k| fm_mass[k] - ingredients.source_mass_actual[0][k])
            .collect();
        let cum_diff = cumtrapz(&times, &diff);
        let floor = real::<T>(1e-13) * (T::one() + ingredients.mass[0].abs());
        let (tail, report) = tail_estimate(
            &times,
            &diff,
            floor,
            "order-zero coefficient tail".to_string(),
        );
        let values: Vec<T> = (0..times.len())
            .map(|k| cum_diff[k_end] - cum_diff[k] + tail)
            .collect();
        Ok(CoefficientSeries {
            alpha: alpha.clone(),
            times,
            values,
            tail: Some(report),
        })
    } else {
        let fm_moment: Vec<T> = (0..times.len())
            .map(|k| {
                ingredients.fm_tables[k][0]
                    .get(alpha)
                    .expect("index within the table cap")
            })
            .collect();
        let accumulated = cumtrapz(&times, &fm_moment);
        let values: Vec<T> = times
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let table = moment_coefficients(&trajectory.state(k)[0], t, ord)?;
                Ok(table.get(alpha).expect("index within the table cap") - accumulated[k])
            })
            .collect::<Result<_>>()?;
        Ok(CoefficientSeries {
            alpha: alpha.clone(),
            times,
            values,
            tail: None,
        })
    }
}

/// Verify the large-time behaviour of one corrected moment of the solution
/// (first component) against what the source decay predicts.
///
/// With decay exponent `A` and order `|α|`, the moment converges when
/// `A > 1 + |α|/2` (drift bound `t^{-((A−1)−|α|/2)}`), grows at most
/// logarithmically in the balanced case `A = 1 + |α|/2`, and is bounded by
/// the power envelope `t^{(1+|α|/2)−A}` below it.  A series that never
/// rises above numerical noise passes with slope `−∞`.
pub fn coefficient_drift_check<T: Scalar>(
    trajectory: &Trajectory<T>,
    nonlinearity: &Nonlinearity<T>,
    alpha: &MultiIndex,
    tolerance: T,
) -> Result<RateVerdict<T>> {
    validate_pair(trajectory, nonlinearity)?;
    if alpha.dim() != trajectory.grid().dim() {
        return Err(Error::domain(
            "coefficient_drift_check",
            format!(
                "index dimension {} does not match grid dimension {}",
                alpha.dim(),
                trajectory.grid().dim()
            ),
        ));
    }
    let a = nonlinearity.decay_exponent();
    if !(a > T::one()) {
        return Err(Error::domain(
            "coefficient_drift_check",
            format!("source decay exponent A = {a} must exceed 1"),
        ));
    }
    let ord = alpha.order() as usize;
    let ord_half = real::<T>(ord as f64) * real::<T>(0.5);
    let threshold = T::one() + ord_half;

    let times = trajectory.times();
    let mut series = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let table = moment_coefficients(&trajectory.state(k)[0], t, ord)?;
        series.push((t, table.get(alpha).expect("index within the table cap")));
    }
    let reference = series.last().expect("nonempty trajectory").1;

    // regime: converging drift, marginal logarithmic growth, or power envelope
    let marginal = (a - threshold).abs() <= real(1e-12);
    let (exponent, log_flag): (T, bool) = if marginal {
        (T::zero(), true)
    } else {
        ((a - T::one()) - ord_half, false)
    };
    let points: Vec<(T, T)> = series
        .iter()
        .filter(|&&(t, _)| t >= T::one())
        .map(|&(t, m)| {
            let value = if !marginal && a > threshold {
                (m - reference).abs()
            } else {
                m.abs()
            };
            (t, value)
        })
        .collect();

    let horizon = *times.last().expect("nonempty trajectory");
    let window = (horizon / real(10.0), horizon / real(2.0));
    let peak = points.iter().fold(T::zero(), |m, &(_, v)| m.max(v));
    if peak <= real::<T>(1e-9) * (T::one() + reference.abs()) {
        // indistinguishable from quadrature noise: decays faster than any power
        return Ok(RateVerdict {
            fitted_slope: T::neg_infinity(),
            predicted_exponent: exponent,
            log_correction: log_flag,
            tolerance,
            window,
            pass: T::neg_infinity() <= -exponent + tolerance,
        });
    }
    let series = crate::rates::NormSeries::from_points(T::one(), 0, None, points)?;
    crate::rates::verdict_with_prediction(&series, exponent, log_flag, tolerance, Some(window))
}
