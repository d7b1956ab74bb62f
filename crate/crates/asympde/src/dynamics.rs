//! Nonlinearity plug-ins `F(x,t,u,∇u)` and the chemotaxis auxiliary field.
//!
//! Each plug-in carries the structural metadata the asymptotic machinery
//! needs — its decay exponent `A` (meaning `‖F(t)‖₁ ≲ (1+t)^{-A}` along the
//! solution flow) and whether it is a spatial divergence, hence mass
//! conserving.  Gradient-dependent laws are realized in divergence form and
//! differentiate spectrally *inside* the evaluator: a spectral derivative
//! has exactly zero mean, so `∫F dx = 0` holds to rounding rather than to
//! discretization error.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::spectral::Spectral;
use crate::{real, Scalar};
use std::sync::Arc;

/// A pointwise component law `v ↦ F_i(v)` for small systems.
pub type PointwiseLaw<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

#[derive(Clone)]
enum Kind<T: Scalar> {
    /// `F ≡ 0`: the pure heat flow.
    Zero,
    /// `F = λ |u|^{p-1} u`.
    Semilinear { lambda: T, p: T },
    /// `F = a · ∇(|u|^{p-1} u)`.
    Convection { velocity: Vec<T>, p: T },
    /// `F = -∇·(u ∇v)` with `v` the chemical field.
    KellerSegel,
    /// `F_i = law_i(u)` pointwise, with `|F(v)| ≤ C|v|^a`.
    System { laws: Vec<PointwiseLaw<T>> },
}

/// A right-hand side `F` together with the structure the expansion and rate
/// machinery reads off it.
#[derive(Clone)]
pub struct Nonlinearity<T: Scalar> {
    dim: usize,
    system_size: usize,
    decay_exponent: T,
    divergence_form: bool,
    descriptor: String,
    kind: Kind<T>,
}

/// `|u|^{p-1} u`, with the value at `u = 0` defined as 0 for every `p > 1`.
fn signed_power<T: Scalar>(u: T, p: T) -> T {
    if u == T::zero() {
        T::zero()
    } else {
        u.abs().powf(p - T::one()) * u
    }
}

impl<T: Scalar> Nonlinearity<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of coupled components the plug-in describes.  The chemotaxis
    /// pair counts both the density and the chemical.
    pub fn system_size(&self) -> usize {
        self.system_size
    }

    /// Number of components integrated through the Duhamel formula; the
    /// chemotaxis chemical is auxiliary (a damped heat average of the
    /// density), not a Duhamel component.
    pub fn duhamel_components(&self) -> usize {
        match self.kind {
            Kind::KellerSegel => 1,
            _ => self.system_size,
        }
    }

    /// The decay exponent `A` with `‖F(t)‖₁ ≲ (1+t)^{-A}` (∞ for the pure
    /// heat flow).
    pub fn decay_exponent(&self) -> T {
        self.decay_exponent
    }

    /// Whether `F` is a spatial divergence, hence mass conserving.
    pub fn divergence_form(&self) -> bool {
        self.divergence_form
    }

    /// Whether the evaluator needs the auxiliary chemical field.
    pub fn needs_chemical_field(&self) -> bool {
        matches!(self.kind, Kind::KellerSegel)
    }

    /// Human-readable name with parameters, used in manifests.
    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    /// The pure heat flow `F ≡ 0` (decay exponent +∞).
    pub fn zero(dim: usize) -> Self {
        Nonlinearity {
            dim,
            system_size: 1,
            decay_exponent: T::infinity(),
            divergence_form: true,
            descriptor: "zero".into(),
            kind: Kind::Zero,
        }
    }

    /// Evaluate `F` at time `t` on the Duhamel components `u`.
    ///
    /// `chem` must carry the chemical field `v(·,t)` for the chemotaxis
    /// plug-in and is ignored otherwise.
    pub fn evaluate(
        &self,
        spectral: &Spectral<T>,
        _t: T,
        u: &[Field<T>],
        chem: Option<&Field<T>>,
    ) -> Result<Vec<Field<T>>> {
        assert_eq!(
            u.len(),
            self.duhamel_components(),
            "component count mismatch in nonlinearity evaluation"
        );
        match &self.kind {
            Kind::Zero => Ok(vec![Field::zeros(u[0].grid())]),
            Kind::Semilinear { lambda, p } => {
                Ok(vec![u[0].map(|v| *lambda * signed_power(v, *p))])
            }
            Kind::Convection { velocity, p } => {
                let w = u[0].map(|v| signed_power(v, *p));
                let mut f = Field::zeros(u[0].grid());
                for (axis, &a) in velocity.iter().enumerate() {
                    if a != T::zero() {
                        f.add_scaled(a, &spectral.derivative(&w, axis));
                    }
                }
                Ok(vec![f])
            }
            Kind::KellerSegel => {
                let v = chem.ok_or(Error::MissingChemotaxisState)?;
                // F = -∇·(u ∇v), assembled flux-by-flux so the mean is an
                // exact zero of the spectral derivative.
                let mut f = Field::zeros(u[0].grid());
                for axis in 0..self.dim {
                    let flux = u[0].zip_map(&spectral.derivative(v, axis), |a, b| a * b);
                    f.add_scaled(-T::one(), &spectral.derivative(&flux, axis));
                }
                Ok(vec![f])
            }
            Kind::System { laws } => {
                let grid = u[0].grid();
                let mut out = Vec::with_capacity(laws.len());
                for law in laws {
                    let mut f = Field::zeros(grid);
                    let mut point = vec![T::zero(); u.len()];
                    for idx in 0..grid.len() {
                        for (c, comp) in u.iter().enumerate() {
                            point[c] = comp.samples()[idx];
                        }
                        f.samples_mut()[idx] = law(&point);
                    }
                    out.push(f);
                }
                Ok(out)
            }
        }
    }
}

/// `F = λ |u|^{p-1} u` on ℝᴺ: decay exponent `A = N(p-1)/2`, not a
/// divergence.  Requires `p > 1`.
pub fn make_semilinear<T: Scalar>(dim: usize, lambda: T, p: T) -> Result<Nonlinearity<T>> {
    if !(p > T::one()) {
        return Err(Error::domain(
            "make_semilinear",
            format!("power {p} must exceed 1"),
        ));
    }
    let a = real::<T>(dim as f64) * (p - T::one()) / real(2.0);
    Ok(Nonlinearity {
        dim,
        system_size: 1,
        decay_exponent: a,
        divergence_form: false,
        descriptor: format!("semilinear(lambda={lambda}, p={p})"),
        kind: Kind::Semilinear { lambda, p },
    })
}

/// `F = a·∇(|u|^{p-1}u)`: decay exponent `A = N(p-1)/2 + 1/2`, divergence
/// form.  The regime `p ≤ 1 + 1/N` (where even the leading profile is no
/// longer Gaussian) is refused as unsupported.
pub fn make_convection<T: Scalar>(velocity: Vec<T>, p: T) -> Result<Nonlinearity<T>> {
    let dim = velocity.len();
    if dim == 0 {
        return Err(Error::domain("make_convection", "empty velocity vector"));
    }
    let n = real::<T>(dim as f64);
    if !(p > T::one() + T::one() / n) {
        return Err(Error::Unsupported(format!(
            "convection power {p} is at or below 1 + 1/N; the asymptotic profile \
             is not Gaussian there"
        )));
    }
    let a = n * (p - T::one()) / real::<T>(2.0) + real(0.5);
    let descriptor = format!(
        "convection(a=[{}], p={p})",
        velocity
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(",")
    );
    Ok(Nonlinearity {
        dim,
        system_size: 1,
        decay_exponent: a,
        divergence_form: true,
        descriptor,
        kind: Kind::Convection { velocity, p },
    })
}

/// The parabolic chemotaxis coupling `F = -∇·(u∇v)`, `∂ₜv = Δv - v + u`:
/// decay exponent `A = N/2 + 1`, divergence form, needs the auxiliary
/// chemical field.
pub fn make_keller_segel<T: Scalar>(dim: usize) -> Result<Nonlinearity<T>> {
    if !(1..=2).contains(&dim) {
        return Err(Error::Unsupported(format!(
            "chemotaxis coupling shipped for N ∈ {{1,2}}, got {dim}"
        )));
    }
    let a = real::<T>(dim as f64 / 2.0) + T::one();
    Ok(Nonlinearity {
        dim,
        system_size: 2,
        decay_exponent: a,
        divergence_form: true,
        descriptor: format!("keller-segel(dim={dim})"),
        kind: Kind::KellerSegel,
    })
}

/// A pointwise system `F_i = law_i(u)` with growth bound `|F(v)| ≤ C|v|^a`:
/// decay exponent `A = N(a-1)/2`.  The non-superlinear regime
/// `a ≤ 1 + 2/N` is refused.
pub fn make_system<T: Scalar>(
    dim: usize,
    laws: Vec<PointwiseLaw<T>>,
    growth: T,
) -> Result<Nonlinearity<T>> {
    if laws.is_empty() {
        return Err(Error::domain("make_system", "no component laws"));
    }
    let n = real::<T>(dim as f64);
    if !(growth > T::one() + real::<T>(2.0) / n) {
        return Err(Error::Unsupported(format!(
            "system growth exponent {growth} is at or below 1 + 2/N"
        )));
    }
    let a = n * (growth - T::one()) / real(2.0);
    Ok(Nonlinearity {
        dim,
        system_size: laws.len(),
        decay_exponent: a,
        divergence_form: false,
        descriptor: format!("system(m={}, growth={growth})", laws.len()),
        kind: Kind::System { laws },
    })
}

/// The chemotaxis auxiliary state: the chemical field `v` and the initial
/// chemical `ψ` it was started from.
#[derive(Debug, Clone)]
pub struct ChemotaxisState<T: Scalar> {
    pub v: Field<T>,
    pub psi: Field<T>,
}

impl<T: Scalar> ChemotaxisState<T> {
    /// Initial state: `v(·,0) = ψ`.
    pub fn initial(psi: Field<T>) -> Self {
        ChemotaxisState {
            v: psi.clone(),
            psi,
        }
    }
}

/// Recompute the chemical field at time `t` from the density history,
///
/// ```text
///     v(t) = e^{-t} e^{tΔ} ψ + ∫₀ᵗ e^{-(t-s)} e^{(t-s)Δ} u(s) ds,
/// ```
///
/// with the damped heat propagations evaluated spectrally and the history
/// integral by trapezoid over the recorded nodes.  `times`/`u_history`
/// must start at 0 and contain `t` as a node.
pub fn update_chemotaxis<T: Scalar>(
    state: &ChemotaxisState<T>,
    times: &[T],
    u_history: &[Field<T>],
    t: T,
    spectral: &Spectral<T>,
) -> Result<ChemotaxisState<T>> {
    assert_eq!(times.len(), u_history.len(), "history length mismatch");
    if times.is_empty() || times[0] != T::zero() {
        return Err(Error::HistoryGap {
            t: t.to_f64().unwrap_or(f64::NAN),
        });
    }
    let k = times
        .iter()
        .position(|&s| s == t)
        .ok_or(Error::HistoryGap {
            t: t.to_f64().unwrap_or(f64::NAN),
        })?;
    let mut v = spectral.heat(&state.psi, t)?.scale((-t).exp());
    for i in 0..=k {
        let w = trapezoid_weight(&times[..=k], i);
        if w == T::zero() {
            continue; // k = 0: pure initial state
        }
        let lag = t - times[i];
        let term = spectral.heat(&u_history[i], lag)?;
        v.add_scaled(w * (-lag).exp(), &term);
    }
    Ok(ChemotaxisState {
        v: v.with_time_tag(t),
        psi: state.psi.clone(),
    })
}

/// Trapezoid weight of node `i` on the (possibly nonuniform) grid `s`.
pub(crate) fn trapezoid_weight<T: Scalar>(s: &[T], i: usize) -> T {
    let half = real::<T>(0.5);
    if s.len() < 2 {
        return T::zero();
    }
    if i == 0 {
        (s[1] - s[0]) * half
    } else if i == s.len() - 1 {
        (s[i] - s[i - 1]) * half
    } else {
        (s[i + 1] - s[i - 1]) * half
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{lq_norm, Grid};
    use crate::kernel::gauss;

    fn grid() -> Grid<f64> {
        Grid::new(1, 20.0, 512).unwrap()
    }

    fn small_bump(grid: Grid<f64>, mass: f64) -> Field<f64> {
        Field::sample(grid, |x| mass * gauss(&[x[0] - 0.5], 1.0).unwrap())
    }

    #[test]
    fn constructor_guards() {
        assert!(make_semilinear(1, 1.0, 1.0).is_err());
        assert!(make_semilinear(1, 1.0, 0.5).is_err());
        assert!(matches!(
            make_convection(vec![1.0], 1.8),
            Err(Error::Unsupported(_))
        )); // p ≤ 1 + 1/N = 2
        assert!(make_convection(vec![1.0], 2.5).is_ok());
        assert!(make_keller_segel::<f64>(3).is_err());
        let laws: Vec<PointwiseLaw<f64>> = vec![Arc::new(|v: &[f64]| v[0] * v[0])];
        assert!(matches!(
            make_system(1, laws, 2.0),
            Err(Error::Unsupported(_))
        )); // a ≤ 1 + 2/N = 3
    }

    #[test]
    fn decay_exponents() {
        assert_eq!(make_semilinear(1, 1.0, 4.0).unwrap().decay_exponent(), 1.5);
        assert_eq!(make_semilinear(2, 1.0, 3.0).unwrap().decay_exponent(), 2.0);
        assert_eq!(
            make_convection(vec![1.0], 3.0).unwrap().decay_exponent(),
            1.5
        );
        assert_eq!(make_keller_segel::<f64>(1).unwrap().decay_exponent(), 1.5);
        assert_eq!(make_keller_segel::<f64>(2).unwrap().decay_exponent(), 2.0);
        let laws: Vec<PointwiseLaw<f64>> =
            vec![Arc::new(|v: &[f64]| v[1] * v[1]), Arc::new(|v: &[f64]| v[0] * v[0])];
        let sys = make_system(1, laws, 4.0).unwrap();
        assert_eq!(sys.decay_exponent(), 1.5);
        assert_eq!(sys.system_size(), 2);
        assert!(Nonlinearity::<f64>::zero(1).decay_exponent().is_infinite());
    }

    #[test]
    fn structure_flags() {
        assert!(!make_semilinear(1, 1.0, 3.5).unwrap().divergence_form());
        assert!(make_convection(vec![1.0], 3.0).unwrap().divergence_form());
        let ks = make_keller_segel::<f64>(1).unwrap();
        assert!(ks.divergence_form());
        assert!(ks.needs_chemical_field());
        assert_eq!(ks.system_size(), 2);
        assert_eq!(ks.duhamel_components(), 1);
    }

    #[test]
    fn semilinear_is_the_signed_power() {
        let grid = grid();
        let spectral = Spectral::new(grid);
        let nl = make_semilinear(1, -2.0, 2.5).unwrap();
        let u = Field::sample(grid, |x| (x[0] * 0.2).sin() * gauss(x, 1.0).unwrap());
        let f = nl.evaluate(&spectral, 0.0, &[u.clone()], None).unwrap();
        for (fv, uv) in f[0].samples().iter().zip(u.samples()) {
            let expected = -2.0 * uv.abs().powf(1.5) * uv;
            assert!((fv - expected).abs() < 1e-15, "{fv} vs {expected}");
            assert!(fv.is_finite());
        }
        // the origin of the power law is pinned to zero
        assert_eq!(signed_power(0.0f64, 1.5), 0.0);
    }

    #[test]
    fn divergence_forms_have_zero_mean() {
        let grid = grid();
        let spectral = Spectral::new(grid);
        let u = small_bump(grid, 0.3);

        let conv = make_convection(vec![1.7], 3.0).unwrap();
        let f = conv.evaluate(&spectral, 0.0, &[u.clone()], None).unwrap();
        assert!(f[0].integral().abs() < 1e-16);

        let ks = make_keller_segel(1).unwrap();
        let v = small_bump(grid, 0.1);
        let f = ks.evaluate(&spectral, 0.0, &[u], Some(&v)).unwrap();
        assert!(f[0].integral().abs() < 1e-16);
    }

    #[test]
    fn chemotaxis_requires_the_chemical_field() {
        let grid = grid();
        let spectral = Spectral::new(grid);
        let ks = make_keller_segel(1).unwrap();
        let u = small_bump(grid, 0.1);
        assert!(matches!(
            ks.evaluate(&spectral, 0.0, &[u], None),
            Err(Error::MissingChemotaxisState)
        ));
    }

    #[test]
    fn system_components_are_pointwise() {
        let grid = grid();
        let spectral = Spectral::new(grid);
        let laws: Vec<PointwiseLaw<f64>> = vec![
            Arc::new(|v: &[f64]| v[1] * v[1] * v[1]),
            Arc::new(|v: &[f64]| v[0] * v[0] * v[0]),
        ];
        let sys = make_system(1, laws, 3.5).unwrap();
        let u0 = small_bump(grid, 0.2);
        let u1 = small_bump(grid, -0.1);
        let f = sys
            .evaluate(&spectral, 0.0, &[u0.clone(), u1.clone()], None)
            .unwrap();
        assert_eq!(f.len(), 2);
        for i in 0..grid.len() {
            assert!((f[0].samples()[i] - u1.samples()[i].powi(3)).abs() < 1e-18);
            assert!((f[1].samples()[i] - u0.samples()[i].powi(3)).abs() < 1e-18);
        }
    }

    #[test]
    fn chemical_field_starts_at_psi_and_relaxes_without_source() {
        let grid = grid();
        let spectral = Spectral::new(grid);
        let psi = small_bump(grid, 0.05);
        let state = ChemotaxisState::initial(psi.clone());
        let zero = Field::zeros(grid);

        // t = 0 returns ψ itself
        let times = [0.0];
        let history = [zero.clone()];
        let s0 = update_chemotaxis(&state, &times, &history, 0.0, &spectral).unwrap();
        assert!(lq_norm(&s0.v.sub(&psi), 1.0).unwrap() < 1e-15);

        // with zero density the chemical is a damped heat flow of ψ
        let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        let history: Vec<Field<f64>> = times.iter().map(|_| zero.clone()).collect();
        let s2 = update_chemotaxis(&state, &times, &history, 2.0, &spectral).unwrap();
        let expected = crate::spectral::heat_apply(&psi, 2.0).unwrap().scale((-2.0f64).exp());
        assert!(lq_norm(&s2.v.sub(&expected), 1.0).unwrap() < 1e-14);
    }

    #[test]
    fn chemical_field_solves_its_pde() {
        // v from the history formula must satisfy ∂ₜv = Δv − v + u; check
        // with a centered finite difference on a uniform history of the
        // heat flow u(s) = e^{sΔ}u₀.
        let grid = grid();
        let spectral = Spectral::new(grid);
        let u0 = small_bump(grid, 0.1);
        let dt = 0.02;
        let times: Vec<f64> = (0..=50).map(|i| i as f64 * dt).collect();
        let history: Vec<Field<f64>> = times
            .iter()
            .map(|&s| spectral.heat(&u0, s).unwrap())
            .collect();
        let psi = small_bump(grid, 0.05);
        let state = ChemotaxisState::initial(psi);

        let k = 25; // t = 0.5, interior node
        let v_minus = update_chemotaxis(&state, &times, &history, times[k - 1], &spectral)
            .unwrap()
            .v;
        let v_mid = update_chemotaxis(&state, &times, &history, times[k], &spectral)
            .unwrap()
            .v;
        let v_plus = update_chemotaxis(&state, &times, &history, times[k + 1], &spectral)
            .unwrap()
            .v;
        let dv_dt = v_plus.sub(&v_minus).scale(1.0 / (2.0 * dt));
        let rhs = spectral
            .laplacian(&v_mid)
            .sub(&v_mid)
            .add(&history[k]);
        let residual = lq_norm(&dv_dt.sub(&rhs), 1.0).unwrap();
        assert!(residual < 1e-3, "chemical PDE residual {residual:.3e}");
    }

    #[test]
    fn history_gaps_are_rejected() {
        let grid = grid();
        let spectral = Spectral::new(grid);
        let state = ChemotaxisState::initial(small_bump(grid, 0.05));
        let zero = Field::zeros(grid);
        // t not a recorded node
        let times = [0.0, 0.5, 1.0];
        let history = [zero.clone(), zero.clone(), zero.clone()];
        assert!(matches!(
            update_chemotaxis(&state, &times, &history, 0.75, &spectral),
            Err(Error::HistoryGap { .. })
        ));
        // history that does not start at 0
        let times = [0.5, 1.0];
        let history = [zero.clone(), zero.clone()];
        assert!(matches!(
            update_chemotaxis(&state, &times, &history, 1.0, &spectral),
            Err(Error::HistoryGap { .. })
        ));
    }
}
