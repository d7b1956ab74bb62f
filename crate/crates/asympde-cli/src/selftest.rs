//! Reduced-resolution self-test: one fast check per load-bearing invariant.
//!
//! Every check prints one line — `ok`, `warn`, or `FAIL` — and the suite
//! exits nonzero exactly when a check fails.  A warning marks a check whose
//! defect is attributable to a deliberately coarse grid rather than to the
//! code (the resolution escape hatch exists so degraded environments can
//! still tell "broken" from "coarse").

use anyhow::{anyhow, bail, Result};

use asympde::dynamics::{make_convection, make_semilinear};
use asympde::field::{
    lq_norm, moment_of_field, sample_g_alpha, weighted_l1_norm, Field, Grid,
};
use asympde::kernel::{g_alpha_moment, gauss};
use asympde::moments::commute_check;
use asympde::rates::{fit_slope, NormSeries};
use asympde::solver::{mass_and_moment_audit, solve, CauchyProblem, SolveConfig, TimeGridSpec};
use asympde::MultiIndex;

/// Fault ids accepted by `--inject-fault`, for falsifiability drills.
pub const KNOWN_FAULTS: &[&str] = &["g-alpha-moment"];

enum Outcome {
    Ok(String),
    Warn(String),
    Fail(String),
}

struct Suite {
    failures: usize,
    warnings: usize,
}

impl Suite {
    fn record(&mut self, name: &str, outcome: Outcome) {
        match outcome {
            Outcome::Ok(detail) => println!("ok   {name}: {detail}"),
            Outcome::Warn(detail) => {
                self.warnings += 1;
                println!("warn {name}: {detail}");
            }
            Outcome::Fail(detail) => {
                self.failures += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
}

/// Run the suite.  `points` is the per-axis resolution of the kernel-side
/// checks (default 512; forcing it low demonstrates the coarse-grid warning
/// path).  Returns `Ok(true)` when nothing failed.
pub fn selftest(inject_fault: Option<&str>, points: usize) -> Result<bool> {
    if let Some(fault) = inject_fault {
        if !KNOWN_FAULTS.contains(&fault) {
            bail!(
                "unknown fault id `{fault}`; known ids: {}",
                KNOWN_FAULTS.join(", ")
            );
        }
    }
    let mut suite = Suite { failures: 0, warnings: 0 };

    suite.record(
        "closed-form moment oracle",
        moment_oracle(inject_fault == Some("g-alpha-moment"))?,
    );
    suite.record("kernel semigroup reproduction", semigroup_reproduction(points)?);
    suite.record("projection annihilates controlled moments", projection_annihilation()?);
    suite.record("projection commutes with the heat flow", projection_commutation()?);
    suite.record("divergence-form conservation", conservation_audit()?);
    suite.record("moment transport on an absorbing flow", absorbing_transport()?);
    suite.record("slope fitter on synthetic power laws", slope_fitter()?);

    if suite.failures > 0 {
        println!("selftest: {} failure(s), {} warning(s)", suite.failures, suite.warnings);
    } else {
        println!("selftest: all checks passed ({} warning(s))", suite.warnings);
    }
    Ok(suite.failures == 0)
}

fn kernel_grid(points: usize) -> Result<Grid<f64>> {
    Grid::new(1, 30.0, points).map_err(|e| anyhow!("{e}"))
}

/// `g_alpha_moment` against direct quadrature of the sampled kernel modes,
/// `|α|, |β| ≤ 3`.  With the fault injected, the closed form is corrupted by
/// `1e-3` and the check must fail — that is the falsifiability drill.
fn moment_oracle(inject: bool) -> Result<Outcome> {
    let grid = kernel_grid(512)?;
    let tol = 1e-7;
    let mut worst = 0.0f64;
    for a in 0..=3u32 {
        let alpha = MultiIndex::new(&[a]);
        for b in 0..=3u32 {
            let beta = MultiIndex::new(&[b]);
            for &t in &[0.0, 1.3] {
                let mode = sample_g_alpha(grid, &alpha, t);
                let quadrature = moment_of_field(&mode, &beta);
                let mut closed = g_alpha_moment::<f64>(&alpha, &beta, t);
                if inject {
                    closed += 1e-3;
                }
                let err = (closed - quadrature).abs();
                if err > tol {
                    return Ok(Outcome::Fail(format!(
                        "g_alpha_moment(alpha={}, beta={}, t={t}) deviates from quadrature \
                         by {err:.3e} (limit {tol:.0e})",
                        alpha.label(),
                        beta.label()
                    )));
                }
                worst = worst.max(err);
            }
        }
    }
    Ok(Outcome::Ok(format!("worst deviation {worst:.3e} (limit {tol:.0e})")))
}

/// The discrete heat flow must reproduce the kernel modes exactly:
/// evolving the time-0 mode to `t` equals sampling the mode at `t`.  The
/// evolve time is short on purpose — long evolution damps precisely the
/// high modes a coarse grid mangles, which would hide under-resolution.
fn semigroup_reproduction(points: usize) -> Result<Outcome> {
    let grid = kernel_grid(points)?;
    let tol = 1e-6;
    let mut worst = 0.0f64;
    for a in 0..=3u32 {
        let alpha = MultiIndex::new(&[a]);
        let evolved = asympde::spectral::heat_apply(&sample_g_alpha(grid, &alpha, 0.0), 0.25)
            .map_err(|e| anyhow!("{e}"))?;
        let exact = sample_g_alpha(grid, &alpha, 0.25);
        let err = lq_norm(&evolved.sub(&exact), 2.0).map_err(|e| anyhow!("{e}"))?
            / lq_norm(&exact, 2.0).map_err(|e| anyhow!("{e}"))?;
        worst = worst.max(err);
    }
    if worst <= tol {
        return Ok(Outcome::Ok(format!("worst relative error {worst:.3e} (limit {tol:.0e})")));
    }
    // A spacing much wider than the unit-width kernel modes cannot resolve
    // them; the defect is then a property of the grid, not of the flow.
    if grid.spacing() > 0.5 {
        return Ok(Outcome::Warn(format!(
            "relative error {worst:.3e} exceeds {tol:.0e} on an under-resolving grid \
             (spacing {:.3}); rerun at >= 256 points per axis",
            grid.spacing()
        )));
    }
    Ok(Outcome::Fail(format!("worst relative error {worst:.3e} (limit {tol:.0e})")))
}

fn projection_annihilation() -> Result<Outcome> {
    let grid = kernel_grid(512)?;
    let f = Field::sample(grid, |x| gauss(&[x[0] - 0.5], 0.9).unwrap());
    let i = 3usize;
    let scale = 1.0 + weighted_l1_norm(&f, i as f64).map_err(|e| anyhow!("{e}"))?;
    let tol = 1e-7 * scale;
    let mut worst = 0.0f64;
    for &t in &[0.0, 1.0] {
        let projected = asympde::moments::project(&f, t, i).map_err(|e| anyhow!("{e}"))?;
        for a in 0..=i as u32 {
            let m = moment_of_field(&projected, &MultiIndex::new(&[a])).abs();
            if m > tol {
                return Ok(Outcome::Fail(format!(
                    "order-{a} moment of the projected field is {m:.3e} at t={t} \
                     (limit {tol:.3e})"
                )));
            }
            worst = worst.max(m);
        }
    }
    Ok(Outcome::Ok(format!("worst surviving moment {worst:.3e} (limit {tol:.3e})")))
}

fn projection_commutation() -> Result<Outcome> {
    let grid = kernel_grid(512)?;
    let f = Field::sample(grid, |x| gauss(&[x[0] - 1.0], 1.0).unwrap());
    let tol = 1e-7;
    let defect = commute_check(&f, 1.5, 2).map_err(|e| anyhow!("{e}"))?;
    if defect <= tol {
        Ok(Outcome::Ok(format!("defect {defect:.3e} (limit {tol:.0e})")))
    } else {
        Ok(Outcome::Fail(format!("defect {defect:.3e} (limit {tol:.0e})")))
    }
}

fn short_run(
    nl: asympde::dynamics::Nonlinearity<f64>,
    mass: f64,
) -> Result<asympde::solver::Trajectory<f64>> {
    let grid = Grid::new(1, 25.0, 256).map_err(|e| anyhow!("{e}"))?;
    let norm = mass / std::f64::consts::PI.sqrt();
    let data = Field::sample(grid, |x| norm * (-(x[0] - 0.3f64).powi(2)).exp());
    let problem = CauchyProblem {
        grid,
        nonlinearity: nl,
        initial: vec![data],
        chemical_initial: None,
        horizon: 2.0,
    };
    solve(&problem, &TimeGridSpec::standard(), &SolveConfig::standard())
        .map_err(|e| anyhow!("{e}"))
}

/// Convective flows move mass around without creating or destroying it:
/// the recorded integral must match the initial one at every node, and the
/// corrected-moment transport identity must close.
fn conservation_audit() -> Result<Outcome> {
    let nl = make_convection(vec![1.0], 3.0).map_err(|e| anyhow!("{e}"))?;
    let traj = short_run(nl.clone(), 0.1)?;
    let audit = mass_and_moment_audit(&traj, &nl, 2).map_err(|e| anyhow!("{e}"))?;
    let mass_tol = 1e-8;
    let transport_tol = 1e-6;
    if audit.mass_drift > mass_tol {
        return Ok(Outcome::Fail(format!(
            "mass drifts by {:.3e} (limit {mass_tol:.0e})",
            audit.mass_drift
        )));
    }
    if audit.worst_moment_residual > transport_tol {
        return Ok(Outcome::Fail(format!(
            "moment transport residual {:.3e} (limit {transport_tol:.0e})",
            audit.worst_moment_residual
        )));
    }
    Ok(Outcome::Ok(format!(
        "mass drift {:.3e}, transport residual {:.3e}",
        audit.mass_drift, audit.worst_moment_residual
    )))
}

/// An absorbing semilinear flow genuinely loses mass, but the transport
/// identity still accounts for every bit of it through the source term.
fn absorbing_transport() -> Result<Outcome> {
    let nl = make_semilinear(1, -1.0, 3.0).map_err(|e| anyhow!("{e}"))?;
    let traj = short_run(nl.clone(), 0.1)?;
    let audit = mass_and_moment_audit(&traj, &nl, 2).map_err(|e| anyhow!("{e}"))?;
    let transport_tol = 1e-6;
    if audit.worst_moment_residual > transport_tol {
        return Ok(Outcome::Fail(format!(
            "moment transport residual {:.3e} (limit {transport_tol:.0e})",
            audit.worst_moment_residual
        )));
    }
    if audit.mass_drift <= 0.0 {
        return Ok(Outcome::Fail(
            "absorbing flow shows no mass movement at all; the source term is \
             not being integrated"
                .into(),
        ));
    }
    Ok(Outcome::Ok(format!(
        "transport residual {:.3e} while mass genuinely moved by {:.3e}",
        audit.worst_moment_residual, audit.mass_drift
    )))
}

fn slope_fitter() -> Result<Outcome> {
    let times: Vec<f64> = (0..60).map(|k| 10f64.powf(3.0 * k as f64 / 59.0)).collect();
    let mut worst_plain = 0.0f64;
    let mut worst_log = 0.0f64;
    for &gamma in &[0.5, 2.0] {
        let plain: Vec<(f64, f64)> =
            times.iter().map(|&t| (t, 3.0 * t.powf(-gamma))).collect();
        let series = NormSeries::from_points(1.0, 0, None, plain).map_err(|e| anyhow!("{e}"))?;
        let slope = fit_slope(&series, (5.0, 1000.0), false).map_err(|e| anyhow!("{e}"))?;
        worst_plain = worst_plain.max((slope + gamma).abs());

        let logged: Vec<(f64, f64)> = times
            .iter()
            .map(|&t| (t, 1.7 * t.powf(-gamma) * (2.0 + t).ln()))
            .collect();
        let series = NormSeries::from_points(1.0, 0, None, logged).map_err(|e| anyhow!("{e}"))?;
        let slope = fit_slope(&series, (5.0, 1000.0), true).map_err(|e| anyhow!("{e}"))?;
        worst_log = worst_log.max((slope + gamma).abs());
    }
    if worst_plain > 1e-6 {
        return Ok(Outcome::Fail(format!(
            "plain power-law slope off by {worst_plain:.3e} (limit 1e-6)"
        )));
    }
    if worst_log > 1e-3 {
        return Ok(Outcome::Fail(format!(
            "log-corrected slope off by {worst_log:.3e} (limit 1e-3)"
        )));
    }
    Ok(Outcome::Ok(format!(
        "plain recovery error {worst_plain:.3e}, log-corrected {worst_log:.3e}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_suite_passes() {
        assert!(selftest(None, 256).unwrap());
    }

    #[test]
    fn injected_fault_is_caught() {
        assert!(!selftest(Some("g-alpha-moment"), 256).unwrap());
    }

    #[test]
    fn unknown_fault_id_is_rejected() {
        assert!(selftest(Some("nonsense"), 256).is_err());
    }

    #[test]
    fn coarse_grid_warns_instead_of_failing() {
        assert!(selftest(None, 64).unwrap());
    }
}
