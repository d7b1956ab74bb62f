//! The experiment pipeline: assemble the problem from a configuration,
//! integrate it, build the requested expansion profiles, measure the scaled
//! error norms, and write the artifact directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use asympde::dynamics::{make_convection, make_keller_segel, make_semilinear, Nonlinearity};
use asympde::expansion::{build_hat_u, build_tilde_u, build_un, ExpansionVariant};
use asympde::field::{Field, Grid};
use asympde::moments::{bracket, moment_coefficients, MAX_MOMENT_CAP};
use asympde::rates::{measure_error_series, verdict, RateVerdict};
use asympde::solver::{mass_and_moment_audit, solve, CauchyProblem, SolveConfig, TimeGridSpec};

use crate::config::Config;

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    /// Every verdict passed.
    pub all_pass: bool,
}

/// A Gaussian bump of the given total mass: the width scales each axis, the
/// shift moves the center along every axis.
fn gaussian(grid: Grid<f64>, mass: f64, shift: f64, width: f64) -> Field<f64> {
    let norm = mass / (width * std::f64::consts::PI.sqrt()).powi(grid.dim() as i32);
    Field::sample(grid, |x| {
        let r2: f64 = x.iter().map(|&xi| ((xi - shift) / width).powi(2)).sum();
        norm * (-r2).exp()
    })
}

fn initial_data(config: &Config, grid: Grid<f64>) -> Result<Field<f64>> {
    match config.data_family.as_str() {
        "gaussian" => Ok(gaussian(grid, config.data_mass, config.data_shift, config.data_width)),
        "dipole" => {
            // Two opposite-sign lobes of equal mass: total mass exactly zero.
            let plus = gaussian(
                grid,
                config.data_mass,
                config.data_shift + config.data_width,
                config.data_width,
            );
            let minus = gaussian(
                grid,
                config.data_mass,
                config.data_shift - config.data_width,
                config.data_width,
            );
            Ok(plus.sub(&minus))
        }
        other => bail!("data.family `{other}` is not implemented"),
    }
}

fn nonlinearity(config: &Config) -> Result<Nonlinearity<f64>> {
    match config.law_kind.as_str() {
        "heat" => Ok(Nonlinearity::zero(config.grid_dim)),
        "semilinear" => make_semilinear(config.grid_dim, config.law_lambda, config.law_p)
            .map_err(|e| anyhow!("{e}")),
        "convection" => {
            make_convection(vec![config.law_velocity; config.grid_dim], config.law_p)
                .map_err(|e| anyhow!("{e}"))
        }
        "keller-segel" => make_keller_segel(config.grid_dim).map_err(|e| anyhow!("{e}")),
        other => bail!("law.kind `{other}` is not implemented"),
    }
}

fn q_label(q: f64) -> String {
    if q == f64::INFINITY {
        "inf".into()
    } else if q == q.trunc() {
        format!("{}", q as i64)
    } else {
        format!("{q}").replace('.', "p")
    }
}

fn q_csv(q: f64) -> String {
    if q == f64::INFINITY {
        "inf".into()
    } else {
        format!("{q:.16e}")
    }
}

fn variant_parts(variant: ExpansionVariant) -> (&'static str, usize) {
    match variant {
        ExpansionVariant::Un(n) => ("un", n),
        ExpansionVariant::Tilde(j) => ("tilde", j),
        ExpansionVariant::Hat => ("hat", 0),
    }
}

/// One verdict row at full precision (17 significant digits), matching the
/// columns in [`VERDICT_HEADER`].
fn verdict_row(label: &str, variant: ExpansionVariant, q: f64, j: usize, v: &RateVerdict<f64>) -> String {
    let (name, n) = variant_parts(variant);
    format!(
        "{label},{name},{n},{},{j},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{}\n",
        q_csv(q),
        v.fitted_slope,
        v.predicted_exponent,
        v.log_correction,
        v.window.0,
        v.window.1,
        v.tolerance,
        if v.pass { "pass" } else { "fail" }
    )
}

const VERDICT_HEADER: &str = "benchmark,variant,n,q,j,fitted_slope,predicted_exponent,\
                              log_correction,window_lo,window_hi,tolerance,pass\n";

fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))
}

/// Execute a configured experiment and write its artifacts under
/// `out_root/<label>`.
///
/// The manifest is written before the solve, and any abort diagnostic is
/// recorded in `report.txt` before the error propagates, so a failed run
/// still leaves an inspectable directory behind.
pub fn run(config: &Config, out_root: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let dir = out_root.join(config.label());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_file(&dir, "manifest.txt", &config.manifest())?;

    let mut report = String::new();
    let _ = writeln!(report, "experiment {}", config.label());

    match run_inner(config, &dir, &mut report) {
        Ok(all_pass) => {
            let _ = writeln!(report, "overall: {}", if all_pass { "PASS" } else { "FAIL" });
            write_file(&dir, "report.txt", &report)?;
            Ok(RunOutcome { dir, all_pass })
        }
        Err(err) => {
            let _ = writeln!(report, "run aborted: {err:#}");
            write_file(&dir, "report.txt", &report)?;
            Err(err.context(format!("run aborted; diagnostic written to {}", dir.display())))
        }
    }
}

fn run_inner(config: &Config, dir: &Path, report: &mut String) -> Result<bool> {
    let grid = Grid::new(config.grid_dim, config.grid_box, config.grid_points)
        .map_err(|e| anyhow!("{e}"))?;
    let nl = nonlinearity(config)?;
    let data = initial_data(config, grid)?;
    let chem = if nl.needs_chemical_field() {
        Some(gaussian(grid, config.chem_mass, config.chem_shift, config.chem_width))
    } else {
        None
    };

    let _ = writeln!(report, "law: {}", nl.descriptor());
    let _ = writeln!(
        report,
        "grid: dim={} box={} points={}",
        grid.dim(),
        grid.half_extent(),
        grid.points_per_axis()
    );
    let _ = writeln!(
        report,
        "data: {} mass={} shift={} width={}",
        config.data_family, config.data_mass, config.data_shift, config.data_width
    );

    if config.snapshots {
        data.write_csv(&dir.join("initial_state.csv")).map_err(|e| anyhow!("{e}"))?;
    }

    let problem = CauchyProblem {
        grid,
        nonlinearity: nl,
        initial: vec![data],
        chemical_initial: chem,
        horizon: config.horizon,
    };
    let time_grid = TimeGridSpec {
        dt_initial: config.dt_initial,
        uniform_until: config.uniform_until,
        growth: config.growth,
        dt_max: config.dt_max,
    };
    let solve_config = SolveConfig {
        picard_tol: config.picard_tol,
        picard_max_iters: config.picard_max_iters,
        boundary_tol: config.boundary_tol,
        ..SolveConfig::standard()
    };

    let trajectory = solve(&problem, &time_grid, &solve_config)
        .map_err(|e| anyhow!("{e}"))
        .context("integration failed")?;
    let nl = &problem.nonlinearity;
    let _ = writeln!(
        report,
        "integrated to t = {} over {} nodes",
        trajectory.horizon(),
        trajectory.len()
    );

    if config.snapshots {
        let last = trajectory.len() - 1;
        trajectory.state(last)[0]
            .write_csv(&dir.join("final_state.csv"))
            .map_err(|e| anyhow!("{e}"))?;
        if let Some(v) = trajectory.chem(last) {
            v.write_csv(&dir.join("final_chemical.csv")).map_err(|e| anyhow!("{e}"))?;
        }
    }

    // Conservation audit and final moment table.
    let audit_cap = bracket(config.k_weight)
        .map_err(|e| anyhow!("{e}"))?
        .max(2)
        .min(MAX_MOMENT_CAP);
    let audit = mass_and_moment_audit(&trajectory, nl, audit_cap)
        .map_err(|e| anyhow!("{e}"))
        .context("conservation audit failed")?;
    let _ = writeln!(report, "mass drift: {:.3e}", audit.mass_drift);
    let _ = writeln!(
        report,
        "worst moment transport residual (orders <= {}): {:.3e}",
        audit_cap, audit.worst_moment_residual
    );
    let _ = writeln!(report, "largest corrected moment: {:.3e}", audit.max_coefficient);

    let last = trajectory.len() - 1;
    let final_table = moment_coefficients(
        &trajectory.state(last)[0],
        trajectory.horizon(),
        audit_cap,
    )
    .map_err(|e| anyhow!("{e}"))
    .context("final moment table failed")?;
    let mut moments_csv = String::from("alpha,final_moment,transport_residual\n");
    for (alpha, value) in final_table.iter() {
        let residual = audit
            .moment_residuals
            .iter()
            .find(|(a, _)| a == alpha)
            .map(|&(_, r)| r)
            .unwrap_or(f64::NAN);
        let _ = writeln!(moments_csv, "{},{value:.16e},{residual:.16e}", alpha.label());
    }
    write_file(dir, "moments.csv", &moments_csv)?;

    // Expansion profiles for every requested variant.
    let mut profiles = Vec::new();
    for variant in &config.variants {
        match variant.as_str() {
            "un" => {
                for &n in &config.orders {
                    let p = build_un(&trajectory, nl, config.k_weight, n)
                        .map_err(|e| anyhow!("{e}"))
                        .with_context(|| format!("building depth-{n} profile"))?;
                    profiles.push((ExpansionVariant::Un(n), p));
                }
            }
            "tilde" => {
                let p = build_tilde_u(&trajectory, nl, config.k_weight, config.tilde_freeze)
                    .map_err(|e| anyhow!("{e}"))
                    .context("building frozen-series profile")?;
                profiles.push((ExpansionVariant::Tilde(config.tilde_freeze), p));
            }
            "hat" => {
                let p = build_hat_u(&trajectory, nl, config.k_weight)
                    .map_err(|e| anyhow!("{e}"))
                    .context("building limit-coefficient profile")?;
                profiles.push((ExpansionVariant::Hat, p));
            }
            other => bail!("expansion.variants `{other}` is not implemented"),
        }
    }

    // Scaled error-norm series and rate verdicts.
    let a = nl.decay_exponent();
    let mut verdicts_csv = String::from(VERDICT_HEADER);
    let mut all_pass = true;
    let _ = writeln!(report, "verdicts:");
    for (variant, profile) in &profiles {
        for &q in &config.qs {
            for &j in &config.js {
                let series = measure_error_series(&trajectory, profile, q, j, config.weight)
                    .map_err(|e| anyhow!("{e}"))
                    .with_context(|| {
                        format!("measuring {} at q={} j={j}", variant.label(), q_label(q))
                    })?;
                let name = format!("series_{}_q{}_j{}.csv", variant.label(), q_label(q), j);
                write_file(dir, &name, &series.to_csv())?;
                let v = verdict(&series, config.k_weight, a, *variant, config.tolerance, config.window)
                    .map_err(|e| anyhow!("{e}"))
                    .with_context(|| {
                        format!("verdict for {} at q={} j={j}", variant.label(), q_label(q))
                    })?;
                all_pass &= v.pass;
                verdicts_csv.push_str(&verdict_row(config.label(), *variant, q, j, &v));
                let _ = writeln!(report, "  {} q={} j={j}: {v}", variant.label(), q_label(q));
            }
        }
    }
    write_file(dir, "verdicts.csv", &verdicts_csv)?;
    Ok(all_pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scratch(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("asympde-cli-{}-{name}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    /// A fast heat-flow experiment small enough for a unit test.  The box
    /// must hold the spreading Gaussian below the boundary guard for the
    /// whole horizon: at t = 30 the unit bump's tail at |x| = 59 is ~1e-14,
    /// comfortably under the 1e-9 guard.
    fn small_config() -> Config {
        let mut config = Config::default();
        for (key, value) in [
            ("grid.box", "60"),
            ("grid.points", "1024"),
            ("solve.horizon", "30"),
            ("output.snapshots", "true"),
        ] {
            config.apply(key, value).unwrap();
        }
        config
    }

    #[test]
    fn artifacts_are_complete_and_deterministic() {
        let config = small_config();
        let out1 = scratch("det1");
        let out2 = scratch("det2");
        let r1 = run(&config, &out1).unwrap();
        let r2 = run(&config, &out2).unwrap();
        assert!(r1.all_pass);
        for name in [
            "manifest.txt",
            "verdicts.csv",
            "moments.csv",
            "report.txt",
            "series_u0_q1_j0.csv",
            "initial_state.csv",
            "final_state.csv",
        ] {
            let a = fs::read(r1.dir.join(name)).unwrap_or_else(|_| panic!("{name} missing"));
            let b = fs::read(r2.dir.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
        let manifest = fs::read_to_string(r1.dir.join("manifest.txt")).unwrap();
        let reparsed = Config::parse(&manifest, Config::default()).unwrap();
        assert_eq!(reparsed, config, "manifest must reproduce the configuration");
    }

    #[test]
    fn heat_benchmark_verdict_matches_the_reference_slope() {
        let config = crate::registry::resolve("heat-shift-k1").unwrap();
        let out = scratch("heat-bench");
        let outcome = run(&config, &out).unwrap();
        assert!(outcome.all_pass);
        let verdicts = fs::read_to_string(outcome.dir.join("verdicts.csv")).unwrap();
        let row = verdicts.lines().nth(1).expect("one verdict row");
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(&cols[..5], &["heat-shift-k1", "un", "0", "1.0000000000000000e0", "0"]);
        let slope: f64 = cols[5].parse().unwrap();
        assert!(
            (slope - (-1.0377)).abs() < 0.02,
            "fitted slope {slope} strayed from the pinned reference -1.0377"
        );
        let predicted: f64 = cols[6].parse().unwrap();
        assert_eq!(predicted, 0.5);
        assert_eq!(cols[11], "pass");
    }

    #[test]
    fn boundary_breach_aborts_with_a_written_diagnostic() {
        let mut config = small_config();
        config.apply("grid.box", "12").unwrap();
        config.apply("solve.horizon", "100").unwrap();
        let out = scratch("breach");
        let err = run(&config, &out).expect_err("tight box must trip the boundary guard");
        assert!(format!("{err:#}").contains("boundary"));
        let report = fs::read_to_string(out.join("custom").join("report.txt")).unwrap();
        assert!(report.contains("run aborted"), "diagnostic missing from report: {report}");
        assert!(report.contains("boundary"), "diagnostic missing from report: {report}");
    }
}
