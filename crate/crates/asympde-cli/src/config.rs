//! Flat key–value experiment configuration.
//!
//! The format is deliberately schema-free and diff-able: one `key = value`
//! per line, `#` comments, dotted section prefixes.  Every key has a
//! registered default, unknown keys are rejected, and a written manifest
//! parses back to the identical configuration.

use anyhow::{anyhow, bail, Context, Result};

/// Fully resolved experiment description.  Field order mirrors the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Registry id this configuration started from, if any.
    pub benchmark: Option<String>,
    /// `heat`, `semilinear`, `convection`, or `keller-segel`.
    pub law_kind: String,
    pub law_lambda: f64,
    pub law_p: f64,
    pub law_velocity: f64,
    pub grid_dim: usize,
    pub grid_box: f64,
    pub grid_points: usize,
    /// `gaussian` (mass/shift/width) or `dipole` (zero-mass pair).
    pub data_family: String,
    pub data_mass: f64,
    pub data_shift: f64,
    pub data_width: f64,
    pub chem_mass: f64,
    pub chem_shift: f64,
    pub chem_width: f64,
    pub horizon: f64,
    pub dt_initial: f64,
    pub uniform_until: f64,
    pub growth: f64,
    pub dt_max: f64,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub boundary_tol: f64,
    /// Moment weight K of the expansions.
    pub k_weight: f64,
    /// Expansion depths n for the inductive profiles.
    pub orders: Vec<usize>,
    /// Profile families to measure: `un`, `tilde`, `hat`.
    pub variants: Vec<String>,
    /// Freeze order J of the `tilde` variant.
    pub tilde_freeze: usize,
    /// Lebesgue exponents of the error norms (`inf` allowed).
    pub qs: Vec<f64>,
    /// Derivative orders of the error norms (0 and/or 1).
    pub js: Vec<usize>,
    /// Optional weighted-norm exponent l.
    pub weight: Option<f64>,
    /// Fit window; `None` means the measured series picks its own.
    pub window: Option<(f64, f64)>,
    /// One-sided slack added to every predicted exponent.
    pub tolerance: f64,
    /// Write initial/final state snapshots into the artifact directory.
    pub snapshots: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            benchmark: None,
            law_kind: "heat".into(),
            law_lambda: -1.0,
            law_p: 3.0,
            law_velocity: 1.0,
            grid_dim: 1,
            grid_box: 140.0,
            grid_points: 8192,
            data_family: "gaussian".into(),
            data_mass: 1.0,
            data_shift: 1.0,
            data_width: 1.0,
            chem_mass: 0.0,
            chem_shift: 0.0,
            chem_width: 1.0,
            horizon: 100.0,
            dt_initial: 0.02,
            uniform_until: 1.0,
            growth: 1.05,
            dt_max: 2.0,
            picard_tol: 1e-10,
            picard_max_iters: 25,
            boundary_tol: 1e-9,
            k_weight: 1.0,
            orders: vec![0],
            variants: vec!["un".into()],
            tilde_freeze: 0,
            qs: vec![1.0],
            js: vec![0],
            weight: None,
            window: None,
            tolerance: 0.15,
            snapshots: false,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    if value == "inf" {
        return Ok(f64::INFINITY);
    }
    value
        .parse::<f64>()
        .with_context(|| format!("{key}: expected a number, got `{value}`"))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .with_context(|| format!("{key}: expected a nonnegative integer, got `{value}`"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => bail!("{key}: expected true or false, got `{value}`"),
    }
}

fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

impl Config {
    /// Apply a single `key = value` assignment.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "benchmark" => self.benchmark = Some(value.to_string()),
            "law.kind" => match value {
                "heat" | "semilinear" | "convection" | "keller-segel" => {
                    self.law_kind = value.into()
                }
                _ => bail!(
                    "law.kind: `{value}` is not one of heat, semilinear, convection, \
                     keller-segel"
                ),
            },
            "law.lambda" => self.law_lambda = parse_f64(key, value)?,
            "law.p" => self.law_p = parse_f64(key, value)?,
            "law.velocity" => self.law_velocity = parse_f64(key, value)?,
            "grid.dim" => self.grid_dim = parse_usize(key, value)?,
            "grid.box" => self.grid_box = parse_f64(key, value)?,
            "grid.points" => self.grid_points = parse_usize(key, value)?,
            "data.family" => match value {
                "gaussian" | "dipole" => self.data_family = value.into(),
                _ => bail!("data.family: `{value}` is not one of gaussian, dipole"),
            },
            "data.mass" => self.data_mass = parse_f64(key, value)?,
            "data.shift" => self.data_shift = parse_f64(key, value)?,
            "data.width" => self.data_width = parse_f64(key, value)?,
            "chem.mass" => self.chem_mass = parse_f64(key, value)?,
            "chem.shift" => self.chem_shift = parse_f64(key, value)?,
            "chem.width" => self.chem_width = parse_f64(key, value)?,
            "solve.horizon" => self.horizon = parse_f64(key, value)?,
            "solve.dt-initial" => self.dt_initial = parse_f64(key, value)?,
            "solve.uniform-until" => self.uniform_until = parse_f64(key, value)?,
            "solve.growth" => self.growth = parse_f64(key, value)?,
            "solve.dt-max" => self.dt_max = parse_f64(key, value)?,
            "solve.picard-tol" => self.picard_tol = parse_f64(key, value)?,
            "solve.picard-max-iters" => self.picard_max_iters = parse_usize(key, value)?,
            "solve.boundary-tol" => self.boundary_tol = parse_f64(key, value)?,
            "expansion.k" => self.k_weight = parse_f64(key, value)?,
            "expansion.orders" => {
                self.orders = value
                    .split(',')
                    .map(|s| parse_usize(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "expansion.variants" => {
                let list: Vec<String> =
                    value.split(',').map(|s| s.trim().to_string()).collect();
                for v in &list {
                    if !matches!(v.as_str(), "un" | "tilde" | "hat") {
                        bail!("expansion.variants: `{v}` is not one of un, tilde, hat");
                    }
                }
                self.variants = list;
            }
            "expansion.tilde-freeze" => self.tilde_freeze = parse_usize(key, value)?,
            "rates.q" => {
                self.qs = value
                    .split(',')
                    .map(|s| parse_f64(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "rates.j" => {
                self.js = value
                    .split(',')
                    .map(|s| parse_usize(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "rates.weight" => {
                self.weight = if value == "none" {
                    None
                } else {
                    Some(parse_f64(key, value)?)
                }
            }
            "rates.window" => {
                self.window = if value == "default" {
                    None
                } else {
                    let (lo, hi) = value
                        .split_once(',')
                        .ok_or_else(|| anyhow!("rates.window: expected `lo,hi` or `default`"))?;
                    Some((parse_f64(key, lo.trim())?, parse_f64(key, hi.trim())?))
                }
            }
            "rates.tolerance" => self.tolerance = parse_f64(key, value)?,
            "output.snapshots" => self.snapshots = parse_bool(key, value)?,
            _ => bail!("unknown configuration key `{key}`"),
        }
        Ok(())
    }

    /// Parse a configuration document on top of a base configuration.
    ///
    /// If the document names a `benchmark`, the base is replaced by that
    /// registry entry before the remaining assignments apply, so a manifest
    /// reproduces its run regardless of line order.
    pub fn parse(text: &str, base: Config) -> Result<Config> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
            pairs.push((key.trim().to_string(), value.trim().to_string()));
        }
        let mut config = match pairs.iter().find(|(k, _)| k == "benchmark") {
            Some((_, id)) => crate::registry::resolve(id)
                .ok_or_else(|| anyhow!("benchmark: no registry entry named `{id}`"))?,
            None => base,
        };
        for (key, value) in &pairs {
            config
                .apply(key, value)
                .with_context(|| format!("while applying `{key} = {value}`"))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_dim == 1 || self.grid_dim == 2) {
            bail!("grid.dim: only 1 and 2 are supported, got {}", self.grid_dim);
        }
        if self.law_kind == "keller-segel" && self.chem_mass == 0.0 {
            bail!("keller-segel runs need a chemical seed: set chem.mass");
        }
        if self.orders.is_empty() || self.variants.is_empty() || self.qs.is_empty() {
            bail!("expansion.orders, expansion.variants and rates.q must be nonempty");
        }
        if self.js.iter().any(|&j| j > 1) {
            bail!("rates.j: only derivative orders 0 and 1 are measured");
        }
        Ok(())
    }

    /// Render the fully resolved configuration in the same format `parse`
    /// reads.  Reparsing the output reproduces `self` exactly.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        if let Some(id) = &self.benchmark {
            put("benchmark", id.clone());
        }
        put("law.kind", self.law_kind.clone());
        put("law.lambda", fmt_f64(self.law_lambda));
        put("law.p", fmt_f64(self.law_p));
        put("law.velocity", fmt_f64(self.law_velocity));
        put("grid.dim", self.grid_dim.to_string());
        put("grid.box", fmt_f64(self.grid_box));
        put("grid.points", self.grid_points.to_string());
        put("data.family", self.data_family.clone());
        put("data.mass", fmt_f64(self.data_mass));
        put("data.shift", fmt_f64(self.data_shift));
        put("data.width", fmt_f64(self.data_width));
        put("chem.mass", fmt_f64(self.chem_mass));
        put("chem.shift", fmt_f64(self.chem_shift));
        put("chem.width", fmt_f64(self.chem_width));
        put("solve.horizon", fmt_f64(self.horizon));
        put("solve.dt-initial", fmt_f64(self.dt_initial));
        put("solve.uniform-until", fmt_f64(self.uniform_until));
        put("solve.growth", fmt_f64(self.growth));
        put("solve.dt-max", fmt_f64(self.dt_max));
        put("solve.picard-tol", fmt_f64(self.picard_tol));
        put("solve.picard-max-iters", self.picard_max_iters.to_string());
        put("solve.boundary-tol", fmt_f64(self.boundary_tol));
        put("expansion.k", fmt_f64(self.k_weight));
        put(
            "expansion.orders",
            self.orders
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        put("expansion.variants", self.variants.join(","));
        put("expansion.tilde-freeze", self.tilde_freeze.to_string());
        put(
            "rates.q",
            self.qs.iter().map(|&q| fmt_f64(q)).collect::<Vec<_>>().join(","),
        );
        put(
            "rates.j",
            self.js
                .iter()
                .map(|j| j.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        put(
            "rates.weight",
            match self.weight {
                None => "none".into(),
                Some(l) => fmt_f64(l),
            },
        );
        put(
            "rates.window",
            match self.window {
                None => "default".into(),
                Some((lo, hi)) => format!("{},{}", fmt_f64(lo), fmt_f64(hi)),
            },
        );
        put("rates.tolerance", fmt_f64(self.tolerance));
        put("output.snapshots", self.snapshots.to_string());
        out
    }

    /// Label used for the artifact directory.
    pub fn label(&self) -> &str {
        self.benchmark.as_deref().unwrap_or("custom")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Config::parse("solve.horzon = 10", Config::default()).unwrap_err();
        let chain = format!("{err:#}");
        assert!(chain.contains("unknown configuration key"), "got: {chain}");
    }

    #[test]
    fn manifest_round_trips() {
        let mut config = Config::default();
        config
            .apply("rates.q", "1, 2, inf")
            .and_then(|_| config.apply("expansion.variants", "un, hat"))
            .and_then(|_| config.apply("rates.window", "10, 100"))
            .unwrap();
        let text = config.manifest();
        let reparsed = Config::parse(&text, Config::default()).unwrap();
        assert_eq!(reparsed, config);
        assert_eq!(reparsed.manifest(), text);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# a comment\n\nsolve.horizon = 42 # trailing note\n";
        let config = Config::parse(text, Config::default()).unwrap();
        assert_eq!(config.horizon, 42.0);
    }
}
