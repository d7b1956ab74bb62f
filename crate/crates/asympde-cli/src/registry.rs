//! Named, fully pinned experiment presets.
//!
//! Each entry resolves to a complete [`Config`]; a config document that
//! names a benchmark may still override individual keys afterwards.

use crate::config::Config;

pub struct Benchmark {
    pub id: &'static str,
    /// What the run demonstrates, in terms of the decay exponents it probes.
    pub summary: &'static str,
    /// Key–value overrides applied on top of the registered defaults.
    pub overrides: &'static [(&'static str, &'static str)],
}

/// Registry, ordered for display.
pub const BENCHMARKS: &[Benchmark] = &[
    Benchmark {
        id: "heat-shift-k1",
        summary: "pure heat flow from a unit-mass Gaussian shifted off the origin; \
                  the weight-1 first-order profile must beat the t^-1/2 mass-kernel rate",
        overrides: &[
            ("law.kind", "heat"),
            ("data.family", "gaussian"),
            ("data.mass", "1"),
            ("data.shift", "1"),
            ("data.width", "1"),
            ("solve.horizon", "100"),
            ("expansion.k", "1"),
            ("expansion.orders", "0"),
            ("expansion.variants", "un"),
            ("rates.q", "1"),
            ("rates.j", "0"),
            ("rates.window", "10,100"),
            ("rates.tolerance", "0.1"),
        ],
    },
    Benchmark {
        id: "cd-p3-k2",
        summary: "cubic convection-diffusion with small data and weight 2; the depth-0 \
                  profile predicts exponent 1/2 and the depth-1 profile sits exactly on \
                  the logarithmic boundary case at exponent 1",
        overrides: &[
            ("law.kind", "convection"),
            ("law.p", "3"),
            ("law.velocity", "1"),
            ("data.family", "gaussian"),
            ("data.mass", "0.1"),
            ("data.shift", "0.7"),
            ("data.width", "1.1"),
            ("solve.horizon", "200"),
            ("expansion.k", "2"),
            ("expansion.orders", "0,1"),
            ("expansion.variants", "un"),
            ("rates.q", "1"),
            ("rates.j", "0"),
            ("rates.window", "10,100"),
            ("rates.tolerance", "0.2"),
        ],
    },
    Benchmark {
        id: "ks-n1",
        summary: "one-dimensional parabolic chemotaxis pair with small data; the \
                  weight-1 profile probes the t^-1/2 decay of the mass-kernel error, \
                  on the logarithmic boundary, in L1 and sup norms",
        overrides: &[
            ("law.kind", "keller-segel"),
            ("data.family", "gaussian"),
            ("data.mass", "0.05"),
            ("data.shift", "0.5"),
            ("data.width", "1"),
            ("chem.mass", "0.02"),
            ("chem.shift", "-0.3"),
            ("chem.width", "1.2"),
            ("solve.horizon", "100"),
            ("expansion.k", "1"),
            ("expansion.orders", "0"),
            ("expansion.variants", "un"),
            ("rates.q", "1,inf"),
            ("rates.j", "0"),
            ("rates.window", "10,100"),
            ("rates.tolerance", "0.15"),
        ],
    },
    Benchmark {
        id: "sl-p4",
        summary: "quartic absorbing semilinear flow with weight 2; inductive depths 0 \
                  and 1 plus the frozen-series and limit-coefficient profiles, all of \
                  which share the boundary exponent 1",
        overrides: &[
            ("law.kind", "semilinear"),
            ("law.lambda", "-1"),
            ("law.p", "4"),
            ("data.family", "gaussian"),
            ("data.mass", "0.15"),
            ("data.shift", "0.5"),
            ("data.width", "1"),
            ("solve.horizon", "200"),
            ("expansion.k", "2"),
            ("expansion.orders", "0,1"),
            ("expansion.variants", "un,tilde,hat"),
            ("expansion.tilde-freeze", "0"),
            ("rates.q", "1"),
            ("rates.j", "0"),
            ("rates.window", "10,100"),
            ("rates.tolerance", "0.2"),
        ],
    },
];

/// Resolve a benchmark id to its full configuration.
pub fn resolve(id: &str) -> Option<Config> {
    let bench = BENCHMARKS.iter().find(|b| b.id == id)?;
    let mut config = Config::default();
    config.benchmark = Some(bench.id.to_string());
    for (key, value) in bench.overrides {
        config
            .apply(key, value)
            .expect("registry overrides are valid by construction");
    }
    Some(config)
}

/// Render the registry listing, optionally filtered by a substring of the id.
pub fn listing(filter: Option<&str>) -> String {
    let mut out = String::new();
    for bench in BENCHMARKS {
        if let Some(f) = filter {
            if !bench.id.contains(f) {
                continue;
            }
        }
        out.push_str(bench.id);
        out.push_str("\n    ");
        out.push_str(bench.summary);
        out.push('\n');
    }
    if out.is_empty() {
        out.push_str("no benchmark matches the filter\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_resolves_and_validates() {
        for bench in BENCHMARKS {
            let config = resolve(bench.id).expect("registered id resolves");
            config.validate().expect("registered config is valid");
            assert_eq!(config.benchmark.as_deref(), Some(bench.id));
        }
    }

    #[test]
    fn listing_contains_required_ids() {
        let text = listing(None);
        for id in ["cd-p3-k2", "ks-n1", "heat-shift-k1"] {
            assert!(text.contains(id), "listing should mention {id}");
        }
        assert!(listing(Some("ks")).contains("ks-n1"));
        assert!(!listing(Some("ks")).contains("cd-p3-k2"));
    }

    #[test]
    fn registry_configs_round_trip_through_manifests() {
        for bench in BENCHMARKS {
            let config = resolve(bench.id).unwrap();
            let reparsed = Config::parse(&config.manifest(), Config::default()).unwrap();
            assert_eq!(reparsed, config);
        }
    }
}
