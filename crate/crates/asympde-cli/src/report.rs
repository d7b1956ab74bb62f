//! Re-render the summary of a finished run from its artifact directory.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Print a digest of `manifest.txt` + `verdicts.csv` from an artifact
/// directory.  Returns whether every verdict in the directory passed.
pub fn report(dir: &Path) -> Result<bool> {
    let manifest_path = dir.join("manifest.txt");
    let manifest = fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;

    println!("artifact directory {}", dir.display());
    for key in ["benchmark", "law.kind", "solve.horizon", "expansion.k"] {
        if let Some(line) = manifest.lines().find(|l| {
            l.split('=').next().map(str::trim) == Some(key)
        }) {
            println!("  {}", line.trim());
        }
    }

    let verdicts_path = dir.join("verdicts.csv");
    let verdicts = match fs::read_to_string(&verdicts_path) {
        Ok(text) => text,
        Err(_) => {
            // An aborted run has no verdicts; surface its diagnostic instead.
            let report_path = dir.join("report.txt");
            let text = fs::read_to_string(&report_path)
                .with_context(|| format!("reading {}", report_path.display()))?;
            println!("no verdicts recorded; report says:");
            for line in text.lines() {
                println!("  {line}");
            }
            bail!("run did not produce verdicts");
        }
    };

    let mut all_pass = true;
    let mut rows = 0usize;
    for line in verdicts.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 12 {
            continue;
        }
        rows += 1;
        let pass = cols[11] == "pass";
        all_pass &= pass;
        let slope: f64 = cols[5].parse().unwrap_or(f64::NAN);
        let predicted: f64 = cols[6].parse().unwrap_or(f64::NAN);
        let log = cols[7] == "true";
        let q = cols[3].parse::<f64>().map(|v| format!("{v}")).unwrap_or_else(|_| cols[3].into());
        println!(
            "  {} n={} q={q} j={}: slope {slope:.4} vs predicted -{predicted:.4}{}: {}",
            cols[1],
            cols[2],
            cols[4],
            if log { " (log-corrected)" } else { "" },
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if rows == 0 {
        bail!("verdicts.csv contains no rows");
    }
    println!("overall: {}", if all_pass { "PASS" } else { "FAIL" });
    Ok(all_pass)
}
