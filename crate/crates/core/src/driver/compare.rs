//! Side-by-side convergence of several methods on the same data.

use super::config::InversionConfig;
use super::run::{Inversion, InversionResult};
use crate::error::{FwiError, Result};
use crate::io::{self, fmt_f64};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct CompareOutput {
    pub csv: PathBuf,
    pub script: PathBuf,
    pub columns: Vec<String>,
    pub results: Vec<InversionResult>,
}

/// Configs are comparable when they describe the same experiment, data and
/// iteration schedule; only the method and its parameters may differ.
pub fn check_comparable(configs: &[InversionConfig]) -> Result<()> {
    let first = configs
        .first()
        .ok_or_else(|| FwiError::Config("compare needs at least one config".into()))?;
    for c in &configs[1..] {
        let same = c.experiment == first.experiment
            && c.frequencies_hz == first.frequencies_hz
            && c.iterations == first.iterations
            && c.data_dir == first.data_dir
            && c.grid == first.grid
            && c.boundary() == first.boundary()
            && c.initial_model_file == first.initial_model_file
            && c.geometry_file == first.geometry_file;
        if !same {
            return Err(FwiError::Config(format!(
                "configs for {} and {} describe different experiments or data",
                first.method, c.method
            )));
        }
    }
    Ok(())
}

/// Column names from method tags, with `_2`, `_3`, ... on repeats.
pub fn column_names(configs: &[InversionConfig]) -> Vec<String> {
    let mut names: Vec<String> = Vec::with_capacity(configs.len());
    for c in configs {
        let tag = c.method.tag();
        let seen = names.iter().filter(|n| *n == tag || n.starts_with(&format!("{tag}_"))).count();
        names.push(if seen == 0 { tag.to_string() } else { format!("{tag}_{}", seen + 1) });
    }
    names
}

/// `iter,<col...>` with one misfit column per curve; shorter curves leave
/// their trailing cells empty.
pub fn misfit_table(columns: &[String], curves: &[Vec<f64>]) -> String {
    let rows = curves.iter().map(Vec::len).max().unwrap_or(0);
    let mut s = format!("iter,{}\n", columns.join(","));
    for i in 0..rows {
        let cells: Vec<String> = curves.iter().map(|c| c.get(i).map_or(String::new(), |v| fmt_f64(*v))).collect();
        s.push_str(&format!("{i},{}\n", cells.join(",")));
    }
    s
}

/// Matplotlib script that reads `csv_name` (next to the script) and plots
/// every column against the iteration on a log scale.
pub fn plot_script(csv_name: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
"""Plot misfit curves from {csv_name}."""
import csv
import os
import sys

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "{csv_name}")
with open(path, newline="") as f:
    rows = list(csv.DictReader(f))
columns = [c for c in rows[0].keys() if c != "iter"]
for c in columns:
    pts = [(int(r["iter"]), float(r[c])) for r in rows if r[c]]
    plt.semilogy([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3, label=c)
plt.xlabel("iteration")
plt.ylabel("misfit")
plt.legend()
plt.grid(True, which="both", alpha=0.3)
out = os.path.splitext(path)[0] + ".png"
plt.savefig(out, dpi=150, bbox_inches="tight")
print(out)
"#
    )
}

/// Run every config and write the misfit table to `out` and the plotting
/// script next to it (same stem, `.py`).
pub fn compare(configs: Vec<InversionConfig>, out: &Path) -> Result<CompareOutput> {
    check_comparable(&configs)?;
    let columns = column_names(&configs);
    let mut results = Vec::with_capacity(configs.len());
    for c in configs {
        log::info!("compare: running {}", c.method);
        let r = Inversion::from_config(c)?.run().map_err(|(_, e)| e)?;
        results.push(r);
    }
    let curves: Vec<Vec<f64>> = results.iter().map(|r| r.records.iter().map(|x| x.misfit).collect()).collect();
    io::write(out, &misfit_table(&columns, &curves))?;
    let script = out.with_extension("py");
    let name = out.file_name().map_or("misfit.csv".into(), |n| n.to_string_lossy().into_owned());
    io::write(&script, &plot_script(&name))?;
    Ok(CompareOutput {
        csv: out.to_path_buf(),
        script,
        columns,
        results,
    })
}
