//! Matplotlib scripts that render the standard figure of each experiment from its CSVs.

use crate::config::ExperimentKind;
use crate::output::Table;

/// One panel: x column against y columns of a table.
struct Panel {
    table: &'static str,
    x: &'static str,
    ys: &'static [&'static str],
    err: Option<&'static str>,
    logx: bool,
    logy: bool,
    /// Vertical reference lines.
    vlines: &'static [f64],
    title: &'static str,
}

fn panels(kind: ExperimentKind) -> Vec<Panel> {
    let p = |table, x, ys, err, logx, logy, vlines, title| Panel { table, x, ys, err, logx, logy, vlines, title };
    match kind {
        ExperimentKind::PhaseScan => vec![p("phase_scan", "kappa", &["p", "oracle_p"], Some("stderr"), false, false, &[16.0], "collision probability")],
        ExperimentKind::HardyEstimate => vec![p("history", "level", &["value", "analytic"], None, false, false, &[], "Rayleigh lower bound by level")],
        ExperimentKind::MultiparticleHardy => vec![p("summary", "n_particles", &["inverse_ratio", "floor"], Some("inverse_ratio_stderr"), false, false, &[], "many-particle Hardy constant")],
        ExperimentKind::PsiTest => vec![
            p("psi", "kappa", &["fitted_exponent", "predicted_exponent"], None, false, false, &[], "tail exponent of truncated integrals"),
        ],
        ExperimentKind::LyapunovAudit => vec![p("samples", "min_pair_distance", &["relative_residual"], None, true, true, &[], "stationarity residual")],
        ExperimentKind::HeatKernelCheck => vec![
            p("heat_kernel", "t", &["slope", "reference_slope"], None, true, false, &[], "near-coincidence log-log slope"),
            p("heat_kernel", "t", &["envelope_constant"], None, true, false, &[], "envelope constant C(t)"),
        ],
        ExperimentKind::FeynmanKac => vec![p("feynman_kac", "lambda", &["monte_carlo", "bvp"], Some("monte_carlo_stderr"), false, false, &[], "resolvent value")],
        ExperimentKind::Krylov => vec![p("krylov", "lambda", &["lhs", "rhs"], Some("lhs_stderr"), true, true, &[], "Krylov functional")],
        ExperimentKind::RawEnsemble => vec![p("summary", "epsilon", &["collision_probability"], Some("stderr"), true, false, &[], "collision probability")],
    }
}

fn py_list(items: &[&str]) -> String {
    format!("[{}]", items.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(", "))
}

fn py_opt(s: Option<&str>) -> String {
    s.map_or("None".into(), |s| format!("{s:?}"))
}

fn py_bool(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

/// Script for the tables actually written; panels whose table is absent are skipped.
pub fn plot_script(kind: ExperimentKind, tables: &[Table]) -> String {
    let specs: Vec<String> = panels(kind)
        .into_iter()
        .filter(|p| tables.iter().any(|t| t.name == p.table))
        .map(|p| {
            let vlines = format!("[{}]", p.vlines.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", "));
            format!(
                "    dict(csv={:?}, x={:?}, ys={}, err={}, logx={}, logy={}, vlines={}, title={:?}),",
                format!("{}.csv", p.table),
                p.x,
                py_list(p.ys),
                py_opt(p.err),
                py_bool(p.logx),
                py_bool(p.logy),
                vlines,
                p.title
            )
        })
        .collect();
    format!(
        r#"#!/usr/bin/env python3
"""Standard figure for the {name} experiment. Run from the output directory."""
import csv
import math
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

PANELS = [
{panels}
]


def column(rows, name):
    out = []
    for r in rows:
        v = r.get(name, "")
        try:
            out.append(float(v))
        except ValueError:
            out.append(math.nan)
    return out


def main():
    here = os.path.dirname(os.path.abspath(__file__))
    if not PANELS:
        sys.exit("no table to plot")
    fig, axes = plt.subplots(1, len(PANELS), figsize=(5 * len(PANELS), 4), squeeze=False)
    for ax, spec in zip(axes[0], PANELS):
        with open(os.path.join(here, spec["csv"]), newline="") as f:
            rows = list(csv.DictReader(f))
        x = column(rows, spec["x"])
        for y in spec["ys"]:
            if rows and y not in rows[0]:
                continue
            yv = column(rows, y)
            if spec["err"] and y == spec["ys"][0] and spec["err"] in rows[0]:
                ax.errorbar(x, yv, yerr=column(rows, spec["err"]), marker="o", capsize=3, label=y)
            else:
                ax.plot(x, yv, marker="s", linestyle="--", label=y)
        for v in spec["vlines"]:
            ax.axvline(v, color="grey", linewidth=0.8)
        if spec["logx"]:
            ax.set_xscale("log")
        if spec["logy"]:
            ax.set_yscale("log")
        ax.set_xlabel(spec["x"])
        ax.set_title(spec["title"])
        ax.legend()
    fig.tight_layout()
    out = os.path.join(here, "{name}.png")
    fig.savefig(out, dpi=150)
    print(out)


if __name__ == "__main__":
    main()
"#,
        name = kind.name(),
        panels = specs.join("\n")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_lists_written_tables_only() {
        let t = Table::new("phase_scan", &[("kappa", "1")]);
        let s = plot_script(ExperimentKind::PhaseScan, &[t]);
        assert!(s.contains("csv=\"phase_scan.csv\""));
        assert!(s.contains("vlines=[16.0]"));
        let s = plot_script(ExperimentKind::PhaseScan, &[]);
        assert!(!s.contains("csv=\""));
    }
}
