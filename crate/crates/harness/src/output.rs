//! Result files: CSV tables, JSON records and per-norm plot data.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ddlab_core::analysis::NormKind;
use serde::Serialize;

use crate::config::{CaseConfig, CaseId, OutputFormat};
use crate::error::{HarnessError, Result};
use crate::study::{Series, StudyResult};

pub const CSV_HEADER: &str = "case,eps,norm,error,eoc,dofs,iters";

/// One line per (series, row, norm); the rate is empty on first rows.
pub fn write_csv<W: Write>(result: &StudyResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for s in &result.series {
        for row in &s.rows {
            for &(kind, err) in &row.errors.errors {
                let rate = row.rate(kind).map(|r| format!("{r:.4}")).unwrap_or_default();
                writeln!(out, "{},{},{},{:.6e},{},{},{}", s.label, row.eps, kind, err, rate, row.dofs, row.iterations)?;
            }
        }
    }
    Ok(())
}

pub fn csv_string(result: &StudyResult) -> String {
    let mut buf = Vec::new();
    write_csv(result, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

#[derive(Serialize)]
struct JsonRow<'a> {
    eps: f64,
    h: f64,
    h_max: f64,
    dofs: usize,
    iterations: usize,
    cg_residual: f64,
    galerkin_residual: f64,
    residual_scale: f64,
    seconds: f64,
    errors: Vec<(&'a str, f64)>,
    eoc: Vec<(&'a str, f64)>,
}

#[derive(Serialize)]
struct JsonSeries<'a> {
    label: &'a str,
    parameter: Option<(&'a str, f64)>,
    rows: Vec<JsonRow<'a>>,
    skipped: Vec<(f64, &'a str)>,
    reference: Option<serde_json::Value>,
    corrected_rates: Vec<(&'a str, f64)>,
}

#[derive(Serialize)]
struct JsonResult<'a> {
    case: &'a str,
    norms: Vec<&'a str>,
    series: Vec<JsonSeries<'a>>,
    metadata: serde_json::Value,
}

fn named(v: &[(NormKind, f64)]) -> Vec<(&'static str, f64)> {
    v.iter().map(|&(k, x)| (k.name(), x)).collect()
}

pub fn to_json(result: &StudyResult) -> serde_json::Value {
    let m = &result.metadata;
    let doc = JsonResult {
        case: result.case.label(),
        norms: result.norms.iter().map(|k| k.name()).collect(),
        series: result
            .series
            .iter()
            .map(|s| JsonSeries {
                label: &s.label,
                parameter: s.parameter.as_ref().map(|(k, v)| (k.as_str(), *v)),
                rows: s
                    .rows
                    .iter()
                    .map(|r| JsonRow {
                        eps: r.eps,
                        h: r.h,
                        h_max: r.h_max,
                        dofs: r.dofs,
                        iterations: r.iterations,
                        cg_residual: r.cg_residual,
                        galerkin_residual: r.galerkin_residual,
                        residual_scale: r.residual_scale,
                        seconds: r.seconds,
                        errors: named(&r.errors.errors),
                        eoc: named(&r.eoc),
                    })
                    .collect(),
                skipped: s.skipped.iter().map(|k| (k.eps, k.reason.as_str())).collect(),
                reference: s.reference.as_ref().map(|r| {
                    serde_json::json!({
                        "eps": r.eps,
                        "h_max": r.h_max,
                        "dofs": r.dofs,
                        "iterations": r.iterations,
                        "galerkin_residual": r.galerkin_residual,
                        "residual_scale": r.residual_scale,
                    })
                }),
                corrected_rates: named(&s.corrected_rates),
            })
            .collect(),
        metadata: serde_json::json!({
            "config_hash": m.config_hash,
            "reference": m.reference,
            "started_at": m.started_at,
            "finished_at": m.finished_at,
            "total_dofs": m.total_dofs,
            "total_iterations": m.total_iterations,
        }),
    };
    serde_json::to_value(doc).expect("plain data serializes")
}

/// Theoretical rate drawn next to a series, where one is known.
pub fn expected_rate(case: CaseId, series: &Series, kind: NormKind) -> Option<f64> {
    match (case, kind) {
        (CaseId::A | CaseId::E | CaseId::CustomRobin | CaseId::CustomNeumann, NormKind::L2D | NormKind::W11D) => Some(2.0),
        (CaseId::A | CaseId::E | CaseId::CustomRobin | CaseId::CustomNeumann, NormKind::W12D) => Some(1.5),
        (CaseId::A | CaseId::E | CaseId::CustomRobin | CaseId::CustomNeumann, NormKind::W1InfD) => Some(1.0),
        (CaseId::B, NormKind::W12D) => Some(1.0),
        (CaseId::D | CaseId::CustomDirichlet, NormKind::W12D) => series.parameter.as_ref().map(|(_, s)| *s),
        (CaseId::D | CaseId::CustomDirichlet, NormKind::L2D) => {
            series.parameter.as_ref().and_then(|(_, s)| (*s == 1.0).then_some(1.0))
        }
        _ => None,
    }
}

/// `log2(error)` of a line of slope `rate` through `(x0, y0)` at each `x`,
/// with `x = log2(1/ε)`.
pub fn slope_line(xs: &[f64], y0: f64, rate: f64) -> Vec<f64> {
    let x0 = xs.first().copied().unwrap_or(0.0);
    xs.iter().map(|x| y0 - rate * (x - x0)).collect()
}

/// Plot data for one norm: a block per series of `log2(1/ε) log2(error)`
/// pairs, then the reference line when a rate is known.
pub fn plot_data(result: &StudyResult, kind: NormKind) -> String {
    let mut out = String::new();
    for s in &result.series {
        let pts: Vec<(f64, f64)> = s
            .rows
            .iter()
            .filter_map(|r| r.error(kind).map(|e| ((1.0 / r.eps).log2(), e.log2())))
            .collect();
        let _ = writeln!(out, "# series {} norm {}", s.label, kind);
        let _ = writeln!(out, "# log2(1/eps) log2(error)");
        for (x, y) in &pts {
            let _ = writeln!(out, "{x:.6} {y:.6}");
        }
        if let (Some(rate), Some(&(_, y0))) = (expected_rate(result.case, s, kind), pts.first()) {
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let _ = writeln!(out, "\n\n# reference slope {rate}");
            for (x, y) in xs.iter().zip(slope_line(&xs, y0, rate)) {
                let _ = writeln!(out, "{x:.6} {y:.6}");
            }
        }
        out.push_str("\n\n");
    }
    out
}

fn write_file(path: PathBuf, bytes: &[u8]) -> Result<PathBuf> {
    fs::write(&path, bytes).map_err(HarnessError::io(&path))?;
    Ok(path)
}

/// Writes `result` in `format` into `dir`, returning the files written.
pub fn emit_results(result: &StudyResult, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    match format {
        OutputFormat::Csv => Ok(vec![write_file(dir.join("results.csv"), csv_string(result).as_bytes())?]),
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(&to_json(result)).map_err(|e| HarnessError::Serialize(e.to_string()))?;
            Ok(vec![write_file(dir.join("results.json"), text.as_bytes())?])
        }
        OutputFormat::Plotdata => result
            .norms
            .iter()
            .map(|&k| write_file(dir.join(format!("plot_{}.dat", k.name())), plot_data(result, k).as_bytes()))
            .collect(),
    }
}

/// Writes every configured format plus `config.resolved.toml` under
/// `<root>/<case>/<timestamp>/` and returns that directory.
pub fn write_study_outputs(result: &StudyResult, cfg: &CaseConfig, root: &Path) -> Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let base = root.join(result.case.label());
    let mut dir = base.join(&stamp);
    let mut k = 1;
    while dir.exists() {
        dir = base.join(format!("{stamp}-{k}"));
        k += 1;
    }
    for &format in &cfg.output.formats {
        emit_results(result, format, &dir)?;
    }
    write_file(dir.join("config.resolved.toml"), cfg.to_toml_string().as_bytes())?;
    Ok(dir)
}

/// Human-readable table of errors with rates in parentheses.
pub fn format_table(result: &StudyResult) -> String {
    let mut out = String::new();
    for s in &result.series {
        let _ = writeln!(out, "series {}", s.label);
        let _ = write!(out, "{:>10} {:>9}", "eps", "dofs");
        for k in &result.norms {
            let _ = write!(out, " {:>20}", k.name());
        }
        out.push('\n');
        for r in &s.rows {
            let _ = write!(out, "{:>10} {:>9}", r.eps, r.dofs);
            for &k in &result.norms {
                let cell = match (r.error(k), r.rate(k)) {
                    (Some(e), Some(q)) => format!("{e:.6} ({q:.2})"),
                    (Some(e), None) => format!("{e:.6}"),
                    _ => String::new(),
                };
                let _ = write!(out, " {cell:>20}");
            }
            out.push('\n');
        }
        for sk in &s.skipped {
            let _ = writeln!(out, "{:>10} skipped: {}", sk.eps, sk.reason);
        }
        if !s.corrected_rates.is_empty() {
            let parts: Vec<String> = s.corrected_rates.iter().map(|(k, r)| format!("{k} {r:.3}")).collect();
            let _ = writeln!(out, "self-convergence corrected rates: {}", parts.join(", "));
        }
    }
    out
}
