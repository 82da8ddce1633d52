//! The kernel catalogue: the eight reference kernels, their reference moment
//! values, the tuning brackets, and a name syntax for the command line.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::kernel::{build_kernel_with_nodes, FreeParameter, KernelError, KernelSpec, DEFAULT_KERNEL_TABLE_NODES};
use crate::moments::{compute_report, tune_kernel, MomentError, MomentReport};

/// Tolerance on `M1`, `J1`, `C1` and `sup |Φ₁/H|`.
pub const MOMENT_TOL: f64 = 5e-3;
/// Tolerance on tuned parameters.
pub const PARAM_TOL: f64 = 0.05;

/// Reference row values. A balanced row lists `C1 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub m1: f64,
    pub j1: f64,
    pub c1: f64,
    pub sup_phi1: f64,
    pub parameter: Option<f64>,
}

/// A kernel and, for tuned rows, how to tune it.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub spec: KernelSpec,
    pub tuning: Option<(FreeParameter, (f64, f64))>,
    pub reference: ReferenceRow,
}

const fn row(m1: f64, j1: f64, c1: f64, sup_phi1: f64, parameter: Option<f64>) -> ReferenceRow {
    ReferenceRow {
        m1,
        j1,
        c1,
        sup_phi1,
        parameter,
    }
}

pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "nmn",
            spec: KernelSpec::nmn(),
            tuning: None,
            reference: row(-0.645, 0.0, -0.645, 0.0, None),
        },
        CatalogEntry {
            name: "zhou2",
            spec: KernelSpec::zhou(2),
            tuning: None,
            reference: row(-0.395, 0.090, -0.305, 0.065, None),
        },
        CatalogEntry {
            name: "zhou3",
            spec: KernelSpec::zhou(3),
            tuning: None,
            reference: row(-0.284, 0.113, -0.171, 0.100, None),
        },
        CatalogEntry {
            name: "zhou8",
            spec: KernelSpec::zhou(8),
            tuning: None,
            reference: row(-0.118, 0.118, 0.0, 0.169, None),
        },
        CatalogEntry {
            name: "exp-k2",
            spec: KernelSpec::exp_k2(-6.95),
            tuning: Some((FreeParameter::Beta2, (-12.0, -3.0))),
            reference: row(-0.121, 0.121, 0.0, 0.169, Some(-6.95)),
        },
        CatalogEntry {
            name: "exp-k1",
            spec: KernelSpec::exp_k1(-8.12),
            tuning: Some((FreeParameter::Beta2, (-14.0, -4.0))),
            reference: row(-0.121, 0.121, 0.0, 0.169, Some(-8.12)),
        },
        CatalogEntry {
            name: "rational",
            spec: KernelSpec::rational(20.9),
            tuning: Some((FreeParameter::Q, (5.0, 50.0))),
            reference: row(-0.139, 0.139, 0.0, 0.167, Some(20.9)),
        },
        CatalogEntry {
            name: "pade",
            spec: KernelSpec::pade(-0.30, 23.4),
            tuning: Some((FreeParameter::Q, (5.0, 50.0))),
            reference: row(-0.140, 0.140, 0.0, 0.167, Some(23.4)),
        },
    ]
}

/// Parses `mass`, `nmn`, `zhouK`, or a catalogue name with optional
/// parameters: `exp-k2:-6.95`, `exp-k1:-8.12`, `rational:20.9`,
/// `pade:-0.3,23.4`. Without parameters the reference values are used.
pub fn parse_kernel(name: &str) -> Result<KernelSpec, KernelError> {
    let (head, args) = match name.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (name, None),
    };
    let bad = || KernelError::InvalidSpec(format!("cannot parse kernel {name:?}"));
    let nums: Vec<f64> = match args {
        Some(a) => a
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?,
        None => Vec::new(),
    };
    let spec = match (head, nums.as_slice()) {
        ("mass" | "m", []) => KernelSpec::mass(),
        ("exp-k2", [b]) => KernelSpec::exp_k2(*b),
        ("exp-k1", [b]) => KernelSpec::exp_k1(*b),
        ("rational", [q]) => KernelSpec::rational(*q),
        ("pade", [p, q]) => KernelSpec::pade(*p, *q),
        (h, []) => match catalog().into_iter().find(|e| e.name == h) {
            Some(e) => e.spec,
            None => {
                let k = h.strip_prefix("zhou").and_then(|k| k.parse::<u32>().ok()).ok_or_else(bad)?;
                KernelSpec::zhou(k)
            }
        },
        _ => return Err(bad()),
    };
    spec.validate()?;
    Ok(spec)
}

/// Catalogue entry that can be tuned, by name.
pub fn tunable(name: &str) -> Option<CatalogEntry> {
    catalog().into_iter().find(|e| e.name == name && e.tuning.is_some())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub name: String,
    pub spec: KernelSpec,
    pub parameter: Option<f64>,
    pub report: MomentReport,
    pub reference: ReferenceRow,
    /// Largest deviation from the reference values, moments and parameter
    /// separately.
    pub moment_delta: f64,
    pub parameter_delta: Option<f64>,
    pub pass: bool,
}

#[derive(Debug)]
pub enum RowResult {
    Ok(Box<Table1Row>),
    Failed { name: String, error: MomentError },
}

fn tuned_value(spec: &KernelSpec, free: FreeParameter) -> f64 {
    use crate::kernel::KernelFamily::*;
    match (spec.family, free) {
        (ExpShaped { beta2, .. }, FreeParameter::Beta2) => beta2,
        (RationalEV { q } | PadeEV { q, .. }, FreeParameter::Q) => q,
        (PadeEV { p, .. }, FreeParameter::P) => p,
        _ => f64::NAN,
    }
}

pub fn compute_row(entry: &CatalogEntry, table_nodes: usize) -> Result<Table1Row, MomentError> {
    let (spec, parameter) = match entry.tuning {
        Some((free, bracket)) => {
            let (spec, _) = tune_kernel(&entry.spec, free, bracket)?;
            let v = tuned_value(&spec, free);
            (spec, Some(v))
        }
        None => (entry.spec.clone(), None),
    };
    let report = compute_report(&build_kernel_with_nodes(&spec, table_nodes)?)?;
    let r = entry.reference;
    let deltas = [
        Some(report.m1 - r.m1),
        report.j1.map(|j| j - r.j1),
        report.c1.map(|c| c - r.c1),
        report.sup_phi1.map(|s| s - r.sup_phi1),
    ];
    let moment_delta = deltas.iter().map(|d| d.map_or(f64::INFINITY, f64::abs)).fold(0.0, f64::max);
    let parameter_delta = parameter.zip(r.parameter).map(|(a, b)| (a - b).abs());
    let pass = moment_delta <= MOMENT_TOL && parameter_delta.map_or(true, |d| d <= PARAM_TOL);
    Ok(Table1Row {
        name: entry.name.into(),
        spec,
        parameter,
        report,
        reference: r,
        moment_delta,
        parameter_delta,
        pass,
    })
}

/// Computes every catalogue row; failures are kept per row.
pub fn regenerate_table1(table_nodes: usize) -> Vec<RowResult> {
    catalog()
        .iter()
        .map(|e| match compute_row(e, table_nodes) {
            Ok(r) => RowResult::Ok(Box::new(r)),
            Err(error) => RowResult::Failed {
                name: e.name.into(),
                error,
            },
        })
        .collect()
}

pub fn regenerate_table1_default() -> Vec<RowResult> {
    regenerate_table1(DEFAULT_KERNEL_TABLE_NODES)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

/// Plain-text table with computed values next to the reference ones.
pub fn render_table1(rows: &[RowResult]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>9} {:>8} | {:>8} {:>8} | {:>8} {:>8} | {:>8} {:>8} | {:>7} {:>7} | {:>9} status",
        "kernel", "param", "ref", "M1", "ref", "J1", "ref", "C1", "ref", "sup", "ref", "max dev"
    );
    for row in rows {
        match row {
            RowResult::Ok(r) => {
                let rep = &r.report;
                let rf = &r.reference;
                let _ = writeln!(
                    out,
                    "{:<10} {:>9} {:>8} | {:>8.4} {:>8.3} | {:>8} {:>8.3} | {:>8} {:>8.3} | {:>7} {:>7.3} | {:>9.2e} {}",
                    r.name,
                    opt(r.parameter),
                    rf.parameter.map_or_else(|| "-".into(), |v| format!("{v}")),
                    rep.m1,
                    rf.m1,
                    opt(rep.j1),
                    rf.j1,
                    opt(rep.c1),
                    rf.c1,
                    opt(rep.sup_phi1),
                    rf.sup_phi1,
                    r.moment_delta.max(r.parameter_delta.unwrap_or(0.0)),
                    if r.pass { "PASS" } else { "FAIL" }
                );
            }
            RowResult::Failed { name, error } => {
                let _ = writeln!(out, "{name:<10} FAIL {error}");
            }
        }
    }
    out
}
