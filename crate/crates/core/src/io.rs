//! Data ingestion and serialization of reports, densities, traces and
//! benchmark tables.
//!
//! Floats are written in the shortest form that parses back to the same
//! bits, so every file reloads exactly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, NollikError, Result};
use crate::inference::{DensityGrid, DiscoveryReport, DualRoute, Summary};
use crate::numerics::{std_norm_quantile, student_t_tail};
use crate::sampler::{ChainTrace, DrawRecord, ModelKind, TraceMeta};
use crate::simulation::BenchmarkRow;
use crate::theory::AcceptanceRegion;
use crate::weightcore::GaussianComponent;

/// Shortest round-trip text of `x`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        let mut b = ryu::Buffer::new();
        b.format_finite(x).to_string()
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn parse_f64(s: &str, row: usize, column: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| NollikError::Parse {
        row,
        column: column.to_string(),
        message: format!("'{s}' is not a number"),
    })
}

/// `Φ⁻¹(F_t(t; df))`, evaluated through the lower tail on both sides.
pub fn t_to_z(t: &[f64], df: f64) -> Result<Vec<f64>> {
    if !(df > 0.0) || df.is_nan() {
        return Err(invalid(format!("degrees of freedom must be > 0, got {df}")));
    }
    t.iter()
        .enumerate()
        .map(|(i, x)| {
            if !x.is_finite() {
                return Err(NollikError::NonFinite(format!("t statistic {i} is {x}")));
            }
            if *x == 0.0 {
                return Ok(0.0);
            }
            let z = -std_norm_quantile(student_t_tail(*x, df));
            Ok(if *x < 0.0 { -z } else { z })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceKind {
    Z,
    T { df: f64 },
    /// Per-row degrees of freedom from a `df` column.
    TColumn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub z: Vec<f64>,
    pub group: Option<Vec<String>>,
    pub source_kind: SourceKind,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn is_grouped(&self) -> bool {
        self.group.is_some()
    }

    /// Statistics per group, in order of first appearance.
    pub fn groups(&self) -> Vec<(String, Vec<f64>)> {
        let Some(labels) = &self.group else {
            return vec![(String::new(), self.z.clone())];
        };
        let mut out: Vec<(String, Vec<f64>)> = Vec::new();
        for (x, g) in self.z.iter().zip(labels) {
            match out.iter_mut().find(|(l, _)| l == g) {
                Some((_, v)) => v.push(*x),
                None => out.push((g.clone(), vec![*x])),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadOptions {
    /// Treat the statistics as Student t with these degrees of freedom.
    pub df: Option<f64>,
}

const STAT_NAMES: [&str; 4] = ["statistic", "z", "t", "stat"];

/// Headered CSV with a statistic column and optional `group` and `df`
/// columns.
pub fn load_dataset(path: &Path, opts: LoadOptions) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text, opts)
}

pub fn parse_dataset(text: &str, opts: LoadOptions) -> Result<Dataset> {
    let (d, bad) = parse_rows(text, opts)?;
    let n_bad = bad.len();
    match bad.into_iter().next() {
        None => finish_dataset(d, opts),
        Some(NollikError::Parse { row, column, message }) if n_bad > 1 => Err(NollikError::Parse {
            row,
            column,
            message: format!("{message} ({n_bad} malformed rows in total)"),
        }),
        Some(e) => Err(e),
    }
}

/// Every malformed row of a dataset file.
pub fn dataset_errors(text: &str, opts: LoadOptions) -> Result<Vec<NollikError>> {
    Ok(parse_rows(text, opts)?.1)
}

struct RawDataset {
    z: Vec<f64>,
    group: Option<Vec<String>>,
    df_column: bool,
}

fn parse_rows(text: &str, opts: LoadOptions) -> Result<(RawDataset, Vec<NollikError>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(NollikError::EmptyData("file has no header".into()));
    }
    let stat_col = headers
        .iter()
        .position(|h| STAT_NAMES.contains(&h.as_str()))
        .unwrap_or(0);
    let group_col = headers.iter().position(|h| h == "group");
    let df_col = headers.iter().position(|h| h == "df");
    if df_col.is_some() && opts.df.is_some() {
        return Err(invalid("degrees of freedom given both as a column and as an option"));
    }
    let stat_name = headers[stat_col].clone();

    let mut z = Vec::new();
    let mut groups = Vec::new();
    let mut bad: Vec<NollikError> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec.position().map(|p| p.line() as usize - 1).unwrap_or(i + 1);
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let cell = |c: usize| rec.get(c).unwrap_or("");
        let mut value = match cell(stat_col) {
            "" => Err(NollikError::Parse {
                row,
                column: stat_name.clone(),
                message: "missing value".into(),
            }),
            s => parse_f64(s, row, &stat_name).and_then(|v| {
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(NollikError::Parse {
                        row,
                        column: stat_name.clone(),
                        message: format!("non-finite value {v}"),
                    })
                }
            }),
        };
        if let (Some(c), Ok(t)) = (df_col, &value) {
            value = parse_f64(cell(c), row, "df").and_then(|df| {
                if df > 0.0 && df.is_finite() {
                    Ok(t_to_z(&[*t], df)?[0])
                } else {
                    Err(NollikError::Parse {
                        row,
                        column: "df".into(),
                        message: format!("degrees of freedom must be > 0, got {df}"),
                    })
                }
            });
        }
        if let Some(c) = group_col {
            let g = cell(c);
            if g.is_empty() {
                bad.push(NollikError::Parse {
                    row,
                    column: "group".into(),
                    message: "missing group label".into(),
                });
                continue;
            }
            groups.push(g.to_string());
        }
        match value {
            Ok(v) => z.push(v),
            Err(e) => bad.push(e),
        }
    }
    Ok((
        RawDataset {
            z,
            group: group_col.map(|_| groups),
            df_column: df_col.is_some(),
        },
        bad,
    ))
}

fn finish_dataset(d: RawDataset, opts: LoadOptions) -> Result<Dataset> {
    let mut z = d.z;
    if z.is_empty() {
        return Err(NollikError::EmptyData("no data rows".into()));
    }
    let source_kind = match (d.df_column, opts.df) {
        (true, _) => SourceKind::TColumn,
        (false, Some(df)) => {
            z = t_to_z(&z, df)?;
            SourceKind::T { df }
        }
        (false, None) => SourceKind::Z,
    };
    Ok(Dataset {
        z,
        group: d.group,
        source_kind,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// `z,p1,lfdr,flag` per observation.
pub fn write_report_csv(path: &Path, report: &DiscoveryReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["z", "p1", "lfdr", "flag"])?;
    for i in 0..report.z.len() {
        w.write_record([
            fmt_f64(report.z[i]),
            fmt_f64(report.p1[i]),
            fmt_f64(report.lfdr[i]),
            u8::from(report.flags[i]).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Finite bound or `null` on an unbounded side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionJson {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl From<AcceptanceRegion> for RegionJson {
    fn from(r: AcceptanceRegion) -> Self {
        Self {
            lower: r.lower.is_finite().then_some(r.lower),
            upper: r.upper.is_finite().then_some(r.upper),
        }
    }
}

impl RegionJson {
    pub fn to_region(self) -> Result<AcceptanceRegion> {
        AcceptanceRegion::new(
            self.lower.unwrap_or(f64::NEG_INFINITY),
            self.upper.unwrap_or(f64::INFINITY),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: ModelKind,
    pub weight: String,
    pub n_obs: usize,
    pub alpha: f64,
    pub nu_hat: f64,
    pub bfdr_at_nu: f64,
    pub n_flagged: usize,
    pub region: RegionJson,
    pub posterior: BTreeMap<String, Summary>,
    pub acceptance: BTreeMap<String, f64>,
    pub dual_route: Option<DualRoute>,
}

impl FitSummary {
    pub fn new(report: &DiscoveryReport, trace: &ChainTrace, posterior: Vec<(String, Summary)>) -> Self {
        Self {
            model: trace.meta.model,
            weight: trace.meta.weight_kind.to_string(),
            n_obs: report.z.len(),
            alpha: report.alpha,
            nu_hat: report.nu_hat,
            bfdr_at_nu: report.bfdr_at_nu,
            n_flagged: report.n_flagged(),
            region: report.region.into(),
            posterior: posterior.into_iter().collect(),
            acceptance: trace
                .meta
                .blocks
                .iter()
                .cloned()
                .zip(trace.meta.acceptance.iter().copied())
                .collect(),
            dual_route: None,
        }
    }
}

pub fn write_summary_json(path: &Path, summary: &FitSummary) -> Result<()> {
    write_json(path, summary)
}

pub fn read_summary_json(path: &Path) -> Result<FitSummary> {
    read_json(path)
}

/// Rebuild a report from `report.csv` and the thresholds in `summary.json`.
pub fn read_report(csv_path: &Path, summary_path: &Path) -> Result<DiscoveryReport> {
    let s = read_summary_json(summary_path)?;
    let mut rdr = csv_reader(csv_path)?;
    let (mut z, mut p1, mut lfdr, mut flags) = (vec![], vec![], vec![], vec![]);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        z.push(parse_f64(rec.get(0).unwrap_or(""), row, "z")?);
        p1.push(parse_f64(rec.get(1).unwrap_or(""), row, "p1")?);
        lfdr.push(parse_f64(rec.get(2).unwrap_or(""), row, "lfdr")?);
        flags.push(match rec.get(3).unwrap_or("") {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(NollikError::Parse {
                    row,
                    column: "flag".into(),
                    message: format!("'{other}' is not a flag"),
                })
            }
        });
    }
    Ok(DiscoveryReport {
        z,
        p1,
        lfdr,
        alpha: s.alpha,
        nu_hat: s.nu_hat,
        flags,
        region: s.region.to_region()?,
        bfdr_at_nu: s.bfdr_at_nu,
    })
}

/// Read the `p1` column of a report file.
pub fn read_p1(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv_reader(path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let pc = headers
        .iter()
        .position(|h| h == "p1")
        .ok_or_else(|| invalid("file has no 'p1' column"))?;
    let zc = headers.iter().position(|h| h == "z");
    let (mut z, mut p1) = (vec![], vec![]);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let p = parse_f64(rec.get(pc).unwrap_or(""), i + 1, "p1")?;
        if !(0.0..=1.0).contains(&p) {
            return Err(NollikError::Parse {
                row: i + 1,
                column: "p1".into(),
                message: format!("{p} is not a probability"),
            });
        }
        p1.push(p);
        if let Some(c) = zc {
            z.push(parse_f64(rec.get(c).unwrap_or(""), i + 1, "z")?);
        }
    }
    if p1.is_empty() {
        return Err(NollikError::EmptyData("no p1 rows".into()));
    }
    Ok((z, p1))
}

/// `grid,f0,f1,f`.
pub fn write_densities_csv(path: &Path, dg: &DensityGrid) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["grid", "f0", "f1", "f"])?;
    for i in 0..dg.grid.len() {
        w.write_record([
            fmt_f64(dg.grid[i]),
            fmt_f64(dg.f0_hat[i]),
            fmt_f64(dg.f1_hat[i]),
            fmt_f64(dg.f_hat[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The trace sidecar: run metadata, relevance counts and the
/// hyperparameters used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSidecar {
    pub meta: TraceMeta,
    pub n_components: usize,
    pub lambda_sums: Vec<u64>,
    pub hyperparameters: serde_json::Value,
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// One row per retained iteration; per component `w`, `mu`, `sigma2`, `logk`.
pub fn write_trace_csv(path: &Path, trace: &ChainTrace) -> Result<()> {
    let nc = trace.records.first().map(|r| r.components.len()).unwrap_or(0);
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["iter", "rho", "mu0", "sigma20", "xi", "alpha", "conc"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for j in 1..=nc {
        for p in ["w", "mu", "sigma2", "logk"] {
            header.push(format!("{p}{j}"));
        }
    }
    w.write_record(&header)?;
    let c = &trace.meta.controls;
    let iters = (1..=c.iterations).filter(|t| c.retains(*t));
    for (r, it) in trace.records.iter().zip(iters) {
        let mut row = vec![
            it.to_string(),
            fmt_f64(r.rho),
            fmt_f64(r.mu0),
            fmt_f64(r.sigma20),
            fmt_f64(r.xi),
            opt(r.alpha),
            opt(r.conc),
        ];
        for j in 0..nc {
            row.push(fmt_f64(r.weights[j]));
            row.push(fmt_f64(r.components[j].mu));
            row.push(fmt_f64(r.components[j].sigma2));
            row.push(fmt_f64(r.log_normconsts[j]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(csv_path: &Path, json_path: &Path, trace: &ChainTrace, hyperparameters: serde_json::Value) -> Result<()> {
    write_trace_csv(csv_path, trace)?;
    write_json(
        json_path,
        &TraceSidecar {
            meta: trace.meta.clone(),
            n_components: trace.records.first().map(|r| r.components.len()).unwrap_or(0),
            lambda_sums: trace.lambda_sums.clone(),
            hyperparameters,
        },
    )
}

pub fn read_trace(csv_path: &Path, json_path: &Path) -> Result<ChainTrace> {
    let side: TraceSidecar = read_json(json_path)?;
    let mut rdr = csv_reader(csv_path)?;
    let headers: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let nc = side.n_components;
    if headers.len() != 7 + 4 * nc {
        return Err(invalid(format!(
            "trace has {} columns, expected {}",
            headers.len(),
            7 + 4 * nc
        )));
    }
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let num = |c: usize| parse_f64(&rec[c], row, &headers[c]);
        let maybe = |c: usize| -> Result<Option<f64>> {
            if rec[c].is_empty() {
                Ok(None)
            } else {
                num(c).map(Some)
            }
        };
        let mut weights = Vec::with_capacity(nc);
        let mut components = Vec::with_capacity(nc);
        let mut log_normconsts = Vec::with_capacity(nc);
        for j in 0..nc {
            let b = 7 + 4 * j;
            weights.push(num(b)?);
            components.push(GaussianComponent {
                mu: num(b + 1)?,
                sigma2: num(b + 2)?,
            });
            log_normconsts.push(num(b + 3)?);
        }
        records.push(DrawRecord {
            rho: num(1)?,
            mu0: num(2)?,
            sigma20: num(3)?,
            xi: num(4)?,
            alpha: maybe(5)?,
            conc: maybe(6)?,
            weights,
            components,
            log_normconsts,
        });
    }
    Ok(ChainTrace {
        meta: side.meta,
        records,
        lambda_sums: side.lambda_sums,
    })
}

/// Long format `scenario,method,replication,rule,metric,value,note`.
pub fn write_benchmark_csv(path: &Path, rows: &[BenchmarkRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["scenario", "method", "replication", "rule", "metric", "value", "note"])?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.method.clone(),
            r.replication.to_string(),
            r.rule.clone(),
            r.metric.clone(),
            fmt_f64(r.value),
            r.note.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
