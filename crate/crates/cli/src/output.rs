//! Result records and their JSON / CSV renderings.
//!
//! Every number is rounded to [`SIGNIFICANT_DIGITS`] before it is stored, so
//! both renderings print the same shortest round-trip decimal.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::CliError;

pub const SIGNIFICANT_DIGITS: usize = 12;

pub const TOOL: &str = "aggmvh";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Rounds to [`SIGNIFICANT_DIGITS`] significant decimal digits.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v)
        .parse()
        .expect("formatted float parses")
}

pub fn round_grid(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    rows.into_iter()
        .map(|r| r.into_iter().map(round_sig).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmfResult {
    pub pmf_x: f64,
    pub pmf_y_given_x: Option<f64>,
    pub joint: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub full: Vec<Vec<f64>>,
    pub xonly: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskResult {
    pub method: aggmvh::RiskMethod,
    pub risk_full: f64,
    pub risk_xonly: f64,
    pub delta: f64,
    pub delta_bound: f64,
    pub mc_std_error: Option<f64>,
    pub replicates: Option<u64>,
}

impl From<aggmvh::RiskReport> for RiskResult {
    fn from(r: aggmvh::RiskReport) -> Self {
        Self {
            method: r.method,
            risk_full: round_sig(r.risk_full),
            risk_xonly: round_sig(r.risk_xonly),
            delta: round_sig(r.delta),
            delta_bound: round_sig(r.delta_bound),
            mc_std_error: r.mc_std_error.map(round_sig),
            replicates: r.replicates,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSource {
    ClosedForm,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaResult {
    pub row_sums: Vec<u64>,
    pub delta: f64,
    pub delta_source: DeltaSource,
    pub delta_bound: f64,
    pub dominates: bool,
    pub worst_delta: f64,
    pub worst_row_sums: Vec<u64>,
    pub frontier_value: i64,
    pub theorem_applicable: bool,
    pub k_over_m_integral: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    #[serde(rename = "K")]
    pub k: u64,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub l: u64,
    #[serde(rename = "Lp")]
    pub lp: u64,
    pub frontier_value: i64,
    pub worst_delta: f64,
    pub delta_bound: f64,
    pub dominates: bool,
    pub worst_row_sums: String,
}

impl From<&aggmvh::DominanceVerdict> for ScanRow {
    fn from(v: &aggmvh::DominanceVerdict) -> Self {
        Self {
            k: v.design.k,
            m: v.design.m,
            n: v.design.n,
            l: v.design.l,
            lp: v.design.lp,
            frontier_value: v.frontier_value,
            worst_delta: round_sig(v.worst_delta),
            delta_bound: round_sig(v.delta_bound()),
            dominates: v.dominates,
            worst_row_sums: join_counts(&v.worst_row_sums),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    pub skipped: Vec<aggmvh::dominance::SkippedDesign>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RunResult {
    Pmf(PmfResult),
    Estimate(EstimateResult),
    Risk(RiskResult),
    Delta(DeltaResult),
    Scan(ScanResult),
}

/// Everything a run emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub tool: String,
    pub version: String,
    pub mode: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub result: RunResult,
}

pub fn join_counts(v: &[u64]) -> String {
    v.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl RunOutput {
    pub fn to_json(&self) -> Result<String, CliError> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| CliError::Output(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut out = format!("# {TOOL} {VERSION} seed={} mode={}\n", self.seed, self.mode);
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Output(e.to_string());
        match &self.result {
            RunResult::Pmf(r) => {
                w.write_record(["pmf_x", "pmf_y_given_x", "joint"]).map_err(err)?;
                w.write_record([r.pmf_x.to_string(), opt(r.pmf_y_given_x), opt(r.joint)])
                    .map_err(err)?;
            }
            RunResult::Estimate(r) => {
                let cols = r.full.first().map_or(0, Vec::len);
                let mut header = vec!["estimator".to_string(), "row".to_string()];
                header.extend((1..=cols).map(|j| format!("col_{j}")));
                w.write_record(&header).map_err(err)?;
                for (name, grid) in [("full", &r.full), ("xonly", &r.xonly)] {
                    for (i, row) in grid.iter().enumerate() {
                        let mut rec = vec![name.to_string(), (i + 1).to_string()];
                        rec.extend(row.iter().map(f64::to_string));
                        w.write_record(&rec).map_err(err)?;
                    }
                }
            }
            RunResult::Risk(r) => {
                w.write_record([
                    "method",
                    "risk_full",
                    "risk_xonly",
                    "delta",
                    "delta_bound",
                    "mc_std_error",
                    "replicates",
                ])
                .map_err(err)?;
                let method = serde_json::to_value(r.method)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default();
                w.write_record([
                    method,
                    r.risk_full.to_string(),
                    r.risk_xonly.to_string(),
                    r.delta.to_string(),
                    r.delta_bound.to_string(),
                    opt(r.mc_std_error),
                    opt(r.replicates),
                ])
                .map_err(err)?;
            }
            RunResult::Delta(r) => {
                w.write_record([
                    "row_sums",
                    "delta",
                    "delta_source",
                    "delta_bound",
                    "dominates",
                    "worst_delta",
                    "worst_row_sums",
                    "frontier_value",
                    "theorem_applicable",
                    "k_over_m_integral",
                ])
                .map_err(err)?;
                let source = match r.delta_source {
                    DeltaSource::ClosedForm => "closed_form",
                    DeltaSource::Exact => "exact",
                };
                w.write_record([
                    join_counts(&r.row_sums),
                    r.delta.to_string(),
                    source.to_string(),
                    r.delta_bound.to_string(),
                    r.dominates.to_string(),
                    r.worst_delta.to_string(),
                    join_counts(&r.worst_row_sums),
                    r.frontier_value.to_string(),
                    r.theorem_applicable.to_string(),
                    r.k_over_m_integral.to_string(),
                ])
                .map_err(err)?;
            }
            RunResult::Scan(r) => {
                for row in &r.rows {
                    w.serialize(row).map_err(err)?;
                }
                if r.rows.is_empty() {
                    w.write_record([
                        "K",
                        "m",
                        "n",
                        "L",
                        "Lp",
                        "frontier_value",
                        "worst_delta",
                        "delta_bound",
                        "dominates",
                        "worst_row_sums",
                    ])
                    .map_err(err)?;
                }
            }
        }
        let body = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
        out.push_str(&String::from_utf8(body).map_err(|e| CliError::Output(e.to_string()))?);
        if let RunResult::Scan(r) = &self.result {
            for s in &r.skipped {
                let d = s.design;
                out.push_str(&format!(
                    "# skipped K={} m={} n={} L={} Lp={}: {}\n",
                    d.k, d.m, d.n, d.l, d.lp, s.reason
                ));
            }
        }
        Ok(out)
    }

    pub fn render(&self, format: OutputFormat) -> Result<String, CliError> {
        match format {
            OutputFormat::Json => self.to_json(),
            OutputFormat::Csv => self.to_csv(),
        }
    }
}

/// Writes `text` to `path` through a temporary file and a rename, or to
/// standard output when no path is given.
pub fn write_atomic(text: &str, path: Option<&Path>) -> Result<(), CliError> {
    let Some(path) = path else {
        std::io::stdout().write_all(text.as_bytes())?;
        return Ok(());
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}
