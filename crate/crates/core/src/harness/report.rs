use std::path::Path;
use std::str::FromStr;

use super::sweep::SweepReport;
use crate::error::{Error, Result};
use crate::metrics::render_ratio;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Usage(format!(
                "unknown report format '{other}' (expected csv or json)"
            ))),
        }
    }
}

/// `gamma,tokens_per_sec,tar,speedup`; `tar` is empty when nothing was drafted.
pub fn render_csv(report: &SweepReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["gamma", "tokens_per_sec", "tar", "speedup"])
        .expect("in-memory write");
    for row in &report.rows {
        w.write_record([
            row.gamma.to_string(),
            format!("{:.4}", row.tokens_per_sec),
            row.tar.map(|t| format!("{t:.6}")).unwrap_or_default(),
            render_ratio(row.speedup),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("ascii output")
}

pub fn render_json(report: &SweepReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn emit_report(report: &SweepReport, format: ReportFormat, path: &Path) -> Result<()> {
    let body = match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => render_json(report),
    };
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn load_report(path: &Path) -> Result<SweepReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))
}
