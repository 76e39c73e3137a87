use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy_at_optimal_threshold, auroc, average_precision, roc_curve, split_by_label, ScoredSample};
use crate::detector::balanced_accuracy;
use crate::error::{ConvError, Result};
use crate::transforms::PerturbationSpec;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceMetrics {
    pub count: usize,
    pub natural: usize,
    pub generated: usize,
    pub auroc: Option<f64>,
    pub ap: Option<f64>,
    /// Balanced accuracy at the report's global threshold.
    pub acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub perturbation: PerturbationSpec,
    pub auroc: f64,
    pub ap: f64,
    pub acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub schema: u32,
    pub count: usize,
    pub auroc: f64,
    pub ap: f64,
    pub acc: f64,
    pub threshold: f64,
    pub per_source: BTreeMap<String, SourceMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robustness: Option<Vec<RobustnessRow>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = ConvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(ConvError::InvalidInput(format!("unknown report format `{other}`"))),
        }
    }
}

impl ReportFormat {
    /// From a file extension, defaulting to JSON.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

/// Sources containing only generated samples are ranked against every
/// natural sample in the set; sources with only natural samples get no metrics.
pub fn evaluate(samples: &[ScoredSample]) -> Result<EvalReport> {
    let (acc, threshold) = accuracy_at_optimal_threshold(samples)?;
    let mut by_source: BTreeMap<&str, Vec<&ScoredSample>> = BTreeMap::new();
    for s in samples {
        by_source.entry(s.source_id.as_str()).or_default().push(s);
    }
    let naturals: Vec<&ScoredSample> = samples.iter().filter(|s| !s.label.is_generated()).collect();
    let mut per_source = BTreeMap::new();
    for (source, members) in by_source {
        let generated = members.iter().filter(|s| s.label.is_generated()).count();
        let natural = members.len() - generated;
        let pool: Vec<ScoredSample> = match (natural, generated) {
            (_, 0) => Vec::new(),
            (0, _) => members.iter().chain(&naturals).map(|&s| s.clone()).collect(),
            _ => members.iter().map(|&s| s.clone()).collect(),
        };
        let metrics = if pool.is_empty() {
            SourceMetrics {
                count: members.len(),
                natural,
                generated,
                auroc: None,
                ap: None,
                acc: None,
            }
        } else {
            let (n, g) = split_by_label(&pool)?;
            SourceMetrics {
                count: members.len(),
                natural,
                generated,
                auroc: Some(auroc(&pool)?),
                ap: Some(average_precision(&pool)?),
                acc: Some(balanced_accuracy(&n, &g, threshold)),
            }
        };
        per_source.insert(source.to_string(), metrics);
    }
    Ok(EvalReport {
        schema: REPORT_SCHEMA,
        count: samples.len(),
        auroc: auroc(samples)?,
        ap: average_precision(samples)?,
        acc,
        threshold,
        per_source,
        robustness: None,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn emit_report(report: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Csv => {
            let mut out = String::from("scope,key,count,auroc,ap,acc,threshold\n");
            let _ = writeln!(
                out,
                "overall,,{},{},{},{},{}",
                report.count, report.auroc, report.ap, report.acc, report.threshold
            );
            for (source, m) in &report.per_source {
                let _ = writeln!(
                    out,
                    "source,{},{},{},{},{},",
                    csv_field(source),
                    m.count,
                    opt(m.auroc),
                    opt(m.ap),
                    opt(m.acc)
                );
            }
            for row in report.robustness.iter().flatten() {
                let _ = writeln!(
                    out,
                    "robustness,{},{},{},{},{},",
                    row.perturbation, report.count, row.auroc, row.ap, row.acc
                );
            }
            Ok(out)
        }
    }
}

pub fn parse_report(json: &str) -> Result<EvalReport> {
    let report: EvalReport = serde_json::from_str(json)?;
    if report.schema != REPORT_SCHEMA {
        return Err(ConvError::InvalidInput(format!(
            "unsupported report schema {}",
            report.schema
        )));
    }
    Ok(report)
}

pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    let text = emit_report(report, ReportFormat::for_path(path))?;
    std::fs::write(path, text).map_err(|e| ConvError::from(e).in_file(path))
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// ROC step curve as a standalone SVG with the AUROC in the corner.
pub fn roc_svg(samples: &[ScoredSample]) -> Result<String> {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 40.0;
    let points = roc_curve(samples)?;
    let area = auroc(samples)?;
    let px = |x: f64| PAD + x * SIZE;
    let py = |y: f64| PAD + (1.0 - y) * SIZE;
    let path = points
        .iter()
        .map(|&(x, y)| format!("{},{}", px(x), py(y)))
        .collect::<Vec<_>>()
        .join(" ");
    let total = SIZE + 2.0 * PAD;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    let _ = writeln!(svg, r#"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="4 4"/>"#,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    let _ = writeln!(svg, r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{path}"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14" text-anchor="end">AUROC = {area:.4}</text>"#,
        px(1.0) - 8.0,
        py(0.0) - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">false positive rate</text>"#,
        px(0.5),
        total - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">true positive rate</text>"#,
        py(0.5),
        py(0.5)
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_roc_svg(samples: &[ScoredSample], path: &Path) -> Result<()> {
    let svg = roc_svg(samples)?;
    std::fs::write(path, svg).map_err(|e| ConvError::from(e).in_file(path))
}
