//! Aggregate tables over seeds: one row per (scenario, model, algorithm).
//!
//! Column order: for each k, `ndcg@k recall@k hit@k`; then for each k,
//! `rel_items@k rel_eff@k`; then `total_min` (unlearning time summed over
//! requests, minutes) and `avg_req_s` (seconds per request).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::models::ModelKind;
use crate::scenarios::ScenarioKind;
use crate::unlearn::{combined_status, Algorithm, StepStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub scenario: Option<ScenarioKind>,
    pub model: ModelKind,
    pub algorithm: Algorithm,
    pub status: StepStatus,
    pub seeds: usize,
    /// Cells in [`columns`] order; `None` when no seed has the value.
    pub cells: Vec<Option<MeanStd>>,
}

/// Column names for a k list.
pub fn columns(ks: &[usize]) -> Vec<String> {
    let mut out = Vec::new();
    for k in ks {
        out.extend(["ndcg", "recall", "hit"].map(|m| format!("{m}@{k}")));
    }
    for k in ks {
        out.extend(["rel_items", "rel_eff"].map(|m| format!("{m}@{k}")));
    }
    out.push("total_min".into());
    out.push("avg_req_s".into());
    out
}

const TIME_COLUMNS: usize = 2;

fn report_values(r: &MetricsReport, ks: &[usize]) -> Vec<Option<f64>> {
    let mut out = Vec::new();
    for k in ks {
        let m = r.at(*k).and_then(|m| m.unlearned);
        out.extend([m.map(|m| m.ndcg), m.map(|m| m.recall), m.map(|m| m.hit)]);
    }
    for k in ks {
        let m = r.at(*k);
        out.extend([m.and_then(|m| m.rel_items), m.and_then(|m| m.rel_eff)]);
    }
    out.push(Some(r.timing.unlearn_total_s / 60.0));
    out.push(Some(r.timing.unlearn_avg_per_request_s));
    out
}

/// The shared k list of `reports`.
pub fn common_ks(reports: &[MetricsReport]) -> Result<Vec<usize>> {
    let ks: Vec<usize> = reports.first().map(|r| r.per_k.iter().map(|m| m.k).collect()).unwrap_or_default();
    for r in reports {
        if r.per_k.iter().map(|m| m.k).ne(ks.iter().copied()) {
            return Err(Error::Invalid(format!(
                "reports disagree on the k list ({:?} vs {ks:?})",
                r.per_k.iter().map(|m| m.k).collect::<Vec<_>>()
            )));
        }
    }
    Ok(ks)
}

/// Groups reports by (scenario, model, algorithm) and takes mean ± sample
/// std of every cell over the seeds.
pub fn aggregate(reports: &[MetricsReport]) -> Result<(Vec<usize>, Vec<TableRow>)> {
    let ks = common_ks(reports)?;
    let mut groups: BTreeMap<(Option<ScenarioKind>, ModelKind, Algorithm), Vec<&MetricsReport>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.scenario, r.model, r.algorithm)).or_default().push(r);
    }
    let width = columns(&ks).len();
    let rows = groups
        .into_iter()
        .map(|((scenario, model, algorithm), rs)| {
            let values: Vec<Vec<Option<f64>>> = rs.iter().map(|r| report_values(r, &ks)).collect();
            let cells = (0..width)
                .map(|c| MeanStd::of(&values.iter().filter_map(|v| v[c]).collect::<Vec<_>>()))
                .collect();
            TableRow {
                scenario,
                model,
                algorithm,
                status: combined_status(rs.iter().map(|r| r.status)),
                seeds: rs.len(),
                cells,
            }
        })
        .collect();
    Ok((ks, rows))
}

/// Renders the aggregate table. Metric cells of diverged rows read `div.`
/// and every cell of a not-applicable row reads `n/a`; missing values read
/// `-`. The CSV form keeps full precision.
pub fn emit_table(reports: &[MetricsReport], format: TableFormat) -> Result<String> {
    let (ks, rows) = aggregate(reports)?;
    match format {
        TableFormat::Text => Ok(render_text(&ks, &rows)),
        TableFormat::Csv => render_csv(&ks, &rows),
    }
}

fn text_cell(row: &TableRow, c: usize, width: usize) -> String {
    let is_time = c >= width - TIME_COLUMNS;
    match row.status {
        StepStatus::NotApplicable => return "n/a".into(),
        StepStatus::Diverged if !is_time => return "div.".into(),
        _ => {}
    }
    match row.cells[c] {
        None => "-".into(),
        Some(m) if is_time => format!("{:.3} ± {:.3}", m.mean, m.std),
        Some(m) => format!("{:.4} ± {:.4}", m.mean, m.std),
    }
}

fn render_text(ks: &[usize], rows: &[TableRow]) -> String {
    let cols = columns(ks);
    let mut header = vec!["Model".to_string(), "Algorithm".to_string()];
    header.extend(cols.iter().cloned());
    let mut lines: Vec<Vec<String>> = vec![header];
    for row in rows {
        let mut line = vec![row.model.to_string(), row.algorithm.to_string()];
        line.extend((0..cols.len()).map(|c| text_cell(row, c, cols.len())));
        lines.push(line);
    }
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &lines {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn csv_header(ks: &[usize]) -> Vec<String> {
    let mut h: Vec<String> = ["scenario", "model", "algorithm", "status", "seeds"].map(String::from).to_vec();
    for c in columns(ks) {
        h.push(format!("{c}_mean"));
        h.push(format!("{c}_std"));
        h.push(format!("{c}_n"));
    }
    h
}

fn render_csv(ks: &[usize], rows: &[TableRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header(ks))?;
    for row in rows {
        let mut rec = vec![
            row.scenario.map(|s| s.name().to_string()).unwrap_or_default(),
            row.model.name().to_string(),
            row.algorithm.name().to_string(),
            row.status.label().to_string(),
            row.seeds.to_string(),
        ];
        for cell in &row.cells {
            match cell {
                Some(m) => rec.extend([m.mean.to_string(), m.std.to_string(), m.n.to_string()]),
                None => rec.extend([String::new(), String::new(), String::new()]),
            }
        }
        w.write_record(rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))
}

fn parse_status(s: &str) -> Result<StepStatus> {
    [StepStatus::Ok, StepStatus::Diverged, StepStatus::NotApplicable]
        .into_iter()
        .find(|x| x.label() == s)
        .ok_or_else(|| Error::Invalid(format!("unknown status {s:?}")))
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Invalid(format!("bad number {s:?}")))
}

/// Reads a CSV table back into its k list and rows.
pub fn parse_table_csv(text: &str) -> Result<(Vec<usize>, Vec<TableRow>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let mut ks = Vec::new();
    for h in &header {
        if let Some(k) = h.strip_prefix("ndcg@").and_then(|k| k.strip_suffix("_mean")) {
            ks.push(parse_num(k)?);
        }
    }
    if header != csv_header(&ks) {
        return Err(Error::Invalid("unexpected table header".into()));
    }
    let width = columns(&ks).len();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let scenario = match &rec[0] {
            "" => None,
            "sensitive" => Some(ScenarioKind::Sensitive),
            "spam" => Some(ScenarioKind::Spam),
            other => return Err(Error::Invalid(format!("unknown scenario {other:?}"))),
        };
        let mut cells = Vec::with_capacity(width);
        for c in 0..width {
            let base = 5 + 3 * c;
            cells.push(if rec[base].is_empty() {
                None
            } else {
                Some(MeanStd {
                    mean: parse_num(&rec[base])?,
                    std: parse_num(&rec[base + 1])?,
                    n: parse_num(&rec[base + 2])?,
                })
            });
        }
        rows.push(TableRow {
            scenario,
            model: ModelKind::parse(&rec[1])?,
            algorithm: Algorithm::parse(&rec[2])?,
            status: parse_status(&rec[3])?,
            seeds: parse_num(&rec[4])?,
            cells,
        });
    }
    Ok((ks, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert!((m.std - 1.0).abs() < 1e-12);
        assert_eq!(MeanStd::of(&[4.0]).unwrap().std, 0.0);
        assert!(MeanStd::of(&[]).is_none());
    }

    #[test]
    fn column_order() {
        assert_eq!(
            columns(&[10]),
            ["ndcg@10", "recall@10", "hit@10", "rel_items@10", "rel_eff@10", "total_min", "avg_req_s"]
        );
    }
}
