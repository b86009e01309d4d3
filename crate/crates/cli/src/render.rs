//! Text renderings of report files. Table and CSV output share one row
//! builder, so both always carry the same numbers.

use std::fmt;
use std::str::FromStr;

use ccl_core::evalharness::cost::EncodingCost;
use ccl_core::evalharness::ltp::{LtpReport, LtpSummary};
use ccl_core::evalharness::next::NextReport;
use ccl_core::evalharness::{RankingReport, StpReport, STP_HITS_AT};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Table,
    Csv,
    Plotdata,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "plotdata" => Ok(ReportFormat::Plotdata),
            other => Err(format!("unknown format {other:?} (table|csv|plotdata)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Table => "table",
            ReportFormat::Csv => "csv",
            ReportFormat::Plotdata => "plotdata",
        })
    }
}

struct Grid {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Grid {
    fn new(header: &[&str]) -> Self {
        Grid {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn table(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].len())
                    .chain([self.header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            padded.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&line(&rule));
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }

    fn csv(&self) -> String {
        let mut out = self.header.join(",") + "\n";
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn rank(x: f64) -> String {
    format!("{x:.3}")
}

fn stp_grid(r: &StpReport) -> Grid {
    let mut header = vec!["cell", "parity", "n"];
    let hit_labels: Vec<String> = STP_HITS_AT.iter().map(|k| format!("hits@{k}")).collect();
    header.extend(hit_labels.iter().map(String::as_str));
    header.push("avg_rank");
    let mut g = Grid::new(&header);
    let row = |label: &str, rep: &RankingReport| {
        let mut cells = vec![label.to_string(), rep.parity.to_string(), rep.n.to_string()];
        cells.extend(STP_HITS_AT.iter().map(|k| pct(rep.hits_at.get(k).copied().unwrap_or(0.0))));
        cells.push(rank(rep.average_rank));
        cells
    };
    for (cell, rep) in &r.overall.breakdown {
        g.rows.push(row(cell, rep));
    }
    for (p, rep) in &r.by_parity {
        g.rows.push(row(&format!("pooled-{p}"), rep));
    }
    if r.overall.n > 0 {
        g.rows.push(row("all", &r.overall));
    }
    g
}

fn ltp_grid(r: &LtpReport) -> Grid {
    let ks = r.method.hits_at();
    let hit_labels: Vec<String> = ks.iter().map(|k| format!("hits@{k}")).collect();
    let mut header = vec!["cell", "n"];
    header.extend(hit_labels.iter().map(String::as_str));
    let reverse = r.overall.reverse_hits_at_1.is_some();
    if reverse {
        header.push("reverse_hits@1");
    }
    header.push("avg_rank");
    let mut g = Grid::new(&header);
    let row = |label: &str, s: &LtpSummary| {
        let mut cells = vec![label.to_string(), s.n.to_string()];
        cells.extend(ks.iter().map(|k| pct(s.hits_at.get(k).copied().unwrap_or(0.0))));
        if reverse {
            cells.push(pct(s.reverse_hits_at_1.unwrap_or(0.0)));
        }
        cells.push(rank(s.average_rank));
        cells
    };
    for (cell, s) in &r.breakdown {
        g.rows.push(row(cell, s));
    }
    if r.overall.n > 0 {
        g.rows.push(row("all", &r.overall));
    }
    g
}

fn next_grid(r: &NextReport) -> Grid {
    let mut g = Grid::new(&["h_l", "variant", "n", "pool", "mean_normalized_rank"]);
    for c in &r.cells {
        g.rows.push(vec![
            c.h_l.to_string(),
            c.variant.to_string(),
            c.n.to_string(),
            c.pool_size.to_string(),
            format!("{:.4}", c.mean_normalized_rank),
        ]);
    }
    g
}

fn cost_grid(r: &EncodingCost) -> Grid {
    let mut g = Grid::new(&["quantity", "value"]);
    for (h, n) in &r.samples_by_h_l {
        g.rows.push(vec![format!("samples h_l={h}"), n.to_string()]);
    }
    g.rows.push(vec!["context_representations".into(), r.context_representations.to_string()]);
    g.rows.push(vec![
        "utterances_encoded_context_mode".into(),
        r.utterances_encoded_context_mode.to_string(),
    ]);
    g.rows.push(vec![
        "utterances_encoded_relativistic".into(),
        r.utterances_encoded_relativistic.to_string(),
    ]);
    g.rows.push(vec!["factor".into(), format!("{:.3}", r.factor)]);
    g
}

fn typed<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T, CliError> {
    serde_json::from_value(v["report"].clone())
        .map_err(|e| CliError::malformed(format!("report body does not match its kind: {e}")))
}

/// Render a report file produced by one of the eval commands.
pub fn render_report(report: &Value, format: ReportFormat) -> Result<String, CliError> {
    let kind = report["kind"]
        .as_str()
        .ok_or_else(|| CliError::malformed("report has no \"kind\" field"))?;
    if format == ReportFormat::Plotdata {
        if kind != "next" {
            return Err(CliError::malformed(format!(
                "plotdata needs a next-utterance report, got {kind:?}"
            )));
        }
        let r: NextReport = typed(report)?;
        let mut out = String::from("# variant h_l mean_normalized_rank\n");
        for c in &r.cells {
            out.push_str(&format!("{} {} {:.6}\n", c.variant, c.h_l, c.mean_normalized_rank));
        }
        return Ok(out);
    }
    let grid = match kind {
        "stp" => stp_grid(&typed(report)?),
        "ltp" => ltp_grid(&typed(report)?),
        "next" => next_grid(&typed(report)?),
        "cost" => cost_grid(&typed(report)?),
        other => return Err(CliError::malformed(format!("unknown report kind {other:?}"))),
    };
    Ok(match format {
        ReportFormat::Table => grid.table(),
        _ => grid.csv(),
    })
}
