//! The `report` command: a plain-text table built from a run's metrics files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use thiserror::Error;

use pmbench_core::fsio::write_atomic;
use pmbench_core::types::format_usd;

use crate::run::{read_equity_csv, AggregateMetricsFile, EpisodeMetricsFile, Manifest, EQUITY_OUT, MANIFEST_FILE, METRICS_FILE};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no completed run at {0}")]
    MissingRun(PathBuf),
}

pub const HEADERS: [&str; 6] = ["Episode", "PnL ($)", "Return (%)", "Max DD (%)", "Contracts", "Fill (%)"];

/// One table row, every cell copied from a metrics file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub label: String,
    pub pnl: String,
    pub return_pct: String,
    pub max_drawdown_pct: String,
    pub contracts: String,
    pub fill_pct: String,
}

impl Row {
    fn cells(&self) -> [&str; 6] {
        [&self.label, &self.pnl, &self.return_pct, &self.max_drawdown_pct, &self.contracts, &self.fill_pct]
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn fill(v: &Option<String>) -> String {
    v.clone().unwrap_or_else(|| "---".into())
}

/// Per-episode rows followed by the `Total` row.
pub fn rows(run: &Path) -> anyhow::Result<Vec<Row>> {
    let manifest_path = run.join(MANIFEST_FILE);
    if !manifest_path.is_file() || !run.join(METRICS_FILE).is_file() {
        return Err(ReportError::MissingRun(run.to_path_buf()).into());
    }
    let manifest: Manifest = read_json(&manifest_path)?;
    let mut out = Vec::new();
    for ep in &manifest.episodes {
        let m: EpisodeMetricsFile = read_json(&run.join(&ep.output_dir).join(METRICS_FILE))?;
        out.push(Row {
            label: m.episode_id,
            pnl: format_usd(m.metrics.pnl),
            return_pct: m.metrics.return_pct,
            max_drawdown_pct: m.metrics.max_drawdown_pct,
            contracts: m.metrics.contracts_traded.to_string(),
            fill_pct: fill(&m.metrics.fill_ratio_pct),
        });
    }
    let agg: AggregateMetricsFile = read_json(&run.join(METRICS_FILE))?;
    out.push(Row {
        label: "Total".into(),
        pnl: format_usd(agg.metrics.pnl),
        return_pct: agg.metrics.return_pct,
        max_drawdown_pct: agg.metrics.max_drawdown_pct,
        contracts: agg.metrics.contracts_traded.to_string(),
        fill_pct: fill(&agg.metrics.fill_ratio_pct),
    });
    Ok(out)
}

pub fn render_table(rows: &[Row]) -> String {
    let mut widths = HEADERS.map(str::len);
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r.cells()) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: [&str; 6]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, " | {c:>w$}");
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(HEADERS);
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for r in rows {
        if r.label == "Total" {
            out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
            out.push('\n');
        }
        out.push_str(&line(r.cells()));
    }
    out
}

/// Writes every episode's equity curve as `episode_id,ts_ms,equity_micro_usd`.
pub fn write_plot_csv(run: &Path, path: &Path) -> anyhow::Result<()> {
    let manifest: Manifest = read_json(&run.join(MANIFEST_FILE))?;
    let mut out = String::from("episode_id,ts_ms,equity_micro_usd\n");
    for ep in &manifest.episodes {
        for (ts, eq) in read_equity_csv(&run.join(&ep.output_dir).join(EQUITY_OUT))? {
            let _ = writeln!(out, "{},{ts},{eq}", ep.episode_id);
        }
    }
    write_atomic(path, out.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

pub fn report(run: &Path, plot: Option<&Path>) -> anyhow::Result<String> {
    let table = render_table(&rows(run)?);
    if let Some(p) = plot {
        write_plot_csv(run, p)?;
    }
    Ok(table)
}
