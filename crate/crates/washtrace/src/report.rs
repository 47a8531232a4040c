//! Rendering of detection outputs: stats tables, histogram and volume
//! datasets, depth-sweep CSV, and per-token DOT graph exports.
//!
//! Pure functions over immutable inputs. Machine formats (csv, json) keep
//! full precision; text mode rounds ratios to 3 decimals.

use crate::detection::{suspicion_order, CollectionSummary, SweepRow};
use crate::model::{AccountId, LinkabilityNetwork, NftTrace, WashReport};
use std::fmt::Write as _;

/// Bucket labels for the wash-sale histogram. The last bucket collects
/// tokens wash traded more than 5 times.
pub const HISTOGRAM_BUCKET_LABELS: [&str; 7] = ["0", "1", "2", "3", "4", "5", ">5"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
    Text,
}

impl TableFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
            TableFormat::Text => "txt",
        }
    }
}

impl std::str::FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            "text" => Ok(TableFormat::Text),
            other => Err(format!("unknown format {other:?} (expected csv, json or text)")),
        }
    }
}

/// Render per-token statistics, rows sorted by suspicion descending.
///
/// The json format carries the full report including `flagged_events`;
/// csv mirrors the published table columns.
pub fn render_stats_table(reports: &[WashReport], format: TableFormat) -> String {
    let mut ranked: Vec<&WashReport> = reports.iter().collect();
    ranked.sort_by(|a, b| suspicion_order(a, b));

    match format {
        TableFormat::Csv => {
            let mut out = String::from("token_id,total_volume,washed_volume,wash_sales,total_sales,ratio\n");
            for r in ranked {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.token_id,
                    r.total_volume_usd,
                    r.washed_volume_usd,
                    r.wash_sales,
                    r.total_sales,
                    r.ratio
                );
            }
            out
        }
        TableFormat::Json => {
            let mut out = serde_json::to_string_pretty(&ranked).expect("stats rows serialize");
            out.push('\n');
            out
        }
        TableFormat::Text => {
            let header = ["token_id", "total_volume", "washed_volume", "wash_sales", "total_sales", "ratio"];
            let rows: Vec<[String; 6]> = ranked
                .iter()
                .map(|r| {
                    [
                        r.token_id.to_string(),
                        r.total_volume_usd.to_string(),
                        r.washed_volume_usd.to_string(),
                        r.wash_sales.to_string(),
                        r.total_sales.to_string(),
                        format!("{:.3}", r.ratio),
                    ]
                })
                .collect();
            let mut widths: [usize; 6] = header.map(str::len);
            for row in &rows {
                for (w, cell) in widths.iter_mut().zip(row.iter()) {
                    *w = (*w).max(cell.len());
                }
            }
            let mut out = String::new();
            for (i, name) in header.iter().enumerate() {
                let _ = write!(out, "{:>width$}  ", name, width = widths[i]);
            }
            out.truncate(out.trim_end().len());
            out.push('\n');
            for row in &rows {
                for (i, cell) in row.iter().enumerate() {
                    let _ = write!(out, "{:>width$}  ", cell, width = widths[i]);
                }
                out.truncate(out.trim_end().len());
                out.push('\n');
            }
            out
        }
    }
}

/// Histogram of tokens by wash-sale count as `bucket,count` CSV.
pub fn render_histogram(summary: &CollectionSummary) -> String {
    let mut out = String::from("bucket,count\n");
    for (label, count) in HISTOGRAM_BUCKET_LABELS.iter().zip(summary.histogram) {
        let _ = writeln!(out, "{label},{count}");
    }
    out
}

/// Per-collection legitimate vs washed volume as CSV.
pub fn render_volume_summary(summaries: &[CollectionSummary]) -> String {
    let mut out = String::from("collection,legit_volume,washed_volume\n");
    for s in summaries {
        let legit = s.total_volume_usd - s.washed_volume_usd;
        let _ = writeln!(out, "{},{},{}", s.collection, legit, s.washed_volume_usd);
    }
    out
}

/// Depth-sweep rows as CSV.
pub fn render_sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("max_link_hops,avg_wash_trades,pct_linked_accounts,total_flagged\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.max_link_hops, r.avg_wash_trades_per_token, r.pct_linked_accounts, r.total_flagged
        );
    }
    out
}

/// Export one token's trading graph as DOT.
///
/// Nodes are the trace's accounts in order of first appearance. Edge
/// classes: `transfer` for zero-value events, `trade` (labelled with the
/// USD value, `flagged=true` on wash sales), and dotted `link` edges for
/// linkability edges within the report's hop threshold between trace
/// accounts.
pub fn export_token_dot(
    trace: &NftTrace,
    ln: &LinkabilityNetwork,
    report: &WashReport,
) -> String {
    let mut nodes: Vec<AccountId> = Vec::new();
    for e in trace.events() {
        for account in [e.from, e.to] {
            if !nodes.contains(&account) {
                nodes.push(account);
            }
        }
    }

    let mut out = format!("digraph token_{} {{\n", trace.token_id);
    for node in &nodes {
        let _ = writeln!(out, "  \"{node}\";");
    }
    for e in trace.events() {
        if e.is_transfer() {
            let _ = writeln!(out, "  \"{}\" -> \"{}\" [kind=transfer];", e.from, e.to);
        } else {
            let flagged = report.flagged_events.binary_search(&e.seq).is_ok();
            let attrs = if flagged { ", flagged=true" } else { "" };
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [kind=trade, label=\"${}\"{attrs}];",
                e.from, e.to, e.value_usd
            );
        }
    }
    let account_set = trace.accounts();
    for (&(src, dst), &hops) in ln.edges() {
        if hops <= report.max_link_hops && account_set.contains(&src) && account_set.contains(&dst)
        {
            let _ = writeln!(
                out,
                "  \"{src}\" -> \"{dst}\" [kind=link, style=dotted, hops={hops}];"
            );
        }
    }
    out.push_str("}\n");
    out
}
