//! File ingestion: transaction CSVs (ethereum-etl column naming), exclusion
//! and owner lists, and NFT trace CSVs.
//!
//! Malformed rows are skipped and counted, never fatal; only structural
//! problems (unreadable file, missing header columns) abort. Chain-scale
//! extracts contain dirt.

use crate::model::{
    graph_from_edges, AccountId, GraphBuildStats, NftTrace, TraceEvent, TransactionGraph,
};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Proof-of-stake transition block, the default ingestion cutoff.
pub const DEFAULT_MAX_BLOCK: u64 = 15_537_393;

/// Addresses removed before linkability construction (exchanges, pools):
/// paths through them imply no trust relationship.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExclusionList {
    addresses: BTreeSet<AccountId>,
}

impl ExclusionList {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_addresses(addresses: impl IntoIterator<Item = AccountId>) -> Self {
        ExclusionList {
            addresses: addresses.into_iter().collect(),
        }
    }

    pub fn contains(&self, account: &AccountId) -> bool {
        self.addresses.contains(account)
    }

    pub fn len(&self) -> usize {
        self.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }
}

/// Row accounting for one ingestion pass.
///
/// `rows_read` always equals `rows_kept` plus the sum of the `dropped_*`
/// counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub rows_read: u64,
    pub rows_kept: u64,
    pub dropped_contract_call: u64,
    pub dropped_zero_value: u64,
    pub dropped_excluded: u64,
    pub dropped_beyond_cutoff: u64,
    pub dropped_malformed: u64,
    pub max_block_seen: u64,
}

impl IngestStats {
    pub fn dropped_total(&self) -> u64 {
        self.dropped_contract_call
            + self.dropped_zero_value
            + self.dropped_excluded
            + self.dropped_beyond_cutoff
            + self.dropped_malformed
    }

    pub fn is_conserved(&self) -> bool {
        self.rows_read == self.rows_kept + self.dropped_total()
    }
}

/// A skipped row or line, with its 1-based location in the input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestWarning {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing required columns: {}", missing.join(", "))]
    MissingColumns { path: PathBuf, missing: Vec<String> },
    #[error("{path}: unreadable header: {message}")]
    Header { path: PathBuf, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parse a one-address-per-line file. `#` comments and blank lines are
/// ignored; malformed addresses are skipped with a warning.
fn load_address_lines(path: &Path) -> Result<(BTreeSet<AccountId>, Vec<IngestWarning>), IngestError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut addresses = BTreeSet::new();
    let mut warnings = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        match AccountId::parse(text) {
            Ok(account) => {
                addresses.insert(account);
            }
            Err(e) => warnings.push(IngestWarning {
                line: i as u64 + 1,
                message: format!("malformed address {text:?}: {e}"),
            }),
        }
    }
    Ok((addresses, warnings))
}

/// Load an exclusion list (one address per line).
pub fn load_exclusions(path: &Path) -> Result<(ExclusionList, Vec<IngestWarning>), IngestError> {
    let (addresses, warnings) = load_address_lines(path)?;
    Ok((ExclusionList { addresses }, warnings))
}

/// Load an owner set (same line format as exclusion lists).
pub fn load_owners(path: &Path) -> Result<(BTreeSet<AccountId>, Vec<IngestWarning>), IngestError> {
    load_address_lines(path)
}

/// `true` when a decimal integer string (wei magnitudes exceed u64) is
/// strictly positive; `None` when it is not a plain digit string.
fn decimal_is_positive(text: &str) -> Option<bool> {
    let digits = text.strip_prefix('+').unwrap_or(text);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some(digits.bytes().any(|b| b != b'0'))
}

/// Result of [`load_transactions`].
#[derive(Debug, Clone)]
pub struct TransactionLoad {
    pub graph: TransactionGraph,
    pub stats: IngestStats,
    /// Duplicate / self-loop drops from graph construction; these happen
    /// after row filtering and are not part of the row conservation sum.
    pub graph_stats: GraphBuildStats,
}

/// Build a [`TransactionGraph`] from a transactions CSV.
///
/// A row becomes an edge when `input == "0x"`, `value > 0`,
/// `block_number <= max_block` (when given) and neither endpoint is
/// excluded. Required columns: `from_address`, `to_address`, `value`,
/// `input`, `block_number`; extra columns are ignored.
pub fn load_transactions(
    path: &Path,
    exclusions: &ExclusionList,
    max_block: Option<u64>,
) -> Result<TransactionLoad, IngestError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(BufReader::new(file));
    let columns = resolve_columns(
        path,
        &mut reader,
        &["from_address", "to_address", "value", "input", "block_number"],
    )?;
    let [col_from, col_to, col_value, col_input, col_block] =
        [columns[0], columns[1], columns[2], columns[3], columns[4]];

    let mut stats = IngestStats::default();
    let mut edges: Vec<(AccountId, AccountId)> = Vec::new();
    for result in reader.records() {
        stats.rows_read += 1;
        let Ok(record) = result else {
            stats.dropped_malformed += 1;
            continue;
        };
        let fields = (
            record.get(col_from).map(str::trim).and_then(|s| AccountId::parse(s).ok()),
            record.get(col_to).map(str::trim).and_then(|s| AccountId::parse(s).ok()),
            record.get(col_value).map(str::trim).and_then(decimal_is_positive),
            record.get(col_input).map(str::trim),
            record
                .get(col_block)
                .and_then(|s| s.trim().parse::<u64>().ok()),
        );
        let (Some(from), Some(to), Some(value_positive), Some(input), Some(block)) = fields else {
            stats.dropped_malformed += 1;
            continue;
        };
        stats.max_block_seen = stats.max_block_seen.max(block);
        if input != "0x" {
            stats.dropped_contract_call += 1;
        } else if !value_positive {
            stats.dropped_zero_value += 1;
        } else if max_block.is_some_and(|cutoff| block > cutoff) {
            stats.dropped_beyond_cutoff += 1;
        } else if exclusions.contains(&from) || exclusions.contains(&to) {
            stats.dropped_excluded += 1;
        } else {
            stats.rows_kept += 1;
            edges.push((from, to));
        }
    }

    let (graph, graph_stats) = graph_from_edges(edges);
    Ok(TransactionLoad {
        graph,
        stats,
        graph_stats,
    })
}

/// Result of [`load_traces`]: traces grouped per collection, each sorted by
/// token id.
#[derive(Debug, Clone)]
pub struct TraceLoad {
    pub collections: BTreeMap<String, Vec<NftTrace>>,
    pub stats: IngestStats,
    pub warnings: Vec<IngestWarning>,
}

impl TraceLoad {
    /// All traces across collections, in (collection, token_id) order.
    pub fn all_traces(&self) -> Vec<NftTrace> {
        self.collections.values().flatten().cloned().collect()
    }
}

/// Load NFT ownership traces from CSV.
///
/// Events are grouped per (collection, token_id), sorted by
/// `(block_number, log_index)` and assigned `seq` by position. Ownership
/// continuity violations and timestamp regressions become warnings.
pub fn load_traces(path: &Path) -> Result<TraceLoad, IngestError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(BufReader::new(file));
    let columns = resolve_columns(
        path,
        &mut reader,
        &[
            "collection",
            "token_id",
            "from_address",
            "to_address",
            "value_usd",
            "block_number",
            "log_index",
            "timestamp",
        ],
    )?;

    let mut stats = IngestStats::default();
    let mut warnings = Vec::new();
    let mut grouped: BTreeMap<(String, u64), Vec<TraceEvent>> = BTreeMap::new();
    for result in reader.records() {
        stats.rows_read += 1;
        let line = result
            .as_ref()
            .ok()
            .and_then(|r| r.position())
            .map_or(stats.rows_read + 1, |p| p.line());
        let Ok(record) = result else {
            stats.dropped_malformed += 1;
            warnings.push(IngestWarning {
                line,
                message: "unreadable row".into(),
            });
            continue;
        };
        let get = |i: usize| record.get(columns[i]).map(str::trim);
        let parsed = (
            get(0),
            get(1).and_then(|s| s.parse::<u64>().ok()),
            get(2).and_then(|s| AccountId::parse(s).ok()),
            get(3).and_then(|s| AccountId::parse(s).ok()),
            get(4).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite()),
            get(5).and_then(|s| s.parse::<u64>().ok()),
            get(6).and_then(|s| s.parse::<u64>().ok()),
            get(7).and_then(|s| s.parse::<u64>().ok()),
        );
        let (
            Some(collection),
            Some(token_id),
            Some(from),
            Some(to),
            Some(value_usd),
            Some(block_number),
            Some(log_index),
            Some(timestamp),
        ) = parsed
        else {
            stats.dropped_malformed += 1;
            warnings.push(IngestWarning {
                line,
                message: "malformed row skipped".into(),
            });
            continue;
        };
        stats.max_block_seen = stats.max_block_seen.max(block_number);
        if value_usd < 0.0 {
            stats.dropped_malformed += 1;
            warnings.push(IngestWarning {
                line,
                message: format!("negative value_usd {value_usd} rejected"),
            });
            continue;
        }
        if from == to {
            stats.dropped_malformed += 1;
            warnings.push(IngestWarning {
                line,
                message: format!("self-transfer {from} rejected"),
            });
            continue;
        }
        stats.rows_kept += 1;
        grouped
            .entry((collection.to_string(), token_id))
            .or_default()
            .push(TraceEvent {
                token_id,
                seq: 0,
                from,
                to,
                value_usd,
                block_number,
                log_index,
                timestamp,
            });
    }

    let mut collections: BTreeMap<String, Vec<NftTrace>> = BTreeMap::new();
    for ((collection, token_id), events) in grouped {
        let trace = NftTrace::from_events(token_id, events);
        for seq in trace.continuity_violations() {
            warnings.push(IngestWarning {
                line: 0,
                message: format!(
                    "{collection} token {token_id} seq {seq}: transferor is not the current owner"
                ),
            });
        }
        for seq in trace.timestamp_regressions() {
            warnings.push(IngestWarning {
                line: 0,
                message: format!("{collection} token {token_id} seq {seq}: timestamp regression"),
            });
        }
        collections.entry(collection).or_default().push(trace);
    }

    Ok(TraceLoad {
        collections,
        stats,
        warnings,
    })
}

/// Map required column names to header positions, failing with the full
/// list of missing names.
fn resolve_columns(
    path: &Path,
    reader: &mut csv::Reader<impl std::io::Read>,
    required: &[&str],
) -> Result<Vec<usize>, IngestError> {
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Header {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let mut positions = Vec::with_capacity(required.len());
    let mut missing = Vec::new();
    for &name in required {
        match headers.iter().position(|h| h.trim() == name) {
            Some(i) => positions.push(i),
            None => missing.push(name.to_string()),
        }
    }
    if !missing.is_empty() {
        return Err(IngestError::MissingColumns {
            path: path.to_path_buf(),
            missing,
        });
    }
    Ok(positions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use tempfile::NamedTempFile;

    fn addr(n: u8) -> String {
        format!("0x{:040x}", n)
    }

    fn write_file(content: &str) -> NamedTempFile {
        let mut f = NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn exclusions_dedup_and_case_fold() {
        let upper = addr(0xAA).to_uppercase().replace("0X", "0x");
        let f = write_file(&format!("# cex\n{}\n{}\n", upper, addr(0xAA)));
        let (list, warnings) = load_exclusions(f.path()).unwrap();
        assert_eq!(list.len(), 1);
        assert!(warnings.is_empty());
    }

    #[test]
    fn exclusions_empty_file() {
        let f = write_file("");
        let (list, warnings) = load_exclusions(f.path()).unwrap();
        assert!(list.is_empty());
        assert!(warnings.is_empty());
    }

    #[test]
    fn exclusions_malformed_line_warns() {
        let f = write_file("notanaddress\n");
        let (list, warnings) = load_exclusions(f.path()).unwrap();
        assert!(list.is_empty());
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].line, 1);
    }

    const TX_HEADER: &str = "hash,from_address,to_address,value,input,block_number\n";

    fn tx_row(from: &str, to: &str, value: &str, input: &str, block: u64) -> String {
        format!("0xdead,{from},{to},{value},{input},{block}\n")
    }

    #[test]
    fn transactions_keep_normal_transfer() {
        let f = write_file(&format!(
            "{TX_HEADER}{}",
            tx_row(&addr(1), &addr(2), "5000000000000000000", "0x", 100)
        ));
        let load = load_transactions(f.path(), &ExclusionList::empty(), None).unwrap();
        assert_eq!(load.stats.rows_kept, 1);
        assert_eq!(load.graph.edge_count(), 1);
        assert!(load.stats.is_conserved());
    }

    #[test]
    fn transactions_drop_contract_call() {
        let f = write_file(&format!(
            "{TX_HEADER}{}",
            tx_row(&addr(1), &addr(2), "1", "0xa9059cbb00", 100)
        ));
        let load = load_transactions(f.path(), &ExclusionList::empty(), None).unwrap();
        assert_eq!(load.stats.dropped_contract_call, 1);
        assert_eq!(load.graph.edge_count(), 0);
    }

    #[test]
    fn transactions_drop_zero_value() {
        let f = write_file(&format!("{TX_HEADER}{}", tx_row(&addr(1), &addr(2), "0", "0x", 100)));
        let load = load_transactions(f.path(), &ExclusionList::empty(), None).unwrap();
        assert_eq!(load.stats.dropped_zero_value, 1);
    }

    #[test]
    fn transactions_drop_excluded_endpoint() {
        let f = write_file(&format!("{TX_HEADER}{}", tx_row(&addr(1), &addr(2), "1", "0x", 100)));
        let exclusions =
            ExclusionList::from_addresses([AccountId::parse(&addr(2)).unwrap()]);
        let load = load_transactions(f.path(), &exclusions, None).unwrap();
        assert_eq!(load.stats.dropped_excluded, 1);
    }

    #[test]
    fn transactions_enforce_block_cutoff() {
        let f = write_file(&format!(
            "{TX_HEADER}{}{}",
            tx_row(&addr(1), &addr(2), "1", "0x", 100),
            tx_row(&addr(1), &addr(3), "1", "0x", 200)
        ));
        let load = load_transactions(f.path(), &ExclusionList::empty(), Some(150)).unwrap();
        assert_eq!(load.stats.rows_kept, 1);
        assert_eq!(load.stats.dropped_beyond_cutoff, 1);
        assert_eq!(load.stats.max_block_seen, 200);
    }

    #[test]
    fn transactions_missing_columns_fatal() {
        let f = write_file("from_address,to_address\n0xa,0xb\n");
        let err = load_transactions(f.path(), &ExclusionList::empty(), None).unwrap_err();
        match err {
            IngestError::MissingColumns { missing, .. } => {
                assert_eq!(missing, vec!["value", "input", "block_number"]);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn transactions_malformed_row_counted() {
        let f = write_file(&format!(
            "{TX_HEADER}{}{}",
            tx_row("nothex", &addr(2), "1", "0x", 100),
            tx_row(&addr(1), &addr(2), "wei", "0x", 100)
        ));
        let load = load_transactions(f.path(), &ExclusionList::empty(), None).unwrap();
        assert_eq!(load.stats.dropped_malformed, 2);
        assert!(load.stats.is_conserved());
    }

    #[test]
    fn huge_wei_values_need_no_numeric_conversion() {
        assert_eq!(decimal_is_positive("340282366920938463463374607431768211456"), Some(true));
        assert_eq!(decimal_is_positive("000"), Some(false));
        assert_eq!(decimal_is_positive(""), None);
        assert_eq!(decimal_is_positive("1e18"), None);
    }

    const TRACE_HEADER: &str =
        "collection,token_id,from_address,to_address,value_usd,block_number,log_index,timestamp\n";

    #[test]
    fn traces_sorted_and_seq_assigned() {
        let f = write_file(&format!(
            "{TRACE_HEADER}apes,7,{},{},5.0,20,0,240\napes,7,{},{},0,10,0,120\n",
            addr(2),
            addr(3),
            addr(1),
            addr(2)
        ));
        let load = load_traces(f.path()).unwrap();
        let traces = &load.collections["apes"];
        assert_eq!(traces.len(), 1);
        let events = traces[0].events();
        assert_eq!(events[0].block_number, 10);
        assert_eq!(events[0].seq, 0);
        assert_eq!(events[1].seq, 1);
        assert!(events[0].is_transfer());
        assert!(events[1].is_trade());
        assert!(load.warnings.is_empty());
    }

    #[test]
    fn traces_reject_self_transfer() {
        let f = write_file(&format!(
            "{TRACE_HEADER}apes,7,{},{},1.0,10,0,120\n",
            addr(1),
            addr(1)
        ));
        let load = load_traces(f.path()).unwrap();
        assert!(load.collections.is_empty());
        assert_eq!(load.stats.dropped_malformed, 1);
        assert_eq!(load.warnings.len(), 1);
    }

    #[test]
    fn traces_reject_negative_value() {
        let f = write_file(&format!(
            "{TRACE_HEADER}apes,7,{},{},-1.0,10,0,120\n",
            addr(1),
            addr(2)
        ));
        let load = load_traces(f.path()).unwrap();
        assert_eq!(load.stats.dropped_malformed, 1);
        assert!(load.stats.is_conserved());
    }

    #[test]
    fn traces_warn_on_continuity_violation() {
        let f = write_file(&format!(
            "{TRACE_HEADER}apes,7,{},{},0,10,0,120\napes,7,{},{},2.0,20,0,240\n",
            addr(1),
            addr(2),
            addr(3),
            addr(1)
        ));
        let load = load_traces(f.path()).unwrap();
        assert_eq!(load.warnings.len(), 1);
        assert!(load.warnings[0].message.contains("not the current owner"));
    }
}
