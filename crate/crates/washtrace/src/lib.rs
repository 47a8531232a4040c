//! Wash trade detection for NFT markets.
//!
//! The library combines two data sources:
//!
//! - per-token **ownership traces** (who held an NFT, and whether each
//!   ownership change was a paid trade or a free transfer), and
//! - a **linkability network** derived from the full history of direct
//!   value transfers between accounts, where an edge `(v, u, hops)` means
//!   `u` is reachable from `v` via a chain of at most `hops` normal
//!   transactions.
//!
//! Accounts joined by transfers or short transaction paths are clustered
//! with a union-find partition; any paid trade whose buyer and seller land
//! in the same cluster is flagged as a wash sale.
//!
//! Module map:
//!
//! - [`model`] — shared domain types (accounts, graphs, traces, partitions)
//! - [`ingest`] — CSV / list-file parsing and filtering
//! - [`linkability`] — parallel depth-limited BFS network construction
//! - [`detection`] — clustering, flagging, per-collection statistics, depth sweep
//! - [`synth`] — deterministic synthetic data with planted collusion rings
//! - [`report`] — tables, histograms, volume summaries, DOT exports

pub mod detection;
pub mod ingest;
pub mod linkability;
pub mod model;
pub mod report;
pub mod synth;

pub use detection::{
    cluster_on_linkability, cluster_on_nft_transfer, collection_report, depth_sweep,
    detect_wash_trades, merge_common_sets, CollectionSummary, DetectionConfig, DetectionError,
    SweepRow,
};
pub use ingest::{
    load_exclusions, load_owners, load_traces, load_transactions, ExclusionList, IngestError,
    IngestStats, IngestWarning, TraceLoad, TransactionLoad, DEFAULT_MAX_BLOCK,
};
pub use linkability::{
    bfs_from_root, build_linkability_network, read_linkability_file, write_linkability_file,
    BfsConfig, LinkabilityFileError,
};
pub use model::{
    graph_from_edges, parse_account, AccountId, GraphBuildStats, LinkabilityNetwork, NftTrace,
    ParseAccountError, Partition, TraceEvent, TransactionGraph, WashReport,
};
pub use report::{
    export_token_dot, render_histogram, render_stats_table, render_sweep_csv,
    render_volume_summary, TableFormat,
};
pub use synth::{generate, GroundTruth, SynthConfig, SynthData, SynthError, WashEventRef};
