//! Wash trade detection: cluster accounts by NFT transfers and linkability
//! links, then flag every trade whose buyer and seller share a cluster.
//!
//! Clustering scope is one token (one ownership trace) at a time; the
//! linkability network and traces are shared immutable, each token's
//! partition is worker-private.

use crate::model::{AccountId, LinkabilityNetwork, NftTrace, Partition, WashReport};
use rayon::prelude::*;
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionConfig {
    /// Linkability edges participate in clustering when their hop count is
    /// at most this.
    pub max_link_hops: u32,
    /// Reproduce the clustering pseudocode literally: only accounts touched
    /// by zero-value transfers are clustered, so two accounts that merely
    /// traded can never be flagged through linkability alone. Off by
    /// default; the default mode seeds a singleton block for every trace
    /// account first, which lets a direct seller-buyer link flag the trade.
    pub strict_paper_mode: bool,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            max_link_hops: 4,
            strict_paper_mode: false,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DetectionError {
    /// Flagging with a threshold beyond the network's construction depth
    /// would be silently incomplete.
    #[error("max_link_hops {requested} exceeds linkability construction depth {constructed}")]
    LinkDepthExceedsConstruction { requested: u32, constructed: u32 },
}

/// Per-collection aggregate over all token reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollectionSummary {
    pub collection: String,
    pub token_count: u64,
    pub total_volume_usd: f64,
    pub washed_volume_usd: f64,
    /// `washed / total`, 0 when there was no volume.
    pub wash_share: f64,
    /// Tokens bucketed by wash-sale count: 0,1,2,3,4,5,>5.
    pub histogram: [u64; 7],
}

impl CollectionSummary {
    /// Wash share rendered as a whole percentage, e.g. `94%`.
    pub fn wash_share_percent(&self) -> String {
        format!("{}%", (self.wash_share * 100.0).round())
    }
}

/// Histogram bucket index for a token's wash-sale count.
pub fn histogram_bucket(wash_sales: u64) -> usize {
    if wash_sales > 5 {
        6
    } else {
        wash_sales as usize
    }
}

/// One row of the depth-sweep experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub max_link_hops: u32,
    pub avg_wash_trades_per_token: f64,
    /// Share of distinct trace accounts that end up in a non-singleton
    /// block for at least one token, in [0, 100].
    pub pct_linked_accounts: f64,
    pub total_flagged: u64,
}

/// One 2-element set per zero-value transfer, in event order.
pub fn cluster_on_nft_transfer(trace: &NftTrace) -> Vec<BTreeSet<AccountId>> {
    trace
        .events()
        .iter()
        .filter(|e| e.is_transfer())
        .map(|e| [e.from, e.to].into_iter().collect())
        .collect()
}

/// Merge sets sharing an element until all are disjoint.
///
/// The resulting partition blocks are the connected components of the
/// "shares an element" relation over the input sets.
pub fn merge_common_sets(sets: &[BTreeSet<AccountId>]) -> Partition {
    let mut partition = Partition::new();
    for set in sets {
        let mut members = set.iter();
        let Some(first) = members.next() else {
            continue;
        };
        partition.insert(*first);
        for other in members {
            partition.insert(*other);
            partition.union(first, other);
        }
    }
    partition
}

/// Union the blocks of every linkability edge within the hop threshold.
///
/// Only edges whose endpoints are both indexed in the partition
/// participate; links are undirected for clustering purposes. Union-find
/// transitivity makes one pass equivalent to the fixed point of the
/// pairwise merge-and-rescan loop.
pub fn cluster_on_linkability(
    mut partition: Partition,
    ln: &LinkabilityNetwork,
    max_link_hops: u32,
) -> Partition {
    for (&(src, dst), &hops) in ln.edges() {
        if hops <= max_link_hops {
            partition.union(&src, &dst);
        }
    }
    partition
}

fn guard_depth(ln: &LinkabilityNetwork, requested: u32) -> Result<(), DetectionError> {
    if requested > ln.max_hops() {
        return Err(DetectionError::LinkDepthExceedsConstruction {
            requested,
            constructed: ln.max_hops(),
        });
    }
    Ok(())
}

fn run_detection(
    trace: &NftTrace,
    ln: &LinkabilityNetwork,
    config: &DetectionConfig,
) -> (WashReport, Partition) {
    let sets = cluster_on_nft_transfer(trace);
    let mut partition = merge_common_sets(&sets);
    if !config.strict_paper_mode {
        for account in trace.accounts() {
            partition.insert(account);
        }
    }
    let mut partition = cluster_on_linkability(partition, ln, config.max_link_hops);

    let mut report = WashReport {
        token_id: trace.token_id,
        total_volume_usd: 0.0,
        washed_volume_usd: 0.0,
        wash_sales: 0,
        total_sales: 0,
        ratio: 0.0,
        max_link_hops: config.max_link_hops,
        flagged_events: Vec::new(),
    };
    for event in trace.events() {
        if !event.is_trade() {
            continue;
        }
        report.total_sales += 1;
        report.total_volume_usd += event.value_usd;
        if partition.same_set(&event.from, &event.to) {
            report.wash_sales += 1;
            report.washed_volume_usd += event.value_usd;
            report.flagged_events.push(event.seq);
        }
    }
    if report.total_volume_usd > 0.0 {
        report.ratio = report.washed_volume_usd / report.total_volume_usd;
    }
    (report, partition)
}

/// Run the full detection pipeline for one token.
pub fn detect_wash_trades(
    trace: &NftTrace,
    ln: &LinkabilityNetwork,
    config: &DetectionConfig,
) -> Result<WashReport, DetectionError> {
    guard_depth(ln, config.max_link_hops)?;
    Ok(run_detection(trace, ln, config).0)
}

/// Descending suspicion: volume ratio, then wash-sale count, then token id
/// ascending as the final tiebreak.
pub fn suspicion_order(a: &WashReport, b: &WashReport) -> Ordering {
    b.ratio
        .total_cmp(&a.ratio)
        .then(b.wash_sales.cmp(&a.wash_sales))
        .then(a.token_id.cmp(&b.token_id))
}

/// Detect over every token of a collection and aggregate.
///
/// Reports come back ranked by suspicion. Tokens are processed in
/// parallel; order of the output is independent of worker scheduling.
pub fn collection_report(
    collection: &str,
    traces: &[NftTrace],
    ln: &LinkabilityNetwork,
    config: &DetectionConfig,
) -> Result<(Vec<WashReport>, CollectionSummary), DetectionError> {
    guard_depth(ln, config.max_link_hops)?;
    let mut reports: Vec<WashReport> = traces
        .par_iter()
        .map(|trace| run_detection(trace, ln, config).0)
        .collect();
    reports.sort_by(suspicion_order);

    let mut summary = CollectionSummary {
        collection: collection.to_string(),
        token_count: traces.len() as u64,
        total_volume_usd: 0.0,
        washed_volume_usd: 0.0,
        wash_share: 0.0,
        histogram: [0; 7],
    };
    for report in &reports {
        summary.total_volume_usd += report.total_volume_usd;
        summary.washed_volume_usd += report.washed_volume_usd;
        summary.histogram[histogram_bucket(report.wash_sales)] += 1;
    }
    if summary.total_volume_usd > 0.0 {
        summary.wash_share = summary.washed_volume_usd / summary.total_volume_usd;
    }
    Ok((reports, summary))
}

/// Re-run detection for every hop threshold `1..=h_max`.
///
/// Uses the default (singleton-seeded) mode. Partitions coarsen as the
/// threshold grows, so every column is non-decreasing in `h`.
pub fn depth_sweep(
    traces: &[NftTrace],
    ln: &LinkabilityNetwork,
    h_max: u32,
) -> Result<Vec<SweepRow>, DetectionError> {
    guard_depth(ln, h_max)?;
    let all_accounts: BTreeSet<AccountId> =
        traces.iter().flat_map(|t| t.accounts()).collect();

    let mut rows = Vec::with_capacity(h_max as usize);
    for h in 1..=h_max {
        let config = DetectionConfig {
            max_link_hops: h,
            strict_paper_mode: false,
        };
        let per_token: Vec<(WashReport, Partition)> = traces
            .par_iter()
            .map(|trace| run_detection(trace, ln, &config))
            .collect();

        let total_flagged: u64 = per_token.iter().map(|(r, _)| r.wash_sales).sum();
        let mut linked: BTreeSet<AccountId> = BTreeSet::new();
        for (_, mut partition) in per_token {
            for block in partition.blocks() {
                if block.len() >= 2 {
                    linked.extend(block);
                }
            }
        }
        rows.push(SweepRow {
            max_link_hops: h,
            avg_wash_trades_per_token: if traces.is_empty() {
                0.0
            } else {
                total_flagged as f64 / traces.len() as f64
            },
            pct_linked_accounts: if all_accounts.is_empty() {
                0.0
            } else {
                100.0 * linked.len() as f64 / all_accounts.len() as f64
            },
            total_flagged,
        });
    }
    Ok(rows)
}
