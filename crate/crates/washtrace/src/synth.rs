//! Deterministic synthetic data with planted collusion rings.
//!
//! Ring members are wired together in the transaction graph by
//! intermediary chains of exactly `link_path_hops` edges (intermediaries
//! are fresh accounts outside every owner set, unique per pair, so no
//! accidental shortcut can shrink a planted distance). Each ring trades
//! one token cyclically; those trades are the ground-truth wash events.
//! Honest accounts trade with no transaction-graph connection to their
//! counterparties, so detection recall and precision are 1.0 by
//! construction whenever the hop threshold reaches the planted distance.

use crate::model::{AccountId, GraphBuildStats, NftTrace, TraceEvent, TransactionGraph};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use thiserror::Error;

/// Collection name used for all generated traces.
pub const SYNTH_COLLECTION: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    /// Accounts in the honest trading pool (never wired into the graph).
    pub honest_accounts: u64,
    pub ring_count: u32,
    /// Members per ring; must be at least 2 when rings exist.
    pub ring_size: u32,
    /// When set, each ring's size is drawn from `ring_size..=ring_size_max`.
    pub ring_size_max: Option<u32>,
    /// Cyclic trades each ring executes on its token.
    pub trades_per_ring: u32,
    /// Total trades spread over honest tokens.
    pub honest_trades: u32,
    /// Random transactions among a dedicated background population.
    pub background_tx: u64,
    /// Hop distance at which ring members are wired together, at least 1.
    pub link_path_hops: u32,
    pub price_base_usd: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            honest_accounts: 100,
            ring_count: 2,
            ring_size: 3,
            ring_size_max: None,
            trades_per_ring: 6,
            honest_trades: 50,
            background_tx: 500,
            link_path_hops: 3,
            price_base_usd: 1_000.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("inconsistent config: {0}")]
    InconsistentConfig(String),
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
}

/// A flagged-trade reference: token plus event position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WashEventRef {
    pub token_id: u64,
    pub seq: u32,
}

/// Known-answer labels for a generated dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Sorted by (token_id, seq).
    pub wash_events: Vec<WashEventRef>,
    pub colluding_accounts: Vec<Vec<AccountId>>,
}

/// One raw row of the emitted transactions CSV. Rows that the ingest
/// filters would drop (contract calls, zero values) are planted among the
/// background population only, so the kept-edge set stays the planted one.
#[derive(Debug, Clone)]
struct TxRow {
    from: AccountId,
    to: AccountId,
    value_wei: u128,
    input: String,
    block_number: u64,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub graph: TransactionGraph,
    pub graph_stats: GraphBuildStats,
    pub traces: Vec<NftTrace>,
    /// Every account appearing in a trace.
    pub owners: BTreeSet<AccountId>,
    pub ground_truth: GroundTruth,
    tx_rows: Vec<TxRow>,
}

struct AccountMinter {
    used: HashSet<[u8; 20]>,
}

impl AccountMinter {
    fn new() -> Self {
        AccountMinter {
            used: HashSet::new(),
        }
    }

    fn fresh(&mut self, rng: &mut ChaCha8Rng) -> AccountId {
        loop {
            let mut bytes = [0u8; 20];
            rng.fill_bytes(&mut bytes);
            if self.used.insert(bytes) {
                return AccountId::from_bytes(bytes);
            }
        }
    }
}

fn validate(config: &SynthConfig) -> Result<(), SynthError> {
    let fail = |msg: &str| Err(SynthError::InconsistentConfig(msg.to_string()));
    if config.link_path_hops < 1 {
        return fail("link_path_hops must be at least 1");
    }
    if config.ring_count > 0 && config.ring_size < 2 {
        return fail("ring_size must be at least 2 when rings are generated");
    }
    if let Some(max) = config.ring_size_max {
        if max < config.ring_size {
            return fail("ring_size_max must be at least ring_size");
        }
    }
    if config.honest_trades > 0 && config.honest_accounts < 2 {
        return fail("honest trades need at least 2 honest accounts");
    }
    let any_trades =
        (config.ring_count > 0 && config.trades_per_ring > 0) || config.honest_trades > 0;
    if any_trades && config.price_base_usd <= 0.0 {
        return fail("price_base_usd must be positive when trades are generated");
    }
    Ok(())
}

// Whole-dollar prices keep volume sums exact in f64.
fn whole_usd(value: f64) -> f64 {
    value.round().max(1.0)
}

/// Generate a transaction graph, traces and ground truth, deterministic
/// for a given seed.
pub fn generate(config: &SynthConfig) -> Result<SynthData, SynthError> {
    validate(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut minter = AccountMinter::new();

    let rings: Vec<Vec<AccountId>> = (0..config.ring_count)
        .map(|_| {
            let size = match config.ring_size_max {
                Some(max) if max > config.ring_size => {
                    rng.random_range(config.ring_size..=max)
                }
                _ => config.ring_size,
            };
            (0..size).map(|_| minter.fresh(&mut rng)).collect()
        })
        .collect();
    let honest_pool: Vec<AccountId> = (0..config.honest_accounts)
        .map(|_| minter.fresh(&mut rng))
        .collect();

    let mut tx_rows: Vec<TxRow> = Vec::new();
    let mut push_tx = |rng: &mut ChaCha8Rng, from: AccountId, to: AccountId| {
        tx_rows.push(TxRow {
            from,
            to,
            value_wei: rng.random_range(10u128.pow(16)..10u128.pow(19)),
            input: "0x".to_string(),
            block_number: rng.random_range(1..=15_000_000),
        });
    };

    // Chain wiring: one directed intermediary chain per unordered member
    // pair, exactly link_path_hops edges long.
    for ring in &rings {
        for i in 0..ring.len() {
            for j in i + 1..ring.len() {
                let mut prev = ring[i];
                for _ in 1..config.link_path_hops {
                    let inter = minter.fresh(&mut rng);
                    push_tx(&mut rng, prev, inter);
                    prev = inter;
                }
                push_tx(&mut rng, prev, ring[j]);
            }
        }
    }

    // Background noise forms a sink region: edges run among background
    // accounts or from ring members into it, never back out, so planted
    // distances cannot be shortcut.
    let bg_count = if config.background_tx > 0 {
        (config.background_tx / 5).clamp(2, 20_000) as usize
    } else {
        0
    };
    let background: Vec<AccountId> = (0..bg_count).map(|_| minter.fresh(&mut rng)).collect();
    for _ in 0..config.background_tx {
        let i = rng.random_range(0..bg_count);
        let mut j = rng.random_range(0..bg_count);
        if i == j {
            j = (j + 1) % bg_count;
        }
        push_tx(&mut rng, background[i], background[j]);
    }
    if bg_count > 0 {
        for ring in &rings {
            for &member in ring {
                for _ in 0..2 {
                    let target = background[rng.random_range(0..bg_count)];
                    push_tx(&mut rng, member, target);
                }
            }
        }
        // Rows the ingest filters must drop, planted to exercise them.
        let noise = config.background_tx / 50;
        for _ in 0..noise {
            let i = rng.random_range(0..bg_count);
            let j = (i + 1) % bg_count;
            tx_rows.push(TxRow {
                from: background[i],
                to: background[j],
                value_wei: 1,
                input: "0xa9059cbb".to_string(),
                block_number: rng.random_range(1..=15_000_000),
            });
            tx_rows.push(TxRow {
                from: background[j],
                to: background[i],
                value_wei: 0,
                input: "0x".to_string(),
                block_number: rng.random_range(1..=15_000_000),
            });
        }
    }

    // Traces. A global event counter keeps (block, log) strictly
    // increasing, which also fixes seq order per token.
    let mut event_counter: u64 = 0;
    let mut next_event = |token_id: u64, from: AccountId, to: AccountId, value_usd: f64| {
        let event = TraceEvent {
            token_id,
            seq: 0,
            from,
            to,
            value_usd,
            block_number: 10_000_000 + event_counter,
            log_index: event_counter % 16,
            timestamp: 1_650_000_000 + event_counter * 12,
        };
        event_counter += 1;
        event
    };

    let mut traces: Vec<NftTrace> = Vec::new();
    let mut ground_truth = GroundTruth::default();
    let mut token_id: u64 = 0;

    for ring in &rings {
        let mut members_sorted = ring.clone();
        members_sorted.sort();
        ground_truth.colluding_accounts.push(members_sorted);
        if config.trades_per_ring == 0 {
            token_id += 1;
            continue;
        }
        let mut events = Vec::with_capacity(config.trades_per_ring as usize);
        for k in 0..config.trades_per_ring {
            let from = ring[k as usize % ring.len()];
            let to = ring[(k as usize + 1) % ring.len()];
            // cyclic trades inflate the price as they go
            let price = whole_usd(
                config.price_base_usd
                    * (1.0 + 0.1 * k as f64)
                    * rng.random_range(0.9..1.6),
            );
            events.push(next_event(token_id, from, to, price));
            ground_truth.wash_events.push(WashEventRef { token_id, seq: k });
        }
        traces.push(NftTrace::from_events(token_id, events));
        token_id += 1;
    }

    let mut remaining = config.honest_trades;
    while remaining > 0 {
        let mut chain_len = rng.random_range(1..=3u32).min(remaining);
        chain_len = chain_len.min(config.honest_accounts.saturating_sub(1) as u32);
        let with_transfer = config.honest_accounts > u64::from(chain_len) + 1
            && rng.random_bool(0.25);
        let picks = chain_len as usize + 1 + usize::from(with_transfer);
        let chosen: Vec<AccountId> = rand::seq::index::sample(&mut rng, honest_pool.len(), picks)
            .iter()
            .map(|i| honest_pool[i])
            .collect();
        let mut events = Vec::with_capacity(picks);
        for k in 0..chain_len as usize {
            let price = whole_usd(config.price_base_usd * rng.random_range(0.5..1.5));
            events.push(next_event(token_id, chosen[k], chosen[k + 1], price));
        }
        if with_transfer {
            let last = chain_len as usize;
            events.push(next_event(token_id, chosen[last], chosen[last + 1], 0.0));
        }
        traces.push(NftTrace::from_events(token_id, events));
        token_id += 1;
        remaining -= chain_len;
    }

    ground_truth.wash_events.sort();

    let mut owners: BTreeSet<AccountId> = BTreeSet::new();
    for trace in &traces {
        owners.extend(trace.accounts());
    }

    let (graph, graph_stats) = crate::model::graph_from_edges(
        tx_rows
            .iter()
            .filter(|row| row.input == "0x" && row.value_wei > 0)
            .map(|row| (row.from, row.to)),
    );

    Ok(SynthData {
        graph,
        graph_stats,
        traces,
        owners,
        ground_truth,
        tx_rows,
    })
}

impl SynthData {
    /// Write the four output files: `transactions.csv`, `traces.csv`,
    /// `owners.txt` and `ground_truth.json`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(), SynthError> {
        let mut tx = BufWriter::new(File::create(dir.join("transactions.csv"))?);
        writeln!(tx, "from_address,to_address,value,input,block_number")?;
        for row in &self.tx_rows {
            writeln!(
                tx,
                "{},{},{},{},{}",
                row.from, row.to, row.value_wei, row.input, row.block_number
            )?;
        }
        tx.flush()?;

        let mut traces = BufWriter::new(File::create(dir.join("traces.csv"))?);
        writeln!(
            traces,
            "collection,token_id,from_address,to_address,value_usd,block_number,log_index,timestamp"
        )?;
        for trace in &self.traces {
            for e in trace.events() {
                writeln!(
                    traces,
                    "{},{},{},{},{},{},{},{}",
                    SYNTH_COLLECTION,
                    e.token_id,
                    e.from,
                    e.to,
                    e.value_usd,
                    e.block_number,
                    e.log_index,
                    e.timestamp
                )?;
            }
        }
        traces.flush()?;

        let mut owners = BufWriter::new(File::create(dir.join("owners.txt"))?);
        for owner in &self.owners {
            writeln!(owners, "{owner}")?;
        }
        owners.flush()?;

        let mut gt = BufWriter::new(File::create(dir.join("ground_truth.json"))?);
        serde_json::to_writer_pretty(&mut gt, &self.ground_truth)
            .map_err(std::io::Error::other)?;
        writeln!(gt)?;
        gt.flush()?;
        Ok(())
    }
}
