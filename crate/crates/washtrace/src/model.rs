//! Core domain types shared by every other module. No I/O happens here.
//!
//! All types are immutable after construction and safe to share across
//! worker threads; [`Partition`] is the one mutable structure and is
//! single-writer.

use serde::{Deserialize, Serialize, Serializer};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// A 20-byte account address, normalized to lowercase hex at parse time.
///
/// Ordering and hashing operate on the raw bytes, which coincides with
/// lexicographic order of the canonical `0x…` rendering.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccountId([u8; 20]);

/// Errors from [`AccountId::parse`], one variant per malformation.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseAccountError {
    #[error("missing 0x prefix")]
    MissingPrefix,
    #[error("expected 42 characters, got {0}")]
    BadLength(usize),
    #[error("non-hex character at position {0}")]
    InvalidHex(usize),
}

impl AccountId {
    /// Parse and normalize an address string.
    ///
    /// Accepts mixed-case hex; prefix is checked first so `abc123` reports a
    /// missing prefix rather than a bad length.
    pub fn parse(text: &str) -> Result<Self, ParseAccountError> {
        let rest = text
            .strip_prefix("0x")
            .or_else(|| text.strip_prefix("0X"))
            .ok_or(ParseAccountError::MissingPrefix)?;
        if text.len() != 42 {
            return Err(ParseAccountError::BadLength(text.len()));
        }
        let mut bytes = [0u8; 20];
        for (i, chunk) in rest.as_bytes().chunks(2).enumerate() {
            let hi = hex_nibble(chunk[0]).ok_or(ParseAccountError::InvalidHex(2 + 2 * i))?;
            let lo = hex_nibble(chunk[1]).ok_or(ParseAccountError::InvalidHex(3 + 2 * i))?;
            bytes[i] = (hi << 4) | lo;
        }
        Ok(AccountId(bytes))
    }

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    pub const fn from_bytes(bytes: [u8; 20]) -> Self {
        AccountId(bytes)
    }
}

fn hex_nibble(c: u8) -> Option<u8> {
    match c {
        b'0'..=b'9' => Some(c - b'0'),
        b'a'..=b'f' => Some(c - b'a' + 10),
        b'A'..=b'F' => Some(c - b'A' + 10),
        _ => None,
    }
}

/// Parse an account address; alias for [`AccountId::parse`].
pub fn parse_account(text: &str) -> Result<AccountId, ParseAccountError> {
    AccountId::parse(text)
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for AccountId {
    type Err = ParseAccountError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AccountId::parse(s)
    }
}

impl Serialize for AccountId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AccountId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        AccountId::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Counts of edges silently discarded while building a [`TransactionGraph`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GraphBuildStats {
    pub duplicate_edges_dropped: u64,
    pub self_loops_dropped: u64,
}

/// Directed graph of accounts connected by filtered value transfers.
///
/// Vertices carry a dense `u32` index assigned in ascending address order,
/// so index order and address order coincide. Parallel edges are collapsed
/// and self-loops dropped: hop-limited reachability needs neither.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionGraph {
    accounts: Vec<AccountId>,
    adjacency: Vec<Vec<u32>>,
}

impl TransactionGraph {
    pub fn vertex_count(&self) -> usize {
        self.accounts.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    /// Accounts in ascending address order; position equals dense index.
    pub fn vertices(&self) -> &[AccountId] {
        &self.accounts
    }

    pub fn account(&self, idx: u32) -> AccountId {
        self.accounts[idx as usize]
    }

    pub fn index_of(&self, account: &AccountId) -> Option<u32> {
        self.accounts.binary_search(account).ok().map(|i| i as u32)
    }

    pub fn contains_vertex(&self, account: &AccountId) -> bool {
        self.index_of(account).is_some()
    }

    /// Out-neighbors of a vertex, sorted ascending by address.
    pub fn out_neighbors(&self, idx: u32) -> &[u32] {
        &self.adjacency[idx as usize]
    }

    /// All edges as account pairs, sorted by (src, dst).
    pub fn edge_list(&self) -> Vec<(AccountId, AccountId)> {
        let mut edges = Vec::with_capacity(self.edge_count());
        for (v, outs) in self.adjacency.iter().enumerate() {
            for &u in outs {
                edges.push((self.accounts[v], self.accounts[u as usize]));
            }
        }
        edges
    }
}

/// Build a deduplicated, self-loop-free graph from raw directed edges.
///
/// The result is independent of input order: vertices are indexed in
/// address order and neighbor lists are sorted.
pub fn graph_from_edges(
    edges: impl IntoIterator<Item = (AccountId, AccountId)>,
) -> (TransactionGraph, GraphBuildStats) {
    let mut stats = GraphBuildStats::default();
    let mut kept: BTreeSet<(AccountId, AccountId)> = BTreeSet::new();
    let mut vertices: BTreeSet<AccountId> = BTreeSet::new();
    for (from, to) in edges {
        if from == to {
            stats.self_loops_dropped += 1;
            continue;
        }
        if !kept.insert((from, to)) {
            stats.duplicate_edges_dropped += 1;
            continue;
        }
        vertices.insert(from);
        vertices.insert(to);
    }

    let accounts: Vec<AccountId> = vertices.into_iter().collect();
    let mut adjacency = vec![Vec::new(); accounts.len()];
    for (from, to) in kept {
        // binary_search cannot fail: both endpoints were inserted above
        let v = accounts.binary_search(&from).unwrap();
        let u = accounts.binary_search(&to).unwrap() as u32;
        adjacency[v].push(u);
    }
    (TransactionGraph { accounts, adjacency }, stats)
}

/// One ownership-change event in a token's trace.
///
/// `value_usd == 0` marks a free transfer, `> 0` a paid trade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub token_id: u64,
    /// 0-based position within the token's trace, assigned after sorting.
    pub seq: u32,
    pub from: AccountId,
    pub to: AccountId,
    pub value_usd: f64,
    pub block_number: u64,
    pub log_index: u64,
    pub timestamp: u64,
}

impl TraceEvent {
    pub fn is_trade(&self) -> bool {
        self.value_usd > 0.0
    }

    pub fn is_transfer(&self) -> bool {
        self.value_usd == 0.0
    }
}

/// Temporally ordered ownership trace of one token.
///
/// The strict total order is `(block_number, log_index)`; timestamps can tie
/// within a block so they only back the ordering, they do not define it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NftTrace {
    pub token_id: u64,
    events: Vec<TraceEvent>,
}

impl NftTrace {
    /// Sort events into canonical order and assign `seq` by position.
    ///
    /// Ties on `(block_number, log_index)` fall back to the remaining fields
    /// so the result never depends on input order.
    pub fn from_events(token_id: u64, mut events: Vec<TraceEvent>) -> Self {
        events.sort_by(|a, b| {
            (a.block_number, a.log_index, a.timestamp, a.from, a.to)
                .cmp(&(b.block_number, b.log_index, b.timestamp, b.from, b.to))
                .then(a.value_usd.total_cmp(&b.value_usd))
        });
        for (i, event) in events.iter_mut().enumerate() {
            event.seq = i as u32;
            event.token_id = token_id;
        }
        NftTrace { token_id, events }
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Distinct accounts appearing as transferor or transferee.
    pub fn accounts(&self) -> BTreeSet<AccountId> {
        let mut set = BTreeSet::new();
        for e in &self.events {
            set.insert(e.from);
            set.insert(e.to);
        }
        set
    }

    /// Seqs of events whose `from` is not the previous event's `to`.
    ///
    /// Each sale or transfer should originate from the current owner;
    /// violations are data warnings, not fatal errors.
    pub fn continuity_violations(&self) -> Vec<u32> {
        self.events
            .windows(2)
            .filter(|w| w[1].from != w[0].to)
            .map(|w| w[1].seq)
            .collect()
    }

    /// Seqs of events whose timestamp goes backwards.
    pub fn timestamp_regressions(&self) -> Vec<u32> {
        self.events
            .windows(2)
            .filter(|w| w[1].timestamp < w[0].timestamp)
            .map(|w| w[1].seq)
            .collect()
    }
}

/// Directed weighted graph over NFT-owner accounts.
///
/// `edges[(src, dst)] = hops` where `hops` is the number of edges on the
/// shortest directed path `src → dst` in the transaction graph the network
/// was built from, always within `1..=max_hops`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkabilityNetwork {
    edges: BTreeMap<(AccountId, AccountId), u32>,
    owner_set: BTreeSet<AccountId>,
    max_hops: u32,
}

impl LinkabilityNetwork {
    /// Assemble a network from already-validated parts.
    ///
    /// Debug builds assert the structural invariants; callers are the
    /// builder in `linkability` and its CSV reader, both of which enforce
    /// them up front.
    pub fn from_parts(
        edges: BTreeMap<(AccountId, AccountId), u32>,
        owner_set: BTreeSet<AccountId>,
        max_hops: u32,
    ) -> Self {
        debug_assert!(edges.iter().all(|(&(src, dst), &hops)| {
            src != dst
                && hops >= 1
                && hops <= max_hops
                && owner_set.contains(&src)
                && owner_set.contains(&dst)
        }));
        LinkabilityNetwork {
            edges,
            owner_set,
            max_hops,
        }
    }

    pub fn edges(&self) -> &BTreeMap<(AccountId, AccountId), u32> {
        &self.edges
    }

    pub fn owner_set(&self) -> &BTreeSet<AccountId> {
        &self.owner_set
    }

    /// Maximum hop count used at construction; detection thresholds above
    /// this would be silently incomplete and are rejected.
    pub fn max_hops(&self) -> u32 {
        self.max_hops
    }

    pub fn hops(&self, src: &AccountId, dst: &AccountId) -> Option<u32> {
        self.edges.get(&(*src, *dst)).copied()
    }

    /// Whether an edge in either direction joins `a` and `b` within `h` hops.
    pub fn linked_within(&self, a: &AccountId, b: &AccountId, h: u32) -> bool {
        self.hops(a, b).is_some_and(|d| d <= h) || self.hops(b, a).is_some_and(|d| d <= h)
    }
}

/// Disjoint-set structure over a dense index of accounts.
///
/// Path compression plus union by rank; single-writer.
#[derive(Debug, Clone)]
pub struct Partition {
    accounts: Vec<AccountId>,
    index: HashMap<AccountId, usize>,
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl Default for Partition {
    fn default() -> Self {
        Self::new()
    }
}

impl Partition {
    pub fn new() -> Self {
        Partition {
            accounts: Vec::new(),
            index: HashMap::new(),
            parent: Vec::new(),
            rank: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.accounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }

    pub fn contains(&self, account: &AccountId) -> bool {
        self.index.contains_key(account)
    }

    /// Add an account as a singleton block; idempotent.
    pub fn insert(&mut self, account: AccountId) -> usize {
        if let Some(&i) = self.index.get(&account) {
            return i;
        }
        let i = self.accounts.len();
        self.accounts.push(account);
        self.index.insert(account, i);
        self.parent.push(i);
        self.rank.push(0);
        i
    }

    fn find_root(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Representative account of the block containing `account`.
    pub fn find(&mut self, account: &AccountId) -> Option<AccountId> {
        let i = *self.index.get(account)?;
        let root = self.find_root(i);
        Some(self.accounts[root])
    }

    /// Union the blocks of two indexed accounts. Returns false (and does
    /// nothing) when either account is not indexed.
    pub fn union(&mut self, a: &AccountId, b: &AccountId) -> bool {
        let (Some(&ia), Some(&ib)) = (self.index.get(a), self.index.get(b)) else {
            return false;
        };
        let ra = self.find_root(ia);
        let rb = self.find_root(ib);
        if ra != rb {
            match self.rank[ra].cmp(&self.rank[rb]) {
                std::cmp::Ordering::Less => self.parent[ra] = rb,
                std::cmp::Ordering::Greater => self.parent[rb] = ra,
                std::cmp::Ordering::Equal => {
                    self.parent[rb] = ra;
                    self.rank[ra] += 1;
                }
            }
        }
        true
    }

    /// Whether both accounts are indexed and share a block.
    pub fn same_set(&mut self, a: &AccountId, b: &AccountId) -> bool {
        let (Some(&ia), Some(&ib)) = (self.index.get(a), self.index.get(b)) else {
            return false;
        };
        self.find_root(ia) == self.find_root(ib)
    }

    /// All blocks, each sorted ascending, ordered by their first account.
    pub fn blocks(&mut self) -> Vec<Vec<AccountId>> {
        let mut by_root: BTreeMap<usize, Vec<AccountId>> = BTreeMap::new();
        for i in 0..self.accounts.len() {
            let root = self.find_root(i);
            by_root.entry(root).or_default().push(self.accounts[i]);
        }
        let mut blocks: Vec<Vec<AccountId>> = by_root
            .into_values()
            .map(|mut b| {
                b.sort();
                b
            })
            .collect();
        blocks.sort();
        blocks
    }
}

/// Per-token wash trade detection result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WashReport {
    pub token_id: u64,
    pub total_volume_usd: f64,
    pub washed_volume_usd: f64,
    pub wash_sales: u64,
    pub total_sales: u64,
    /// `washed_volume_usd / total_volume_usd`, 0 when there was no volume.
    pub ratio: f64,
    /// Link-hop threshold the detection ran with.
    pub max_link_hops: u32,
    /// Seqs of flagged trade events, ascending.
    pub flagged_events: Vec<u32>,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn acct(n: u8) -> AccountId {
        let mut bytes = [0u8; 20];
        bytes[19] = n;
        AccountId::from_bytes(bytes)
    }

    #[test]
    fn parse_normalizes_case() {
        let mixed = "0xAbCdEf0123456789aBcDeF0123456789AbCdEf01";
        let id = AccountId::parse(mixed).unwrap();
        assert_eq!(id.to_string(), mixed.to_lowercase());
    }

    #[test]
    fn parse_accepts_zero_address() {
        let zero = format!("0x{}", "0".repeat(40));
        let id = AccountId::parse(&zero).unwrap();
        assert_eq!(id.to_string(), zero);
    }

    #[test]
    fn parse_rejects_missing_prefix() {
        assert_eq!(
            AccountId::parse("abc123"),
            Err(ParseAccountError::MissingPrefix)
        );
    }

    #[test]
    fn parse_rejects_bad_length() {
        assert_eq!(
            AccountId::parse("0xabc"),
            Err(ParseAccountError::BadLength(5))
        );
    }

    #[test]
    fn parse_rejects_non_hex() {
        let bad = format!("0x{}g", "0".repeat(39));
        assert_eq!(AccountId::parse(&bad), Err(ParseAccountError::InvalidHex(41)));
    }

    #[test]
    fn account_order_matches_hex_order() {
        let a = acct(1);
        let b = acct(2);
        assert!(a < b);
        assert!(a.to_string() < b.to_string());
    }

    #[test]
    fn graph_dedups_but_keeps_direction() {
        let (a, b) = (acct(1), acct(2));
        let (g, stats) = graph_from_edges(vec![(a, b), (a, b), (b, a)]);
        assert_eq!(g.edge_list(), vec![(a, b), (b, a)]);
        assert_eq!(stats.duplicate_edges_dropped, 1);
        assert_eq!(stats.self_loops_dropped, 0);
    }

    #[test]
    fn graph_drops_self_loops() {
        let a = acct(1);
        let (g, stats) = graph_from_edges(vec![(a, a)]);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.vertex_count(), 0);
        assert_eq!(stats.self_loops_dropped, 1);
    }

    #[test]
    fn empty_edge_list_gives_empty_graph() {
        let (g, stats) = graph_from_edges(Vec::new());
        assert_eq!(g.vertex_count(), 0);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(stats, GraphBuildStats::default());
    }

    #[test]
    fn graph_roundtrips_through_edge_list() {
        let edges = vec![
            (acct(3), acct(1)),
            (acct(1), acct(2)),
            (acct(2), acct(3)),
            (acct(1), acct(3)),
        ];
        let (g, _) = graph_from_edges(edges);
        let (g2, stats) = graph_from_edges(g.edge_list());
        assert_eq!(g, g2);
        assert_eq!(stats, GraphBuildStats::default());
    }

    #[test]
    fn neighbor_lists_sorted_by_address() {
        let (g, _) = graph_from_edges(vec![(acct(1), acct(9)), (acct(1), acct(2))]);
        let v = g.index_of(&acct(1)).unwrap();
        let neighbors: Vec<AccountId> = g.out_neighbors(v).iter().map(|&u| g.account(u)).collect();
        assert_eq!(neighbors, vec![acct(2), acct(9)]);
    }

    fn event(seq: u32, from: AccountId, to: AccountId, value: f64, block: u64) -> TraceEvent {
        TraceEvent {
            token_id: 7,
            seq,
            from,
            to,
            value_usd: value,
            block_number: block,
            log_index: 0,
            timestamp: block * 12,
        }
    }

    #[test]
    fn trace_sorts_and_reassigns_seq() {
        let (a, b, c) = (acct(1), acct(2), acct(3));
        let trace = NftTrace::from_events(
            7,
            vec![event(0, b, c, 5.0, 20), event(0, a, b, 0.0, 10)],
        );
        let seqs: Vec<u32> = trace.events().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![0, 1]);
        assert_eq!(trace.events()[0].from, a);
        assert!(trace.continuity_violations().is_empty());
    }

    #[test]
    fn trace_reports_continuity_violation() {
        let (a, b, c) = (acct(1), acct(2), acct(3));
        let trace = NftTrace::from_events(
            7,
            vec![event(0, a, b, 0.0, 10), event(0, c, a, 5.0, 20)],
        );
        assert_eq!(trace.continuity_violations(), vec![1]);
    }

    #[test]
    fn trace_reports_timestamp_regression() {
        let (a, b, c) = (acct(1), acct(2), acct(3));
        let mut first = event(0, a, b, 0.0, 10);
        first.timestamp = 500;
        let trace = NftTrace::from_events(7, vec![first, event(0, b, c, 5.0, 20)]);
        assert_eq!(trace.timestamp_regressions(), vec![1]);
    }

    #[test]
    fn partition_find_is_idempotent() {
        let mut p = Partition::new();
        p.insert(acct(1));
        p.insert(acct(2));
        p.union(&acct(1), &acct(2));
        let rep = p.find(&acct(1)).unwrap();
        assert_eq!(p.find(&rep), Some(rep));
        assert_eq!(p.find(&acct(2)), Some(rep));
    }

    #[test]
    fn partition_blocks_cover_and_are_disjoint() {
        let mut p = Partition::new();
        for n in 1..=5 {
            p.insert(acct(n));
        }
        p.union(&acct(1), &acct(2));
        p.union(&acct(2), &acct(3));
        let blocks = p.blocks();
        let total: usize = blocks.iter().map(Vec::len).sum();
        assert_eq!(total, 5);
        assert_eq!(blocks[0], vec![acct(1), acct(2), acct(3)]);
        let mut seen = BTreeSet::new();
        for block in &blocks {
            for account in block {
                assert!(seen.insert(*account));
            }
        }
    }

    #[test]
    fn linkability_lookup_is_direction_aware() {
        let (a, b) = (acct(1), acct(2));
        let mut edges = BTreeMap::new();
        edges.insert((a, b), 2u32);
        let ln = LinkabilityNetwork::from_parts(edges, [a, b].into_iter().collect(), 4);
        assert_eq!(ln.hops(&a, &b), Some(2));
        assert_eq!(ln.hops(&b, &a), None);
        assert!(ln.linked_within(&b, &a, 4));
        assert!(!ln.linked_within(&a, &b, 1));
    }
}
