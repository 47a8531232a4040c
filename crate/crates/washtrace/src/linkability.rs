//! Linkability network construction: one depth-limited BFS per owner
//! account, run in parallel over a shared read-only transaction graph.
//!
//! Edge weights are hop counts: the number of edges on the shortest
//! directed path between two owner accounts, in `1..=max_hops`. BFS
//! follows out-edges only, matching the value-transfer direction.

use crate::model::{AccountId, LinkabilityNetwork, TransactionGraph};
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// BFS construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BfsConfig {
    /// Maximum path length in edges, at least 1.
    pub max_hops: u32,
    /// Worker threads; 0 picks the runtime default.
    pub workers: usize,
}

impl Default for BfsConfig {
    fn default() -> Self {
        BfsConfig {
            max_hops: 4,
            workers: 0,
        }
    }
}

/// Per-root visited set over the dense vertex index. Hash sets per root
/// are the dominant cost at chain scale, so this stays a flat bitmap.
struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    fn new(len: usize) -> Self {
        BitSet {
            words: vec![0; len.div_ceil(64)],
        }
    }

    #[inline]
    fn get(&self, i: u32) -> bool {
        (self.words[i as usize / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    fn set(&mut self, i: u32) {
        self.words[i as usize / 64] |= 1 << (i % 64);
    }
}

/// Layered BFS over dense indices. Returns each owner vertex discovered
/// within `max_hops` edges of `root`, with its exact shortest hop count,
/// sorted by index (= address order). The root itself is never reported.
fn bfs_dense(
    graph: &TransactionGraph,
    root: u32,
    owner_mask: &BitSet,
    max_hops: u32,
) -> Vec<(u32, u32)> {
    let mut visited = BitSet::new(graph.vertex_count());
    visited.set(root);
    let mut frontier = vec![root];
    let mut next = Vec::new();
    let mut found = Vec::new();
    for hop in 1..=max_hops {
        if frontier.is_empty() {
            break;
        }
        for &v in &frontier {
            for &u in graph.out_neighbors(v) {
                if !visited.get(u) {
                    visited.set(u);
                    if owner_mask.get(u) {
                        found.push((u, hop));
                    }
                    next.push(u);
                }
            }
        }
        std::mem::swap(&mut frontier, &mut next);
        next.clear();
    }
    found.sort_unstable();
    found
}

fn owner_mask(graph: &TransactionGraph, owners: &BTreeSet<AccountId>) -> BitSet {
    let mut mask = BitSet::new(graph.vertex_count());
    for owner in owners {
        if let Some(i) = graph.index_of(owner) {
            mask.set(i);
        }
    }
    mask
}

/// Owner accounts reachable from `root` within `max_hops` edges, with
/// exact shortest hop counts. A root absent from the graph is a valid
/// isolated owner and yields an empty result.
pub fn bfs_from_root(
    graph: &TransactionGraph,
    root: &AccountId,
    owners: &BTreeSet<AccountId>,
    max_hops: u32,
) -> Vec<(AccountId, u32)> {
    let Some(root_idx) = graph.index_of(root) else {
        return Vec::new();
    };
    let mask = owner_mask(graph, owners);
    bfs_dense(graph, root_idx, &mask, max_hops)
        .into_iter()
        .map(|(idx, hops)| (graph.account(idx), hops))
        .collect()
}

/// Run one BFS per owner and merge the per-root edge sets.
///
/// The output is deterministic for any worker count: roots are processed
/// in address order and each root's BFS is itself deterministic.
pub fn build_linkability_network(
    graph: &TransactionGraph,
    owners: &BTreeSet<AccountId>,
    config: &BfsConfig,
) -> LinkabilityNetwork {
    assert!(config.max_hops >= 1, "max_hops must be at least 1");
    let mask = owner_mask(graph, owners);
    let roots: Vec<(AccountId, Option<u32>)> = owners
        .iter()
        .map(|&owner| (owner, graph.index_of(&owner)))
        .collect();

    let run = || {
        roots
            .par_iter()
            .map(|&(_, idx)| match idx {
                Some(root) => bfs_dense(graph, root, &mask, config.max_hops),
                None => Vec::new(),
            })
            .collect::<Vec<_>>()
    };
    let per_root = if config.workers == 0 {
        run()
    } else {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
        {
            Ok(pool) => pool.install(run),
            // Pool creation can fail under resource exhaustion; fall back
            // to whatever pool is ambient.
            Err(_) => run(),
        }
    };

    let mut edges: BTreeMap<(AccountId, AccountId), u32> = BTreeMap::new();
    for ((root, _), found) in roots.iter().zip(per_root) {
        for (idx, hops) in found {
            edges.insert((*root, graph.account(idx)), hops);
        }
    }
    LinkabilityNetwork::from_parts(edges, owners.clone(), config.max_hops)
}

#[derive(Debug, Error)]
pub enum LinkabilityFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },
}

/// Serialize a network as CSV: a `# max_hops=N` metadata comment, the
/// `src,dst,hops` header, then rows sorted by (src, dst).
pub fn write_linkability_csv(
    ln: &LinkabilityNetwork,
    writer: &mut impl Write,
) -> std::io::Result<()> {
    writeln!(writer, "# max_hops={}", ln.max_hops())?;
    writeln!(writer, "src,dst,hops")?;
    for ((src, dst), hops) in ln.edges() {
        writeln!(writer, "{src},{dst},{hops}")?;
    }
    Ok(())
}

pub fn write_linkability_file(ln: &LinkabilityNetwork, path: &Path) -> std::io::Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_linkability_csv(ln, &mut writer)?;
    writer.flush()
}

/// Read a linkability CSV back.
///
/// Construction depth comes from the `# max_hops=N` comment; without it
/// the maximum observed hop count is all the file attests to, and that is
/// used instead. The owner set is reconstructed from edge endpoints, so
/// isolated owners do not round-trip.
pub fn read_linkability_file(path: &Path) -> Result<LinkabilityNetwork, LinkabilityFileError> {
    let file = File::open(path).map_err(|e| LinkabilityFileError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    read_linkability_csv(BufReader::new(file), path)
}

pub fn read_linkability_csv(
    reader: impl BufRead,
    path: &Path,
) -> Result<LinkabilityNetwork, LinkabilityFileError> {
    let malformed = |line: u64, message: String| LinkabilityFileError::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut declared_max_hops: Option<u32> = None;
    let mut seen_header = false;
    let mut edges: BTreeMap<(AccountId, AccountId), u32> = BTreeMap::new();
    let mut owners: BTreeSet<AccountId> = BTreeSet::new();
    let mut max_seen = 0u32;

    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| LinkabilityFileError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(comment) = text.strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix("max_hops=") {
                let hops = value
                    .trim()
                    .parse::<u32>()
                    .map_err(|_| malformed(line_no, format!("bad max_hops value {value:?}")))?;
                declared_max_hops = Some(hops);
            }
            continue;
        }
        if !seen_header {
            if text != "src,dst,hops" {
                return Err(malformed(line_no, format!("expected header src,dst,hops, got {text:?}")));
            }
            seen_header = true;
            continue;
        }
        let mut parts = text.split(',');
        let (Some(src), Some(dst), Some(hops), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(malformed(line_no, "expected 3 comma-separated fields".into()));
        };
        let src = AccountId::parse(src.trim()).map_err(|e| malformed(line_no, e.to_string()))?;
        let dst = AccountId::parse(dst.trim()).map_err(|e| malformed(line_no, e.to_string()))?;
        let hops = hops
            .trim()
            .parse::<u32>()
            .map_err(|_| malformed(line_no, format!("bad hop count {hops:?}")))?;
        if hops == 0 {
            return Err(malformed(line_no, "hop count must be at least 1".into()));
        }
        if src == dst {
            return Err(malformed(line_no, "self-edge not allowed".into()));
        }
        if let Some(limit) = declared_max_hops {
            if hops > limit {
                return Err(malformed(
                    line_no,
                    format!("hop count {hops} exceeds declared max_hops {limit}"),
                ));
            }
        }
        max_seen = max_seen.max(hops);
        owners.insert(src);
        owners.insert(dst);
        edges.insert((src, dst), hops);
    }

    if !seen_header {
        return Err(malformed(0, "missing src,dst,hops header".into()));
    }
    let max_hops = declared_max_hops.unwrap_or(max_seen);
    Ok(LinkabilityNetwork::from_parts(edges, owners, max_hops))
}
