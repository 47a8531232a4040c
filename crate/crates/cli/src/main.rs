//! Command-line pipeline: synthesize fixtures, build linkability networks,
//! detect wash trades, run depth sweeps.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 data/config error.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use washtrace::ingest::{IngestStats, IngestWarning};
use washtrace::linkability::{read_linkability_file, write_linkability_file, LinkabilityFileError};
use washtrace::report::TableFormat;
use washtrace::{
    build_linkability_network, collection_report, depth_sweep, load_exclusions, load_owners,
    load_traces, load_transactions, BfsConfig, DetectionConfig, DetectionError, ExclusionList,
    IngestError, NftTrace, SynthConfig, SynthError, WashEventRef, WashReport,
};

#[derive(Parser)]
#[command(
    name = "washtrace",
    version,
    about = "NFT wash trade detection from ownership traces and account linkability"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a linkability network from a transactions CSV and an owner list
    BuildLinkability(BuildLinkabilityArgs),
    /// Detect wash trades in ownership traces using a linkability network
    Detect(DetectArgs),
    /// Re-run detection across link-hop thresholds 1..=h-max
    Sweep(SweepArgs),
    /// Generate a deterministic synthetic dataset with planted rings
    Synth(SynthArgs),
}

#[derive(Args)]
struct BuildLinkabilityArgs {
    /// Transactions CSV (ethereum-etl column naming)
    #[arg(long)]
    transactions: PathBuf,
    /// Owner addresses, one per line
    #[arg(long)]
    owners: PathBuf,
    /// Addresses to exclude (exchanges, pools), one per line
    #[arg(long)]
    exclusions: Option<PathBuf>,
    /// Maximum BFS path length in edges
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    max_hops: u32,
    /// Ignore transactions above this block
    #[arg(long, default_value_t = washtrace::DEFAULT_MAX_BLOCK)]
    max_block: u64,
    /// Worker threads (0 = auto)
    #[arg(long, default_value_t = 0, env = "WASHTRACE_WORKERS")]
    workers: usize,
    /// Output linkability CSV
    #[arg(long)]
    out: PathBuf,
    /// Write ingest stats JSON here instead of stderr
    #[arg(long)]
    stats_out: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// NFT ownership traces CSV
    #[arg(long)]
    traces: PathBuf,
    /// Linkability CSV produced by build-linkability
    #[arg(long)]
    linkability: PathBuf,
    /// Cluster on links with at most this many hops
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    max_link_hops: u32,
    /// Cluster only accounts touched by zero-value transfers
    #[arg(long)]
    strict_paper: bool,
    /// Directory for report files (created if missing)
    #[arg(long)]
    out_dir: PathBuf,
    /// Stats table format
    #[arg(long, default_value = "csv")]
    format: TableFormat,
    /// Also export one DOT graph per token into this directory
    #[arg(long)]
    dot_dir: Option<PathBuf>,
    /// Write ingest stats JSON here instead of stderr
    #[arg(long)]
    stats_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// NFT ownership traces CSV
    #[arg(long)]
    traces: PathBuf,
    /// Linkability CSV produced by build-linkability
    #[arg(long)]
    linkability: PathBuf,
    /// Largest link-hop threshold to sweep
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    h_max: u32,
    /// Output sweep CSV
    #[arg(long)]
    out: PathBuf,
    /// Write ingest stats JSON here instead of stderr
    #[arg(long)]
    stats_out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory for the generated files (created if missing)
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    honest_accounts: u64,
    #[arg(long, default_value_t = 2)]
    ring_count: u32,
    #[arg(long, default_value_t = 3)]
    ring_size: u32,
    /// Vary ring sizes up to this (defaults to exactly --ring-size)
    #[arg(long)]
    ring_size_max: Option<u32>,
    #[arg(long, default_value_t = 6)]
    trades_per_ring: u32,
    #[arg(long, default_value_t = 50)]
    honest_trades: u32,
    #[arg(long, default_value_t = 500)]
    background_tx: u64,
    #[arg(long, default_value_t = 3)]
    link_path_hops: u32,
    #[arg(long, default_value_t = 1000.0)]
    price_base_usd: f64,
}

enum CliError {
    Usage(String),
    Io(String),
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Data(m) => m,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } => CliError::Io(e.to_string()),
            IngestError::MissingColumns { .. } | IngestError::Header { .. } => {
                CliError::Data(e.to_string())
            }
        }
    }
}

impl From<LinkabilityFileError> for CliError {
    fn from(e: LinkabilityFileError) -> Self {
        match e {
            LinkabilityFileError::Io { .. } => CliError::Io(e.to_string()),
            LinkabilityFileError::Malformed { .. } => CliError::Data(e.to_string()),
        }
    }
}

impl From<DetectionError> for CliError {
    fn from(e: DetectionError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InconsistentConfig(_) => CliError::Usage(e.to_string()),
            SynthError::Io(_) => CliError::Io(e.to_string()),
        }
    }
}

fn io_ctx(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::BuildLinkability(args) => cmd_build_linkability(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn report_warnings(label: &str, warnings: &[IngestWarning]) {
    for warning in warnings {
        eprintln!("warning: {label}: {warning}");
    }
}

fn emit_stats(stats: &IngestStats, stats_out: Option<&Path>) -> Result<(), CliError> {
    let json = serde_json::to_string(stats).expect("stats serialize");
    match stats_out {
        Some(path) => fs::write(path, json + "\n").map_err(io_ctx(path)),
        None => {
            eprintln!("{json}");
            Ok(())
        }
    }
}

fn cmd_build_linkability(args: BuildLinkabilityArgs) -> Result<(), CliError> {
    let exclusions = match &args.exclusions {
        Some(path) => {
            let (list, warnings) = load_exclusions(path)?;
            report_warnings("exclusions", &warnings);
            list
        }
        None => ExclusionList::empty(),
    };
    let load = load_transactions(&args.transactions, &exclusions, Some(args.max_block))?;
    emit_stats(&load.stats, args.stats_out.as_deref())?;
    eprintln!(
        "graph: {} vertices, {} edges ({} duplicate rows, {} self-loops collapsed)",
        load.graph.vertex_count(),
        load.graph.edge_count(),
        load.graph_stats.duplicate_edges_dropped,
        load.graph_stats.self_loops_dropped
    );

    let (owners, warnings) = load_owners(&args.owners)?;
    report_warnings("owners", &warnings);

    let ln = build_linkability_network(
        &load.graph,
        &owners,
        &BfsConfig {
            max_hops: args.max_hops,
            workers: args.workers,
        },
    );
    eprintln!("linkability: {} edges over {} owners", ln.edges().len(), owners.len());
    write_linkability_file(&ln, &args.out).map_err(io_ctx(&args.out))
}

fn sanitize_filename(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(serde::Serialize)]
struct FlaggedEvents {
    wash_events: Vec<WashEventRef>,
}

/// Flagged events across a collection's reports as sorted JSON, the same
/// shape ground-truth files use.
fn flagged_events_json(reports: &[WashReport]) -> String {
    let mut wash_events: Vec<WashEventRef> = reports
        .iter()
        .flat_map(|r| {
            r.flagged_events.iter().map(|&seq| WashEventRef {
                token_id: r.token_id,
                seq,
            })
        })
        .collect();
    wash_events.sort_unstable();
    let mut out = serde_json::to_string_pretty(&FlaggedEvents { wash_events })
        .expect("flagged events serialize");
    out.push('\n');
    out
}

fn cmd_detect(args: DetectArgs) -> Result<(), CliError> {
    let traces = load_traces(&args.traces)?;
    report_warnings("traces", &traces.warnings);
    emit_stats(&traces.stats, args.stats_out.as_deref())?;

    let ln = read_linkability_file(&args.linkability)?;
    let config = DetectionConfig {
        max_link_hops: args.max_link_hops,
        strict_paper_mode: args.strict_paper,
    };

    fs::create_dir_all(&args.out_dir).map_err(io_ctx(&args.out_dir))?;
    if let Some(dot_dir) = &args.dot_dir {
        fs::create_dir_all(dot_dir).map_err(io_ctx(dot_dir))?;
    }

    let mut summaries = Vec::new();
    for (collection, collection_traces) in &traces.collections {
        let (reports, summary) = collection_report(collection, collection_traces, &ln, &config)?;
        let stem = sanitize_filename(collection);

        let table = washtrace::render_stats_table(&reports, args.format);
        let table_path = args
            .out_dir
            .join(format!("{stem}_stats.{}", args.format.extension()));
        fs::write(&table_path, table).map_err(io_ctx(&table_path))?;

        let histogram_path = args.out_dir.join(format!("{stem}_histogram.csv"));
        fs::write(&histogram_path, washtrace::render_histogram(&summary))
            .map_err(io_ctx(&histogram_path))?;

        let flagged_path = args.out_dir.join(format!("{stem}_flagged.json"));
        fs::write(&flagged_path, flagged_events_json(&reports)).map_err(io_ctx(&flagged_path))?;

        if let Some(dot_dir) = &args.dot_dir {
            for trace in collection_traces {
                let report = reports
                    .iter()
                    .find(|r| r.token_id == trace.token_id)
                    .expect("every trace has a report");
                let dot = washtrace::export_token_dot(trace, &ln, report);
                let dot_path = dot_dir.join(format!("{stem}_{}.dot", trace.token_id));
                fs::write(&dot_path, dot).map_err(io_ctx(&dot_path))?;
            }
        }

        eprintln!(
            "{collection}: {} tokens, wash share {}",
            summary.token_count,
            summary.wash_share_percent()
        );
        summaries.push(summary);
    }

    let volume_path = args.out_dir.join("volume_summary.csv");
    fs::write(&volume_path, washtrace::render_volume_summary(&summaries))
        .map_err(io_ctx(&volume_path))
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let traces = load_traces(&args.traces)?;
    report_warnings("traces", &traces.warnings);
    emit_stats(&traces.stats, args.stats_out.as_deref())?;
    let all: Vec<NftTrace> = traces.all_traces();
    let ln = read_linkability_file(&args.linkability)?;
    let rows = depth_sweep(&all, &ln, args.h_max)?;
    fs::write(&args.out, washtrace::render_sweep_csv(&rows)).map_err(io_ctx(&args.out))
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let config = SynthConfig {
        seed: args.seed,
        honest_accounts: args.honest_accounts,
        ring_count: args.ring_count,
        ring_size: args.ring_size,
        ring_size_max: args.ring_size_max,
        trades_per_ring: args.trades_per_ring,
        honest_trades: args.honest_trades,
        background_tx: args.background_tx,
        link_path_hops: args.link_path_hops,
        price_base_usd: args.price_base_usd,
    };
    let data = washtrace::generate(&config)?;
    fs::create_dir_all(&args.out_dir).map_err(io_ctx(&args.out_dir))?;
    data.write_to_dir(&args.out_dir)?;
    eprintln!(
        "synth: {} owner accounts in {} traces, {} planted wash events",
        data.owners.len(),
        data.traces.len(),
        data.ground_truth.wash_events.len()
    );
    Ok(())
}
