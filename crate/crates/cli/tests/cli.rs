//! Black-box CLI behavior: exit-code taxonomy, file outputs, determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn washtrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_washtrace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

fn path_str(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TRACE_HEADER: &str =
    "collection,token_id,from_address,to_address,value_usd,block_number,log_index,timestamp\n";

fn addr(n: u16) -> String {
    format!("0x{:040x}", n)
}

/// Two-account fixture: one trade, plus a 1-hop link between the parties.
fn linkability_only_fixture(dir: &Path) -> (String, String) {
    let traces = dir.join("traces.csv");
    fs::write(
        &traces,
        format!("{TRACE_HEADER}apes,7,{},{},100.0,10,0,120\n", addr(1), addr(2)),
    )
    .unwrap();
    let ln = dir.join("ln.csv");
    fs::write(
        &ln,
        format!("# max_hops=4\nsrc,dst,hops\n{},{},1\n", addr(1), addr(2)),
    )
    .unwrap();
    (traces.to_str().unwrap().into(), ln.to_str().unwrap().into())
}

#[test]
fn missing_required_flag_is_usage_error() {
    let out = washtrace(&["build-linkability", "--owners", "x.txt", "--out", "y.csv"]);
    assert_eq!(exit_code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.to_lowercase().contains("usage"), "stderr: {stderr}");
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = washtrace(&["frobnicate"]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn help_exits_zero() {
    let out = washtrace(&["--help"]);
    assert_eq!(exit_code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("build-linkability"));
}

#[test]
fn missing_input_file_is_io_error() {
    let dir = TempDir::new().unwrap();
    let out = washtrace(&[
        "build-linkability",
        "--transactions",
        "/nonexistent/tx.csv",
        "--owners",
        "/nonexistent/owners.txt",
        "--out",
        path_str(&dir.path().join("ln.csv")),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn missing_columns_is_data_error() {
    let dir = TempDir::new().unwrap();
    let tx = dir.path().join("tx.csv");
    fs::write(&tx, "from_address,to_address\n0xa,0xb\n").unwrap();
    let owners = dir.path().join("owners.txt");
    fs::write(&owners, "").unwrap();
    let out = washtrace(&[
        "build-linkability",
        "--transactions",
        path_str(&tx),
        "--owners",
        path_str(&owners),
        "--out",
        path_str(&dir.path().join("ln.csv")),
    ]);
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn build_linkability_writes_expected_header() {
    let dir = TempDir::new().unwrap();
    let tx = dir.path().join("tx.csv");
    fs::write(
        &tx,
        format!(
            "from_address,to_address,value,input,block_number\n{},{},1,0x,5\n",
            addr(1),
            addr(2)
        ),
    )
    .unwrap();
    let owners = dir.path().join("owners.txt");
    fs::write(&owners, format!("{}\n{}\n", addr(1), addr(2))).unwrap();
    let ln = dir.path().join("ln.csv");
    let out = washtrace(&[
        "build-linkability",
        "--transactions",
        path_str(&tx),
        "--owners",
        path_str(&owners),
        "--out",
        path_str(&ln),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let content = fs::read_to_string(&ln).unwrap();
    assert!(content.starts_with("# max_hops=4\nsrc,dst,hops\n"));
    assert!(content.contains(&format!("{},{},1", addr(1), addr(2))));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("\"rows_read\":1"), "stats missing: {stderr}");
}

#[test]
fn workers_env_var_is_flag_fallback_and_stats_out_writes_file() {
    let dir = TempDir::new().unwrap();
    let tx = dir.path().join("tx.csv");
    fs::write(
        &tx,
        format!(
            "from_address,to_address,value,input,block_number\n{},{},1,0x,5\n",
            addr(1),
            addr(2)
        ),
    )
    .unwrap();
    let owners = dir.path().join("owners.txt");
    fs::write(&owners, format!("{}\n", addr(1))).unwrap();
    let stats = dir.path().join("stats.json");
    let out = Command::new(env!("CARGO_BIN_EXE_washtrace"))
        .env("WASHTRACE_WORKERS", "2")
        .args([
            "build-linkability",
            "--transactions",
            path_str(&tx),
            "--owners",
            path_str(&owners),
            "--out",
            path_str(&dir.path().join("ln.csv")),
            "--stats-out",
            path_str(&stats),
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(parsed["rows_read"], 1);
    assert_eq!(parsed["rows_kept"], 1);
}

#[test]
fn detect_on_empty_traces_succeeds_with_empty_reports() {
    let dir = TempDir::new().unwrap();
    let traces = dir.path().join("traces.csv");
    fs::write(&traces, TRACE_HEADER).unwrap();
    let ln = dir.path().join("ln.csv");
    fs::write(&ln, "# max_hops=4\nsrc,dst,hops\n").unwrap();
    let report_dir = dir.path().join("out");
    let out = washtrace(&[
        "detect",
        "--traces",
        path_str(&traces),
        "--linkability",
        path_str(&ln),
        "--out-dir",
        path_str(&report_dir),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let volume = fs::read_to_string(report_dir.join("volume_summary.csv")).unwrap();
    assert_eq!(volume, "collection,legit_volume,washed_volume\n");
}

#[test]
fn detect_flags_linked_trade_and_strict_mode_does_not() {
    let dir = TempDir::new().unwrap();
    let (traces, ln) = linkability_only_fixture(dir.path());
    let default_dir = dir.path().join("default");
    let out = washtrace(&[
        "detect",
        "--traces",
        &traces,
        "--linkability",
        &ln,
        "--out-dir",
        path_str(&default_dir),
    ]);
    assert_eq!(exit_code(&out), 0);
    let flagged = fs::read_to_string(default_dir.join("apes_flagged.json")).unwrap();
    assert!(flagged.contains("\"token_id\": 7"), "flagged: {flagged}");

    let strict_dir = dir.path().join("strict");
    let out = washtrace(&[
        "detect",
        "--traces",
        &traces,
        "--linkability",
        &ln,
        "--strict-paper",
        "--out-dir",
        path_str(&strict_dir),
    ]);
    assert_eq!(exit_code(&out), 0);
    let flagged = fs::read_to_string(strict_dir.join("apes_flagged.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&flagged).unwrap();
    assert_eq!(parsed["wash_events"].as_array().unwrap().len(), 0);
}

#[test]
fn detect_rejects_threshold_beyond_construction_depth() {
    let dir = TempDir::new().unwrap();
    let (traces, ln) = linkability_only_fixture(dir.path());
    let out = washtrace(&[
        "detect",
        "--traces",
        &traces,
        "--linkability",
        &ln,
        "--max-link-hops",
        "9",
        "--out-dir",
        path_str(&dir.path().join("out")),
    ]);
    assert_eq!(exit_code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds"));
}

#[test]
fn detect_writes_dot_exports_on_request() {
    let dir = TempDir::new().unwrap();
    let (traces, ln) = linkability_only_fixture(dir.path());
    let dots = dir.path().join("dots");
    let out = washtrace(&[
        "detect",
        "--traces",
        &traces,
        "--linkability",
        &ln,
        "--out-dir",
        path_str(&dir.path().join("out")),
        "--dot-dir",
        path_str(&dots),
    ]);
    assert_eq!(exit_code(&out), 0);
    let dot = fs::read_to_string(dots.join("apes_7.dot")).unwrap();
    assert!(dot.starts_with("digraph token_7 {"));
    assert!(dot.contains("kind=link"));
    assert!(dot.contains("flagged=true"));
}

#[test]
fn detect_outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let (traces, ln) = linkability_only_fixture(dir.path());
    let run = |out: &Path| {
        let status = washtrace(&[
            "detect",
            "--traces",
            &traces,
            "--linkability",
            &ln,
            "--out-dir",
            path_str(out),
        ]);
        assert_eq!(exit_code(&status), 0);
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(out)
            .unwrap()
            .map(|entry| {
                let entry = entry.unwrap();
                (
                    entry.file_name().into_string().unwrap(),
                    fs::read(entry.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };
    let first = run(&dir.path().join("run_a"));
    let second = run(&dir.path().join("run_b"));
    assert_eq!(first, second);
    assert_eq!(first.len(), 4, "stats, histogram, flagged, volume summary");
}

#[test]
fn sweep_h_max_one_gives_one_row() {
    let dir = TempDir::new().unwrap();
    let (traces, ln) = linkability_only_fixture(dir.path());
    let out_csv = dir.path().join("sweep.csv");
    let out = washtrace(&[
        "sweep",
        "--traces",
        &traces,
        "--linkability",
        &ln,
        "--h-max",
        "1",
        "--out",
        path_str(&out_csv),
    ]);
    assert_eq!(exit_code(&out), 0);
    let content = fs::read_to_string(&out_csv).unwrap();
    assert_eq!(content.lines().count(), 2);
}

#[test]
fn sweep_beyond_construction_depth_is_data_error() {
    let dir = TempDir::new().unwrap();
    let (traces, ln) = linkability_only_fixture(dir.path());
    let out = washtrace(&[
        "sweep",
        "--traces",
        &traces,
        "--linkability",
        &ln,
        "--h-max",
        "20",
        "--out",
        path_str(&dir.path().join("sweep.csv")),
    ]);
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn synth_same_seed_writes_identical_files() {
    let dir_a = TempDir::new().unwrap();
    let dir_b = TempDir::new().unwrap();
    for dir in [&dir_a, &dir_b] {
        let out = washtrace(&["synth", "--out-dir", path_str(dir.path()), "--seed", "99"]);
        assert_eq!(exit_code(&out), 0);
    }
    for name in ["transactions.csv", "traces.csv", "owners.txt", "ground_truth.json"] {
        let a = fs::read(dir_a.path().join(name)).unwrap();
        let b = fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical seeds");
    }
}

#[test]
fn synth_without_rings_has_empty_ground_truth() {
    let dir = TempDir::new().unwrap();
    let out = washtrace(&["synth", "--out-dir", path_str(dir.path()), "--ring-count", "0"]);
    assert_eq!(exit_code(&out), 0);
    let gt: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ground_truth.json")).unwrap())
            .unwrap();
    assert_eq!(gt["wash_events"].as_array().unwrap().len(), 0);
}

#[test]
fn synth_inconsistent_config_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = washtrace(&[
        "synth",
        "--out-dir",
        path_str(dir.path()),
        "--ring-size",
        "1",
    ]);
    assert_eq!(exit_code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("inconsistent config"));
}

#[test]
fn planted_pairs_appear_at_planted_distance() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    let out = washtrace(&[
        "synth",
        "--out-dir",
        path_str(&data),
        "--seed",
        "5",
        "--ring-count",
        "1",
        "--ring-size",
        "2",
        "--trades-per-ring",
        "2",
        "--honest-trades",
        "0",
        "--background-tx",
        "100",
        "--link-path-hops",
        "3",
    ]);
    assert_eq!(exit_code(&out), 0);
    let ln_path = dir.path().join("ln.csv");
    let out = washtrace(&[
        "build-linkability",
        "--transactions",
        path_str(&data.join("transactions.csv")),
        "--owners",
        path_str(&data.join("owners.txt")),
        "--max-hops",
        "4",
        "--out",
        path_str(&ln_path),
    ]);
    assert_eq!(exit_code(&out), 0);
    let gt: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(data.join("ground_truth.json")).unwrap()).unwrap();
    let ring: Vec<String> = gt["colluding_accounts"][0]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let ln = fs::read_to_string(&ln_path).unwrap();
    let planted_edge = ln.lines().any(|line| {
        let fields: Vec<&str> = line.split(',').collect();
        fields.len() == 3
            && fields[2] == "3"
            && ring.contains(&fields[0].to_string())
            && ring.contains(&fields[1].to_string())
    });
    assert!(planted_edge, "no ring pair at hops 3 in:\n{ln}");
}
