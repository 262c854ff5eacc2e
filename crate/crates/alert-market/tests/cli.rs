//! End-to-end checks of the command-line interface: exit codes (0 success,
//! 1 runtime failure, 2 usage error), output contracts, and byte-stable
//! deterministic transcripts.

use std::io::Write;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

const BIN: &str = env!("CARGO_BIN_EXE_alert-market");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .stdin(Stdio::null())
        .output()
        .expect("spawn CLI binary")
}

fn stdout_of(output: &Output) -> &str {
    std::str::from_utf8(&output.stdout).expect("stdout is UTF-8")
}

fn stderr_of(output: &Output) -> &str {
    std::str::from_utf8(&output.stderr).expect("stderr is UTF-8")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "exit code mismatch\nstdout:\n{}\nstderr:\n{}",
        stdout_of(output),
        stderr_of(output)
    );
}

fn write_file(path: &Path, contents: &str) {
    let mut file = std::fs::File::create(path).unwrap();
    file.write_all(contents.as_bytes()).unwrap();
}

const CANONICAL: &[&str] = &[
    "--p", "0.05", "--q", "0.6", "--alpha", "10", "--delta", "2", "--s", "0.8",
];

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[test]
fn simulate_canonical_summary() {
    let mut args = vec!["simulate"];
    args.extend_from_slice(CANONICAL);
    args.extend_from_slice(&["--price", "opt", "--horizon", "20000", "--seed", "7"]);
    let output = run(&args);
    assert_exit(&output, 0);
    let stdout = stdout_of(&output);
    assert!(stdout.contains("regime: conditional"), "{stdout}");
    assert!(stdout.contains("optimal price: 1\n"), "{stdout}");
    assert!(stdout.contains("purchase-gap bound: 232.5 (within bound)"), "{stdout}");
    let purchases = stdout
        .lines()
        .find(|l| l.starts_with("purchases:"))
        .expect("purchases line");
    assert!(!purchases.contains("player0=0"), "expected trades: {purchases}");
}

#[test]
fn simulate_writes_trace_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trace.csv");
    let mut args = vec!["simulate"];
    args.extend_from_slice(CANONICAL);
    let csv_str = csv.to_str().unwrap();
    args.extend_from_slice(&[
        "--price", "opt", "--horizon", "500", "--seed", "7", "--out", csv_str,
    ]);
    let output = run(&args);
    assert_exit(&output, 0);
    let contents = std::fs::read_to_string(&csv).unwrap();
    // Leading `#` lines pin the seed and parameters; then header and rows.
    let mut lines = contents.lines().skip_while(|l| l.starts_with('#'));
    let header = lines.next().unwrap();
    assert!(header.starts_with("round,"), "unexpected header {header}");
    assert_eq!(lines.count(), 500, "one row per simulated round");
}

#[test]
fn simulate_degenerate_regime_reports_zero_trades() {
    let output = run(&[
        "simulate", "--p", "0.05", "--q", "0.6", "--alpha", "10", "--delta", "0.4",
        "--s", "0.0", "--price", "1", "--horizon", "20000", "--seed", "3",
    ]);
    assert_exit(&output, 0);
    let stdout = stdout_of(&output);
    assert!(stdout.contains("regime: always-defend"), "{stdout}");
    assert!(stdout.contains("purchases: player0=0 player1=0"), "{stdout}");
}

#[test]
fn simulate_rejects_inverted_chain_probabilities() {
    let output = run(&[
        "simulate", "--p", "0.7", "--q", "0.6", "--alpha", "10", "--delta", "2",
        "--s", "0.8", "--price", "opt", "--horizon", "1000", "--seed", "7",
    ]);
    assert_exit(&output, 2);
    assert!(stderr_of(&output).contains("p"), "{}", stderr_of(&output));
}

#[test]
fn simulate_missing_required_flag_is_usage_error() {
    let mut args = vec!["simulate"];
    args.extend_from_slice(CANONICAL);
    args.extend_from_slice(&["--price", "opt", "--seed", "7"]); // no --horizon
    let output = run(&args);
    assert_exit(&output, 2);
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_exit(&run(&["frobnicate"]), 2);
}

#[test]
fn help_and_version_exit_zero() {
    assert_exit(&run(&["--help"]), 0);
    assert_exit(&run(&["--version"]), 0);
    assert_exit(&run(&["simulate", "--help"]), 0);
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

const THREE_REGIME_GRID: &str = "\
# p     q     alpha  delta  s     price0  price1
0.05    0.6   10     0.4    0.0   opt     opt
0.05    0.6   10     2      0.8   opt     opt
0.05    0.6   10     7      0.0   opt     opt
";

#[test]
fn sweep_covers_all_three_regimes() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.txt");
    write_file(&grid, THREE_REGIME_GRID);
    let output = run(&[
        "sweep", "--grid", grid.to_str().unwrap(), "--horizon", "20000", "--seed", "11",
    ]);
    assert_exit(&output, 0);
    let stdout = stdout_of(&output);
    let rows: Vec<&str> = stdout.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4, "header plus one row per grid line:\n{stdout}");
    assert!(rows[0].starts_with("p,q,"), "{}", rows[0]);
    // Purchases land only in the middle (conditional) row.
    let purchases: Vec<f64> = rows[1..]
        .iter()
        .map(|row| row.split(',').nth(9).unwrap().parse().unwrap())
        .collect();
    assert_eq!(purchases[0], 0.0, "always-defend row must not trade");
    assert!(purchases[1] > 0.0, "conditional row must trade");
    assert_eq!(purchases[2], 0.0, "never-defend row must not trade");
    for (row, regime) in rows[1..]
        .iter()
        .zip(["always-defend", "conditional", "never-defend"])
    {
        assert!(row.contains(regime), "row {row} should be {regime}");
    }
}

#[test]
fn sweep_output_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.txt");
    write_file(&grid, THREE_REGIME_GRID);
    let args = [
        "sweep", "--grid", grid.to_str().unwrap(), "--horizon", "5000", "--seed", "11",
    ];
    let first = run(&args);
    let second = run(&args);
    assert_exit(&first, 0);
    assert_eq!(first.stdout, second.stdout, "same seed must give identical bytes");

    // --out writes exactly the bytes that stdout would have carried.
    let out = dir.path().join("rows.csv");
    let mut with_out = args.to_vec();
    let out_str = out.to_str().unwrap();
    with_out.extend_from_slice(&["--out", out_str]);
    assert_exit(&run(&with_out), 0);
    assert_eq!(std::fs::read(&out).unwrap(), first.stdout);
}

#[test]
fn sweep_usage_errors() {
    let output = run(&["sweep", "--grid", "/no/such/grid.txt", "--horizon", "10", "--seed", "1"]);
    assert_exit(&output, 2);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    write_file(&bad, "0.05 0.6\n");
    let output = run(&["sweep", "--grid", bad.to_str().unwrap(), "--horizon", "10", "--seed", "1"]);
    assert_exit(&output, 2);
    assert!(
        stderr_of(&output).contains("grid line 1"),
        "malformed grid should name the line: {}",
        stderr_of(&output)
    );

    let empty = dir.path().join("empty.txt");
    write_file(&empty, "# nothing here\n");
    let output =
        run(&["sweep", "--grid", empty.to_str().unwrap(), "--horizon", "10", "--seed", "1"]);
    assert_exit(&output, 2);
    assert!(stderr_of(&output).contains("no rows"), "{}", stderr_of(&output));
}

// ---------------------------------------------------------------------------
// market
// ---------------------------------------------------------------------------

const HAPPY_SCRIPT: &str = "\
# two-party happy path with one expected rejection
alice register 2.0
bob register 1.0
alice mint 20
bob mint 20
alice advertise 40 0.25 ids lan scan
bob mk_offer 1 1.5 1.0
! bob rm_advert 1          # not the publisher
alice acc_offer 1 127.0.0.1:4242
bob rate 1 0.9
";

#[test]
fn market_scenario_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("scenario.txt");
    write_file(&script, HAPPY_SCRIPT);
    let output = run(&["market", "--script", script.to_str().unwrap(), "--seed", "7"]);
    assert_exit(&output, 0);
    let stdout = stdout_of(&output);
    // Applied steps print their event, expected rejections their error.
    assert!(stdout.contains(r#"{"event":"registered","party":"alice""#), "{stdout}");
    assert!(stdout.contains("rejected: bob rm_advert 1"), "{stdout}");
    // The first rating refunds the bond.
    assert!(stdout.contains(r#""refunded":1000"#), "{stdout}");
    assert!(stdout.contains("conservation: ok"), "{stdout}");
    // Trust table: alice has one positive rating on a 2-token burn.
    let alice = stdout
        .lines()
        .find(|l| l.starts_with("alice"))
        .expect("trust table row for alice");
    assert!(alice.split_whitespace().any(|c| c == "1"), "{alice}");
}

#[test]
fn market_writes_replayable_log() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("scenario.txt");
    let log = dir.path().join("commands.jsonl");
    write_file(&script, HAPPY_SCRIPT);
    let output = run(&[
        "market", "--script", script.to_str().unwrap(), "--seed", "7",
        "--log", log.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    let contents = std::fs::read_to_string(&log).unwrap();
    // 9 steps, one of them an expected rejection: 8 applied commands.
    let records: Vec<serde_json::Value> = contents
        .lines()
        .map(|line| serde_json::from_str(line).unwrap())
        .collect();
    assert_eq!(records.len(), 8);
    for (i, record) in records.iter().enumerate() {
        assert_eq!(record["seq"].as_u64(), Some(i as u64 + 1));
        assert!(record["op"].is_string(), "command fields are inlined: {record}");
        assert!(record["result"].is_object());
    }
}

#[test]
fn market_transcript_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("scenario.txt");
    write_file(&script, HAPPY_SCRIPT);
    let args = ["market", "--script", script.to_str().unwrap(), "--seed", "7"];
    let first = run(&args);
    let second = run(&args);
    assert_exit(&first, 0);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn market_unexpected_rejection_fails_with_step_number() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("broken.txt");
    write_file(&script, "alice register 2.0\nbob rm_advert 1\n");
    let output = run(&["market", "--script", script.to_str().unwrap()]);
    assert_exit(&output, 1);
    assert!(
        stderr_of(&output).contains("step 2"),
        "failure should name the step: {}",
        stderr_of(&output)
    );
}

#[test]
fn market_usage_errors() {
    assert_exit(&run(&["market", "--script", "/no/such/script.txt"]), 2);

    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("typo.txt");
    write_file(&script, "alice register 2.0\nalice summon_demon 4\n");
    let output = run(&["market", "--script", script.to_str().unwrap()]);
    assert_exit(&output, 2);
    assert!(stderr_of(&output).contains("step 2"), "{}", stderr_of(&output));
}

// ---------------------------------------------------------------------------
// stream-demo
// ---------------------------------------------------------------------------

#[test]
fn stream_demo_honest_run_reclaims_deposit() {
    let output = run(&["stream-demo", "--fault", "none", "--batches", "12", "--seed", "0"]);
    assert_exit(&output, 0);
    let stdout = stdout_of(&output);
    assert!(stdout.contains("accepted 12/12 batches"), "{stdout}");
    assert!(stdout.contains("-> buyer1 agrees"), "{stdout}");
    assert!(stdout.contains("deposit 9 reclaimed by seller"), "{stdout}");
    assert!(stdout.contains("conservation: ok"), "{stdout}");
}

#[test]
fn stream_demo_fork_is_proven_and_slashed() {
    let args = ["stream-demo", "--fault", "fork-at-10", "--batches", "20", "--seed", "0"];
    let output = run(&args);
    assert_exit(&output, 0);
    let stdout = stdout_of(&output);
    assert!(stdout.contains("index 10 -> buyer1 proves equivocation"), "{stdout}");
    assert!(stdout.contains("split 2:1; buyer0 +6, buyer1 +3"), "{stdout}");
    assert!(stdout.contains("conservation: ok"), "{stdout}");
    // Deterministic transcript: same seed, same bytes.
    assert_eq!(run(&args).stdout, output.stdout);
}

#[test]
fn stream_demo_bad_signature_is_rejected_by_one_buyer() {
    let output =
        run(&["stream-demo", "--fault", "bad-signature", "--batches", "8", "--seed", "3"]);
    assert_exit(&output, 0);
    let stdout = stdout_of(&output);
    assert!(stdout.contains("accepted 7/8 batches; rejected index 7 (bad signature)"), "{stdout}");
    assert!(stdout.contains("buyer1 accepted 8/8"), "{stdout}");
}

#[test]
fn stream_demo_usage_errors() {
    let output = run(&["stream-demo", "--fault", "gibberish"]);
    assert_exit(&output, 2);
    assert!(stderr_of(&output).contains("fault"), "{}", stderr_of(&output));

    let output = run(&["stream-demo", "--role", "seller"]);
    assert_exit(&output, 2);
    assert!(stderr_of(&output).contains("--listen"), "{}", stderr_of(&output));

    let output = run(&["stream-demo", "--role", "buyer"]);
    assert_exit(&output, 2);
    assert!(stderr_of(&output).contains("--endpoint"), "{}", stderr_of(&output));
}

/// Seller and buyer as two separate OS processes talking over loopback.
#[test]
fn stream_demo_two_processes_interoperate() {
    // Reserve a port, then free it for the seller process.
    let port = {
        let probe = TcpListener::bind("127.0.0.1:0").unwrap();
        probe.local_addr().unwrap().port()
    };
    let addr = format!("127.0.0.1:{port}");
    let seller = Command::new(BIN)
        .args([
            "stream-demo", "--role", "seller", "--listen", &addr, "--seed", "5",
            "--buyers", "1", "--batches", "6", "--fault", "none",
        ])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();

    // Retry the buyer until the seller is listening. A plain TCP probe
    // would be accepted by the seller and abort its handshake, so the
    // retried connection is always the real buyer.
    let mut buyer = None;
    for _ in 0..100 {
        let attempt = run(&[
            "stream-demo", "--role", "buyer", "--endpoint", &addr, "--seed", "5",
            "--buyer-index", "0", "--batches", "6",
        ]);
        if attempt.status.code() == Some(0) {
            buyer = Some(attempt);
            break;
        }
        if !stderr_of(&attempt).contains("refused") {
            panic!("buyer failed for a non-connection reason: {}", stderr_of(&attempt));
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    let buyer = buyer.expect("buyer never reached the seller");

    let seller_output = seller.wait_with_output().unwrap();
    assert_eq!(
        seller_output.status.code(),
        Some(0),
        "seller: {}",
        String::from_utf8_lossy(&seller_output.stderr)
    );
    let seller_stdout = String::from_utf8_lossy(&seller_output.stdout);
    assert!(seller_stdout.contains("buyer0 subscription 1 accepted"), "{seller_stdout}");
    assert!(seller_stdout.contains("stream complete"), "{seller_stdout}");
    assert!(
        stdout_of(&buyer).contains("accepted 6 batches, chain verified"),
        "buyer transcript:\n{}",
        stdout_of(&buyer)
    );
}
