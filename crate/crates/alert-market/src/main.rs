//! Command-line front end for the alert-market library: game simulations,
//! parameter sweeps, marketplace scenario scripts, and the authenticated
//! streaming demo.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error
//! (bad flags, unparseable input files, empty grids).

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use alert_market::attacker::{pattern_gap_upper_bound, ChainParams};
use alert_market::game::{classify_regime, optimal_price, GameParams, Regime};
use alert_market::market::{write_log, MarketConfig, MarketState};
use alert_market::net::{
    run_buyer_process, run_seller_process, run_stream_demo, DemoError, FaultMode,
};
use alert_market::script::{
    parse_grid, parse_script, render_outcome, run_script, trust_table,
};
use alert_market::sim::{
    format_sig, simulate, sweep, trace_stats, write_sweep_csv, write_trace_csv,
};
use alert_market::tokens::Tokens;
use alert_market::trust::{ThresholdMode, TrustConfig};

#[derive(Parser)]
#[command(
    name = "alert-market",
    version,
    about = "Simulate the alert-trading game, score trust, and run the marketplace"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate the two-player attack/defense game and summarize the trace.
    Simulate(SimulateArgs),
    /// Simulate every parameter set in a grid file and emit one CSV row each.
    Sweep(SweepArgs),
    /// Execute a marketplace scenario script and dump state + trust table.
    Market(MarketArgs),
    /// Stream signed alert batches over TCP with optional fault injection.
    StreamDemo(StreamDemoArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Attack probability after a quiet previous round.
    #[arg(long)]
    p: f64,
    /// Attack probability after a previous round with an attack.
    #[arg(long)]
    q: f64,
    /// Cost of an undefended hit, in tokens.
    #[arg(long)]
    alpha: f64,
    /// Cost of defending for one round, in tokens.
    #[arg(long)]
    delta: f64,
    /// Seller's disclosure cost per sold alert, in tokens.
    #[arg(long)]
    s: f64,
    /// Price both players charge: a token amount or `opt`.
    #[arg(long)]
    price: String,
    /// Override player 0's price (token amount or `opt`).
    #[arg(long)]
    price0: Option<String>,
    /// Override player 1's price (token amount or `opt`).
    #[arg(long)]
    price1: Option<String>,
    /// Number of rounds to simulate.
    #[arg(long)]
    horizon: u64,
    /// Master seed; every random draw derives from it.
    #[arg(long)]
    seed: u64,
    /// Write the round-by-round trace CSV to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Grid file: one `p q alpha delta s price0 price1` row per line.
    #[arg(long)]
    grid: PathBuf,
    /// Rounds per grid row.
    #[arg(long)]
    horizon: u64,
    /// Master seed, shared across rows (common random numbers).
    #[arg(long)]
    seed: u64,
    /// Write the sweep CSV to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MarketArgs {
    /// Scenario script file.
    #[arg(long)]
    script: PathBuf,
    /// Seed for party key derivation and endpoint sealing.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evidence threshold N used by the trust table.
    #[arg(long, default_value_t = 12)]
    threshold: u32,
    /// Write the append-only command log (JSONL) to this file.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Role {
    /// Single process: market setup, seller and buyers over loopback.
    Demo,
    /// Listen and stream to buyers started separately with the same seed.
    Seller,
    /// Connect to a seller started separately with the same seed.
    Buyer,
}

#[derive(Args)]
struct StreamDemoArgs {
    /// Fault to inject: none, fork-at-K, or bad-signature.
    #[arg(long, default_value = "none")]
    fault: String,
    /// Number of signed batches to stream.
    #[arg(long, default_value_t = 100)]
    batches: u64,
    /// Number of subscribed buyers.
    #[arg(long, default_value_t = 2)]
    buyers: usize,
    /// Master seed; keys, nonces and alert payloads derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Role::Demo)]
    role: Role,
    /// Seller role: address to listen on, e.g. 127.0.0.1:4433.
    #[arg(long)]
    listen: Option<String>,
    /// Buyer role: seller address to connect to.
    #[arg(long)]
    endpoint: Option<String>,
    /// Buyer role: which buyer identity to assume (0-based).
    #[arg(long, default_value_t = 0)]
    buyer_index: usize,
}

enum CliError {
    /// Bad flags or unusable input files — exit 2.
    Usage(String),
    /// The command itself failed — exit 1.
    Runtime(String),
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Simulate(args) => run_simulate(args),
        Cmd::Sweep(args) => run_sweep(args),
        Cmd::Market(args) => run_market(args),
        Cmd::StreamDemo(args) => run_demo(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Resolves a price flag: `opt` means the closed-form optimum in the
/// conditional regime and 0 (with a note) in the degenerate regimes, where
/// no trade happens at any price.
fn resolve_price(input: &str, base: &GameParams) -> Result<(Tokens, Option<String>), CliError> {
    if input == "opt" {
        match classify_regime(base) {
            Regime::Conditional => {
                let value = optimal_price(base).map_err(usage)?;
                Ok((Tokens::from_f64_rounded(value), None))
            }
            regime => Ok((
                Tokens::ZERO,
                Some(format!(
                    "optimal price is undefined in the {regime} regime; using 0"
                )),
            )),
        }
    } else {
        let amount = input
            .parse::<Tokens>()
            .map_err(|e| CliError::Usage(format!("price {input:?}: {e}")))?;
        Ok((amount, None))
    }
}

fn run_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut params = GameParams {
        chain: ChainParams { p: args.p, q: args.q },
        alpha: Tokens::from_f64_rounded(args.alpha),
        delta: Tokens::from_f64_rounded(args.delta),
        disclosure: Tokens::from_f64_rounded(args.s),
        prices: [Tokens::ZERO; 2],
    };
    params.validate().map_err(usage)?;
    let spec0 = args.price0.as_deref().unwrap_or(&args.price);
    let spec1 = args.price1.as_deref().unwrap_or(&args.price);
    let (price0, note0) = resolve_price(spec0, &params)?;
    let (price1, note1) = resolve_price(spec1, &params)?;
    params.prices = [price0, price1];
    params.validate().map_err(usage)?;

    // Any remaining simulate error is a parameter problem (e.g. horizon 0).
    let trace = simulate(&params, args.horizon, args.seed).map_err(usage)?;
    let stats = trace_stats(&trace);
    let regime = classify_regime(&params);

    println!(
        "params: p={} q={} alpha={} delta={} s={} price0={} price1={}",
        format_sig(args.p),
        format_sig(args.q),
        params.alpha,
        params.delta,
        params.disclosure,
        params.prices[0],
        params.prices[1]
    );
    println!("regime: {regime}");
    match optimal_price(&params) {
        Ok(value) => println!("optimal price: {}", format_sig(value)),
        Err(_) => println!("optimal price: undefined ({regime} regime)"),
    }
    let mut notes: Vec<String> = [note0, note1].into_iter().flatten().collect();
    notes.dedup();
    for note in notes {
        println!("note: {note}");
    }
    println!("horizon: {}  seed: {}", args.horizon, args.seed);
    println!(
        "purchases: player0={} player1={}",
        stats.purchases[0], stats.purchases[1]
    );
    let gap = |g: Option<f64>| g.map(format_sig).unwrap_or_else(|| "none".into());
    println!(
        "mean purchase gap: player0={} player1={}",
        gap(stats.mean_purchase_gap[0]),
        gap(stats.mean_purchase_gap[1])
    );
    if regime == Regime::Conditional {
        let bound = pattern_gap_upper_bound(&params.chain);
        let within = stats
            .mean_purchase_gap
            .iter()
            .all(|g| g.is_none_or(|g| g <= bound));
        println!(
            "purchase-gap bound: {} ({})",
            format_sig(bound),
            if within { "within bound" } else { "EXCEEDED" }
        );
    }
    println!(
        "mean round cost: player0={} player1={}",
        format_sig(stats.mean_round_cost[0]),
        format_sig(stats.mean_round_cost[1])
    );

    if let Some(path) = &args.out {
        let file = fs::File::create(path)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        let mut writer = io::BufWriter::new(file);
        write_trace_csv(&mut writer, &trace)
            .and_then(|()| writer.flush())
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
        println!("trace: {} rounds written to {}", trace.rounds.len(), path.display());
    }
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.grid)
        .map_err(|e| CliError::Usage(format!("cannot read grid {}: {e}", args.grid.display())))?;
    let grid = parse_grid(&text).map_err(usage)?;
    if grid.is_empty() {
        return Err(CliError::Usage(format!(
            "grid {} contains no rows",
            args.grid.display()
        )));
    }
    let rows = sweep(&grid, args.horizon, args.seed).map_err(runtime)?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path)
                .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
            let mut writer = io::BufWriter::new(file);
            write_sweep_csv(&mut writer, &rows, args.horizon, args.seed)
                .and_then(|()| writer.flush())
                .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
            println!("sweep: {} rows written to {}", rows.len(), path.display());
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            write_sweep_csv(&mut out, &rows, args.horizon, args.seed)
                .and_then(|()| out.flush())
                .map_err(runtime)?;
        }
    }
    Ok(())
}

fn run_market(args: MarketArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.script).map_err(|e| {
        CliError::Usage(format!("cannot read script {}: {e}", args.script.display()))
    })?;
    let steps = parse_script(&text, args.seed).map_err(usage)?;
    let mut market = MarketState::new(MarketConfig::default()).map_err(runtime)?;
    let outcomes = run_script(&mut market, &steps, args.seed).map_err(runtime)?;
    for outcome in &outcomes {
        println!("{}", render_outcome(outcome));
    }
    println!();
    println!(
        "state: parties={} adverts={} offers={} subscriptions={} deposits={}",
        market.parties.len(),
        market.adverts.len(),
        market.offers.len(),
        market.subscriptions.len(),
        market.deposits.len()
    );
    println!(
        "ledger: escrow={} forfeited={} minted={} burned={}",
        market.escrow, market.forfeited, market.minted, market.burned
    );
    market
        .check_conservation()
        .map_err(|e| CliError::Runtime(format!("conservation violated: {e}")))?;
    println!("conservation: ok");
    println!();
    let config = TrustConfig {
        threshold: ThresholdMode::Fixed(args.threshold),
        ..TrustConfig::default()
    };
    print!("{}", trust_table(&market, &config).map_err(runtime)?);
    if let Some(path) = &args.log {
        let file = fs::File::create(path)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        let mut writer = io::BufWriter::new(file);
        write_log(&mut writer, &market.log)
            .and_then(|()| writer.flush())
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
        println!();
        println!("log: {} records written to {}", market.log.len(), path.display());
    }
    Ok(())
}

fn run_demo(args: StreamDemoArgs) -> Result<(), CliError> {
    let fault: FaultMode = args.fault.parse().map_err(CliError::Usage)?;
    let role = match args.role {
        Role::Demo => "demo",
        Role::Seller => "seller",
        Role::Buyer => "buyer",
    };
    let map_err = |e: DemoError| match e {
        DemoError::Invalid(msg) => CliError::Usage(msg),
        other => CliError::Runtime(format!("stream-demo {role}: {other}")),
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match args.role {
        Role::Demo => {
            run_stream_demo(fault, args.batches, args.buyers, args.seed, &mut out)
                .map_err(map_err)?;
        }
        Role::Seller => {
            let listen = args
                .listen
                .as_deref()
                .ok_or_else(|| CliError::Usage("--role seller requires --listen".into()))?;
            run_seller_process(listen, args.seed, args.buyers, args.batches, fault, &mut out)
                .map_err(map_err)?;
        }
        Role::Buyer => {
            let endpoint = args
                .endpoint
                .as_deref()
                .ok_or_else(|| CliError::Usage("--role buyer requires --endpoint".into()))?;
            run_buyer_process(endpoint, args.seed, args.buyer_index, &mut out).map_err(map_err)?;
        }
    }
    out.flush().map_err(runtime)?;
    Ok(())
}
