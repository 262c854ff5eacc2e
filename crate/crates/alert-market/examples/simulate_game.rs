//! Run the full game simulation at the canonical parameter point, check the
//! measured purchase gap against its closed-form ceiling, and write the
//! round-by-round trace to a CSV.
//!
//! Run with: cargo run --example simulate_game

use std::fs::File;
use std::io::BufWriter;

use alert_market::attacker::{exact_mean_pattern_gap, pattern_gap_upper_bound};
use alert_market::game::{classify_regime, optimal_price, GameParams};
use alert_market::sim::{format_sig, simulate, trace_stats, write_trace_csv};
use alert_market::tokens::Tokens;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut params = GameParams::canonical();
    let price = optimal_price(&params)?;
    params.prices = [Tokens::from_f64_rounded(price); 2];
    println!(
        "regime {} at the canonical point; both players charge the optimal price {}",
        classify_regime(&params),
        format_sig(price)
    );

    let horizon = 200_000;
    let trace = simulate(&params, horizon, 7)?;
    let stats = trace_stats(&trace);

    println!("\n{horizon} rounds, seed 7:");
    println!(
        "  purchases      player0={} player1={}",
        stats.purchases[0], stats.purchases[1]
    );
    println!(
        "  defense rate   player0={} player1={}",
        format_sig(stats.defense_rate[0]),
        format_sig(stats.defense_rate[1])
    );
    println!(
        "  attack rate    player0={} player1={}",
        format_sig(stats.attack_rate[0]),
        format_sig(stats.attack_rate[1])
    );
    println!(
        "  mean cost      player0={} player1={}",
        format_sig(stats.mean_round_cost[0]),
        format_sig(stats.mean_round_cost[1])
    );

    // A purchase happens exactly when a player's own attacked-then-quiet
    // pattern completes, so the measured gap must track the chain's exact
    // pattern gap and respect the closed-form upper bound.
    let exact = exact_mean_pattern_gap(&params.chain)?;
    let bound = pattern_gap_upper_bound(&params.chain);
    for i in 0..2 {
        if let (Some(gap), Some(se)) = (stats.mean_purchase_gap[i], stats.purchase_gap_se[i]) {
            println!(
                "  purchase gap   player{i}: {} +/- {} (exact {}, bound {})",
                format_sig(gap),
                format_sig(se),
                format_sig(exact),
                format_sig(bound)
            );
            assert!(gap <= bound, "gap above the closed-form ceiling");
        }
    }

    let path = std::env::temp_dir().join("alert_market_trace.csv");
    let mut out = BufWriter::new(File::create(&path)?);
    write_trace_csv(&mut out, &trace)?;
    println!("\ntrace written to {}", path.display());
    Ok(())
}
