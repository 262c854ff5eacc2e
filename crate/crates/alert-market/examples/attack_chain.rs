//! Tour of the four-state attack chain: transition structure, closed-form
//! run-length expectations checked against Monte Carlo, and the gap between
//! completions of the attacked-then-quiet pattern that makes alerts worth
//! buying.
//!
//! Run with: cargo run --example attack_chain

use alert_market::attacker::{
    exact_mean_pattern_gap, exact_run_expectations, pattern_gap_upper_bound, pattern_statistics,
    sample_run_lengths, stationary_distribution, transition_matrix, truce_run_upper_bound,
    ChainParams,
};
use alert_market::sim::format_sig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = ChainParams { p: 0.05, q: 0.6 };
    println!("chain: p = {} (after quiet), q = {} (after attack)\n", params.p, params.q);

    // Rows and columns are the joint states (-,-), (a,-), (-,a), (a,a).
    println!("transition matrix:");
    let labels = ["(-,-)", "(a,-)", "(-,a)", "(a,a)"];
    for (label, row) in labels.iter().zip(transition_matrix(&params)) {
        let cells: Vec<String> = row.iter().map(|&x| format!("{x:>7.4}")).collect();
        println!("  {label}  {}", cells.join(" "));
    }

    let pi = stationary_distribution(&params)?;
    let cells: Vec<String> = pi.iter().map(|&x| format!("{x:>7.4}")).collect();
    println!("stationary:  {}\n", cells.join(" "));

    // Closed forms vs simulation.
    let exact = exact_run_expectations(&params)?;
    let mc = sample_run_lengths(&params, 20_000, 100_000, 42)?;
    println!("initial attack run:");
    println!("  exact  q/(1-q)      = {}", format_sig(exact.mean_attack_run));
    println!(
        "  sampled (20k trials) = {} +/- {}",
        format_sig(mc.mean_attack_run),
        format_sig(mc.attack_run_se)
    );
    println!("truce length:");
    println!("  exact (numeric)      = {}", format_sig(exact.mean_truce_run));
    println!(
        "  sampled (20k trials) = {} +/- {}",
        format_sig(mc.mean_truce_run),
        format_sig(mc.truce_run_se)
    );
    println!(
        "  upper bound q(1-p)/p^2 + 1 = {}\n",
        format_sig(truce_run_upper_bound(&params))
    );

    // The pattern that triggers a purchase: attacked at n, quiet at n+1.
    let stats = pattern_statistics(&params, 20_000, 50, 42)?;
    println!("attacked-then-quiet pattern gap (player 0):");
    println!("  exact mean           = {}", format_sig(exact_mean_pattern_gap(&params)?));
    if let (Some(mean), Some(se)) = (stats.mean_pattern_gap, stats.pattern_gap_se) {
        println!(
            "  sampled ({} gaps)  = {} +/- {}",
            stats.gap_count,
            format_sig(mean),
            format_sig(se)
        );
    }
    println!("  upper bound          = {}", format_sig(pattern_gap_upper_bound(&params)));
    Ok(())
}
