//! The economics of one round: how the defense cost delta moves the game
//! between its three regimes, what an alert is worth to a buyer, and the
//! revenue-maximizing price a seller should charge.
//!
//! Run with: cargo run --example game_costs

use alert_market::attacker::{AttackState, ChainParams};
use alert_market::game::{
    classify_regime, instant_cost, price_bound_checks, optimal_price, purchase_threshold, GameParams,
    Regime,
};
use alert_market::sim::format_sig;
use alert_market::tokens::Tokens;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = GameParams {
        chain: ChainParams { p: 0.05, q: 0.6 },
        alpha: Tokens::from_whole(10),
        delta: Tokens::from_whole(2),
        disclosure: Tokens::from_milli(200),
        prices: [Tokens::from_whole(1); 2],
    };

    // Sweep delta across the regime boundaries p*alpha = 0.5 and q*alpha = 6.
    println!("regime as delta varies (alpha = {}):", base.alpha);
    for delta_milli in [200, 500, 2_000, 5_999, 6_000, 8_000] {
        let params = GameParams { delta: Tokens::from_milli(delta_milli), ..base };
        println!("  delta = {:<5}  ->  {}", params.delta.to_string(), classify_regime(&params));
    }
    println!();

    // In the conditional regime an alert about the opponent's last round is
    // worth paying for, but only up to a threshold.
    let params = base;
    assert_eq!(classify_regime(&params), Regime::Conditional);
    println!("purchase threshold: {}", format_sig(purchase_threshold(&params)));
    println!("optimal price:      {}", format_sig(optimal_price(&params)?));
    let checks = price_bound_checks(&params, 0)?;
    println!("buy-decision equivalences (buyer 0, cost comparison vs price bound):");
    println!("  vs never defending: {}", checks.vs_no_defense.agrees());
    println!("  vs blind defense:   {}", checks.vs_defense.agrees());
    println!("  vs best response:   {}", checks.vs_best_response.agrees());
    println!();

    // A concrete round: player 1 attacked last round, player 0 buys that
    // alert and defends, so the incoming attack costs only the defense fee.
    let prev = AttackState::new(false, true);
    let costs = instant_cost(
        prev,
        [true, false],                 // player 0 buys
        [true, false],                 // player 0 defends
        AttackState::new(true, true),  // both attacked this round
        &params,
    );
    for (i, c) in costs.iter().enumerate() {
        println!(
            "player {i}: sell {} + buy {} + defense {} = {}",
            c.sell,
            c.buy,
            c.defense,
            c.total()
        );
    }
    Ok(())
}
