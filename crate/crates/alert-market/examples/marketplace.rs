//! Drive the marketplace state machine directly: registration with proof of
//! burn, the advert/offer/subscription lifecycle, ratings, the slashable
//! stream deposit, and log replay at the end.
//!
//! Run with: cargo run --example marketplace

use alert_market::crypto::KeyPair;
use alert_market::market::{replay, Command, Event, MarketConfig, MarketState};
use alert_market::market::AdvertTags;
use alert_market::tokens::Tokens;
use alert_market::trust::TrustConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = MarketConfig {
        reclaim_delay: 3, // short cooling-off period so the example can show a reclaim
        ..MarketConfig::default()
    };
    let mut market = MarketState::new(config.clone())?;
    let tok = Tokens::from_whole;

    let alice = KeyPair::from_seed(b"alice");
    let bob = KeyPair::from_seed(b"bob");

    // Registration burns the payment; one token of burn buys a 0.5 prior.
    market.apply("alice", Command::Register { payment: tok(1), keys: alice.public() })?;
    market.apply("bob", Command::Register { payment: tok(1), keys: bob.public() })?;
    market.apply("alice", Command::Mint { amount: tok(9) })?;
    market.apply("bob", Command::Mint { amount: tok(5) })?;

    // Alice publishes a stream and backs it with a slashable deposit.
    market.apply(
        "alice",
        Command::Advertise {
            tags: AdvertTags {
                throughput_per_hour: 10.0,
                price_per_alert: tok(1),
                detector: "IDS".into(),
                network: "industrial".into(),
                attack_types: vec!["DDoS".into(), "botnet".into()],
            },
        },
    )?;
    market.apply("alice", Command::PostDeposit { advert: 1, amount: tok(9) })?;

    // Bob escrows fee + rating bond; Alice accepts with a sealed endpoint.
    market.apply("bob", Command::MkOffer { advert: 1, fee: tok(1), deposit: tok(1) })?;
    let sealed = "ZmFrZS1zZWFsZWQtYm94"; // carried opaquely by the market
    let event = market.apply(
        "alice",
        Command::AccOffer { offer: 1, sealed_endpoint: sealed.into() },
    )?;
    println!("subscription: {}", serde_json::to_string(&event)?);

    // Rating the stream refunds Bob's bond and feeds Alice's trust score.
    let event = market.apply("bob", Command::Rate { subscription: 1, rating: 1.0 })?;
    println!("rating:       {}", serde_json::to_string(&event)?);

    // Unauthorized commands are rejected without touching state.
    let seq_before = market.seq;
    let err = market
        .apply("bob", Command::RmAdvert { advert: 1 })
        .unwrap_err();
    println!("rejected:     {err}");
    assert_eq!(market.seq, seq_before, "rejections do not advance the clock");

    // Stream winds down: takedown starts the cooling-off clock, and after
    // `reclaim_delay` further applied commands the deposit comes back.
    market.apply("alice", Command::Takedown { deposit: 1 })?;
    market.apply("alice", Command::Mint { amount: Tokens::from_milli(1) })?;
    market.apply("alice", Command::Mint { amount: Tokens::from_milli(1) })?;
    let event = market.apply("alice", Command::Reclaim { deposit: 1 })?;
    if let Event::Reclaimed { amount, .. } = &event {
        println!("reclaimed:    {amount} tokens");
    }

    // The ledger balances to the milli-token ...
    market.check_conservation()?;
    println!(
        "ledger ok:    escrow={} forfeited={} minted={} burned={}",
        market.escrow, market.forfeited, market.minted, market.burned
    );

    // ... the trust table reflects the one positive rating ...
    let trust = market.trust_of("alice", &TrustConfig::default())?;
    println!(
        "alice trust:  estimate={} certainty={:.4} expectation={:.4}",
        trust.point_estimate, trust.certainty, trust.expectation
    );

    // ... and replaying the log reproduces the state exactly.
    let replayed = replay(config, &market.log)?;
    assert_eq!(replayed.seq, market.seq);
    assert_eq!(replayed.escrow, market.escrow);
    println!("replay ok:    {} log records", market.log.len());
    Ok(())
}
