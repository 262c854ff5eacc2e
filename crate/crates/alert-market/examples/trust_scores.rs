//! The trust engine piece by piece: burning tokens buys a prior, ratings
//! accumulate into evidence, certainty fades the prior out, and a
//! confidence-interval rule picks the evidence threshold.
//!
//! Run with: cargo run --example trust_scores

use alert_market::sim::format_sig;
use alert_market::tokens::Tokens;
use alert_market::trust::{
    certainty, evidence_threshold, pob_prior, pob_prior_alt, score, Evidence, ThresholdMode,
    TrustConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let baseline = Tokens::from_whole(1);

    // Proof of burn: destroying more tokens buys a higher starting prior,
    // with quickly diminishing returns. The alternative curve saturates much
    // faster; the two cross exactly at the baseline burn.
    println!("burn amount -> prior (log curve / fast-saturating curve):");
    for milli in [0, 500, 1_000, 5_000, 20_000] {
        let burned = Tokens::from_milli(milli);
        println!(
            "  {:>6} tokens  {}  /  {}",
            burned.to_string(),
            format_sig(pob_prior(burned, baseline)?),
            format_sig(pob_prior_alt(burned, baseline)?)
        );
    }

    // How many ratings until the prior stops mattering? Derived from a
    // confidence-interval requirement: with significance 0.2 the CI of the
    // point estimate must be no longer than 0.2. The answer depends on the
    // observed positive fraction t — worst case is t = 0.5.
    println!("\nevidence threshold from the CI rule (z=0.2, c=0.8):");
    for t in [0.0, 0.5, 1.0] {
        println!("  t = {t:<4} N = {}", evidence_threshold(0.2, 0.8, t)?);
    }

    // Certainty climbs from 0 (no evidence) to 1 (threshold reached).
    println!("\ncertainty with N = 40, w = 1:");
    for n in [0u64, 5, 14, 30, 40, 60] {
        println!("  {n:>2} ratings -> {}", format_sig(certainty(n, 40, 1.0)));
    }

    // Putting it together: a seller who burned the baseline and earns mostly
    // positive ratings. Expectation starts at the prior 0.5 and converges to
    // the observed positive fraction.
    let config = TrustConfig {
        threshold: ThresholdMode::ConfidenceInterval { significance: 0.2, certainty_level: 0.8 },
        ..TrustConfig::default()
    };
    println!("\nscore trajectory (burned baseline, 3 positives per negative):");
    let mut evidence = Evidence::EMPTY;
    for round in 0..=5 {
        let s = score(&evidence, baseline, &config)?;
        println!(
            "  {:>2}+/{:>2}-  estimate {}  certainty {}  expectation {}",
            evidence.positive,
            evidence.negative,
            format_sig(s.point_estimate),
            format_sig(s.certainty),
            format_sig(s.expectation)
        );
        for _ in 0..3 {
            evidence.record(true);
        }
        evidence.record(false);
        let _ = round;
    }
    Ok(())
}
