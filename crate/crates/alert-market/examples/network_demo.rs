//! The whole system in one process: a marketplace with a posted stream
//! deposit, TCP streaming to two subscribed buyers, a fork injected halfway,
//! the cross-buyer challenge, and the adjudication that splits the deposit.
//!
//! Run with: cargo run --example network_demo

use std::io;

use alert_market::net::{run_stream_demo, FaultMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stdout = io::stdout();

    println!("--- honest stream ---");
    let report = run_stream_demo(FaultMode::None, 20, 2, 1, &mut stdout.lock())?;
    assert_eq!(report.accepted, vec![20, 20]);
    assert!(report.deposit_reclaimed);

    println!("\n--- fork at batch 10 ---");
    let report = run_stream_demo(FaultMode::ForkAt(10), 20, 2, 1, &mut stdout.lock())?;
    assert_eq!(report.equivocation_index, Some(10));
    let (c, p) = (
        report.challenger_share.expect("challenger paid"),
        report.prover_share.expect("prover paid"),
    );
    println!("\nthe 9-token deposit moved: challenger {c}, prover {p}");
    Ok(())
}
