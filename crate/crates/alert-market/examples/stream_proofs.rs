//! Signed alert batches on a hash chain: honest production and verification,
//! then an equivocating producer who forks the chain and the two-consumer
//! challenge that pins it with a transferable proof.
//!
//! Run with: cargo run --example stream_proofs

use alert_market::crypto::KeyPair;
use alert_market::stream::{Alert, StreamConsumer, StreamProducer, VerifyOutcome};

fn alert(i: u64, note: &str) -> Alert {
    Alert {
        time: 1_700_000_000 + i,
        source: format!("10.0.0.{}", i % 250),
        target: "192.168.1.5".into(),
        classification: "portscan".into(),
        assessment: note.into(),
        external: None,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let keys = KeyPair::from_seed(b"stream example");
    let mut producer = StreamProducer::new(keys.clone());
    let mut consumer = StreamConsumer::new(keys.verify_key());

    // Honest streaming: every batch extends the chain and verifies.
    for i in 0..5 {
        let batch = producer.produce_batch(vec![alert(i, "severity: high")])?;
        assert_eq!(consumer.verify_batch(&batch), VerifyOutcome::Ok);
    }
    println!("honest: consumer accepted {} batches", consumer.accepted());

    // The signature covers (index, chain hash), so corrupting it is caught
    // first; tampering with the alert content instead makes the recomputed
    // chain hash disagree. Either way the consumer stays where it was and
    // still accepts the honest copy.
    let honest = producer.produce_batch(vec![alert(5, "severity: high")])?;
    let mut bad_sig = honest.clone();
    bad_sig.signature.0[0] ^= 1;
    assert_eq!(consumer.verify_batch(&bad_sig), VerifyOutcome::BadSignature);
    let mut tampered = honest.clone();
    tampered.alerts[0].assessment = "severity: none, ignore".into();
    assert!(matches!(
        consumer.verify_batch(&tampered),
        VerifyOutcome::ChainMismatch { .. }
    ));
    println!("tamper:  rejected twice, consumer still at {}", consumer.accepted());
    assert_eq!(consumer.verify_batch(&honest), VerifyOutcome::Ok);

    // Equivocation: the producer forks at index 6 and feeds a second
    // consumer a divergent history. Each fork is internally consistent, so
    // both consumers keep accepting — neither can tell alone.
    let mut fork = producer.clone();
    let mut other = consumer.clone();
    for i in 6..9 {
        let real = producer.produce_batch(vec![alert(i, "severity: high")])?;
        let fake = fork.produce_batch(vec![alert(i, "severity: low (revised)")])?;
        assert_eq!(consumer.verify_batch(&real), VerifyOutcome::Ok);
        assert_eq!(other.verify_batch(&fake), VerifyOutcome::Ok);
    }
    println!("fork:    both consumers at {} batches, none the wiser", consumer.accepted());

    // Comparing chain heads exposes it: one consumer challenges, the other
    // answers with both signatures over index 7 — different hashes, same
    // index, same key. That pair is the proof.
    let challenge = consumer.make_challenge("first-subscriber".into(), 7)?;
    let proof = other
        .respond_to_challenge(&challenge)?
        .expect("the fork diverges at index 7");
    assert!(proof.verify(&keys.verify_key()));
    assert_ne!(proof.first.0, proof.second.0);
    println!("proof:   index {} signed twice with different chain hashes", proof.index);

    // A challenge at a pre-fork index proves nothing.
    let agree = other.respond_to_challenge(&consumer.make_challenge("first-subscriber".into(), 3)?)?;
    assert!(agree.is_none());
    println!("agree:   index 3 identical on both chains, no proof");
    Ok(())
}
