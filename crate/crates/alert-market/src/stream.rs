//! Authenticated alert streaming with non-equivocation.
//!
//! A producer publishes alerts in numbered batches. Every batch carries a
//! chain hash — the digest of the canonical encoding of all payloads up to
//! and including this one — and the producer's signature over
//! `(index, chain_hash)`. A consumer accepts a batch only if the signature
//! is valid, the index is the one it expects next, and the chain hash
//! recomputed from its own history matches.
//!
//! Because the signature covers the chain hash, a producer that ever shows
//! two different histories for the same batch index has signed two distinct
//! `(index, hash)` pairs. Any pair of consumers can detect this by
//! exchanging a [`Challenge`] for an index they both hold; the response is
//! an [`EquivocationProof`] — two valid producer signatures on conflicting
//! chain hashes — which is self-contained, verifiable by anyone with the
//! producer's public key, and impossible to forge without it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{verify, CanonicalWriter, KeyBytes, KeyPair, SigBytes};
use crate::PartyId;

/// Domain-separation context for batch signatures. Signing `(index, hash)`
/// under this label cannot collide with any other signed message in the
/// system.
const BATCH_CONTEXT: &str = "alert-batch-v1";

/// One detection event: when, who, whom, what, how bad. The `external`
/// field carries an externally formatted payload (say, a STIX JSON blob)
/// opaquely; it is hashed and signed but never interpreted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    /// Creation/sending time (seconds, producer's clock).
    pub time: u64,
    /// Origin of the attack.
    pub source: String,
    /// Target of the attack.
    pub target: String,
    /// Attack name and/or CVE identifier.
    pub classification: String,
    /// Severity, potential impact, or similar free-form assessment.
    pub assessment: String,
    /// Opaque pass-through payload in an external format.
    pub external: Option<String>,
}

impl Alert {
    /// Canonical encoding used for chain hashing (injective: every field is
    /// fixed-size or length-prefixed).
    pub fn canonical_bytes(&self) -> Vec<u8> {
        CanonicalWriter::new()
            .u64(self.time)
            .text(&self.source)
            .text(&self.target)
            .text(&self.classification)
            .text(&self.assessment)
            .opt_text(self.external.as_deref())
            .finish()
    }
}

/// Digest of an alert-batch history prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainHash(pub [u8; 32]);

/// Extends a chain hash with one batch payload. The previous hash (absent
/// for the first batch) is folded in ahead of the alert count and the
/// alerts' canonical encodings.
pub fn chain_extend(prev: Option<&ChainHash>, alerts: &[Alert]) -> ChainHash {
    let mut writer = CanonicalWriter::new();
    match prev {
        Some(hash) => writer = writer.u8(1).raw(&hash.0),
        None => writer = writer.u8(0),
    }
    writer = writer.u32(alerts.len() as u32);
    for alert in alerts {
        writer = writer.bytes(&alert.canonical_bytes());
    }
    ChainHash(writer.sha256())
}

/// The exact bytes a producer signs for batch `index` ending in `hash`.
pub fn batch_signing_bytes(index: u64, hash: &ChainHash) -> Vec<u8> {
    CanonicalWriter::new()
        .text(BATCH_CONTEXT)
        .u64(index)
        .raw(&hash.0)
        .finish()
}

/// A batch as it travels from producer to consumer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedBatch {
    /// Sequence number, starting at 0.
    pub index: u64,
    pub alerts: Vec<Alert>,
    /// Digest of the whole history up to and including this batch.
    pub chain_hash: ChainHash,
    /// Producer's signature over `(index, chain_hash)`.
    pub signature: SigBytes,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StreamError {
    #[error("stream is closed")]
    Closed,
    #[error("no verified batch held at index {index}")]
    MissingIndex { index: u64 },
    #[error("challenge signature is invalid")]
    BadChallenge,
}

/// Producer state: signing identity plus the running chain.
///
/// `Clone` is deliberate: a cloned producer that keeps publishing creates a
/// fork of the stream, which is exactly what the equivocation machinery
/// exists to catch. Tests and the demo use clones as misbehaving producers.
#[derive(Debug, Clone)]
pub struct StreamProducer {
    keys: KeyPair,
    next_index: u64,
    last_hash: Option<ChainHash>,
    active: bool,
}

impl StreamProducer {
    pub fn new(keys: KeyPair) -> Self {
        StreamProducer {
            keys,
            next_index: 0,
            last_hash: None,
            active: true,
        }
    }

    pub fn verify_key(&self) -> KeyBytes {
        self.keys.verify_key()
    }

    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    /// Extends the chain with `alerts` and signs the new head.
    pub fn produce_batch(&mut self, alerts: Vec<Alert>) -> Result<SignedBatch, StreamError> {
        if !self.active {
            return Err(StreamError::Closed);
        }
        let index = self.next_index;
        let chain_hash = chain_extend(self.last_hash.as_ref(), &alerts);
        let signature = self.keys.sign(&batch_signing_bytes(index, &chain_hash));
        self.next_index += 1;
        self.last_hash = Some(chain_hash);
        Ok(SignedBatch {
            index,
            alerts,
            chain_hash,
            signature,
        })
    }

    /// Stops the stream; further `produce_batch` calls fail.
    pub fn close(&mut self) {
        self.active = false;
    }
}

/// Why a batch was rejected (or that it was accepted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyOutcome {
    /// Batch accepted and appended to the consumer's view of the chain.
    Ok,
    /// Signature was valid but the batch does not extend this consumer's
    /// chain: out-of-order index or conflicting history.
    ChainMismatch { detail: String },
    /// Signature failed; the batch proves nothing and is ignored.
    BadSignature,
}

/// Consumer state: the producer's key, the expected next position, and the
/// `(hash, signature)` pairs retained for challenges.
#[derive(Debug, Clone)]
pub struct StreamConsumer {
    producer_verify: KeyBytes,
    next_index: u64,
    last_hash: Option<ChainHash>,
    held: BTreeMap<u64, (ChainHash, SigBytes)>,
}

impl StreamConsumer {
    pub fn new(producer_verify: KeyBytes) -> Self {
        StreamConsumer {
            producer_verify,
            next_index: 0,
            last_hash: None,
            held: BTreeMap::new(),
        }
    }

    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    /// Number of batches accepted so far.
    pub fn accepted(&self) -> u64 {
        self.next_index
    }

    /// Checks a batch. The consumer's state advances only on [`VerifyOutcome::Ok`];
    /// a rejected batch leaves it unchanged, so a correct retransmission can
    /// still be accepted later.
    pub fn verify_batch(&mut self, batch: &SignedBatch) -> VerifyOutcome {
        let signed = batch_signing_bytes(batch.index, &batch.chain_hash);
        if !verify(&self.producer_verify, &signed, &batch.signature) {
            return VerifyOutcome::BadSignature;
        }
        if batch.index != self.next_index {
            return VerifyOutcome::ChainMismatch {
                detail: format!("expected batch index {}, got {}", self.next_index, batch.index),
            };
        }
        let recomputed = chain_extend(self.last_hash.as_ref(), &batch.alerts);
        if recomputed != batch.chain_hash {
            return VerifyOutcome::ChainMismatch {
                detail: format!(
                    "chain hash mismatch at index {}: payload does not extend this history",
                    batch.index
                ),
            };
        }
        self.held.insert(batch.index, (batch.chain_hash, batch.signature));
        self.next_index = batch.index + 1;
        self.last_hash = Some(batch.chain_hash);
        VerifyOutcome::Ok
    }

    /// The chain head this consumer has accepted, if any.
    pub fn head(&self) -> Option<(u64, ChainHash)> {
        self.last_hash.map(|h| (self.next_index - 1, h))
    }

    /// Builds a challenge asking another consumer to confirm batch `index`.
    pub fn make_challenge(&self, challenger: PartyId, index: u64) -> Result<Challenge, StreamError> {
        let (chain_hash, signature) = self
            .held
            .get(&index)
            .copied()
            .ok_or(StreamError::MissingIndex { index })?;
        Ok(Challenge {
            challenger,
            index,
            chain_hash,
            signature,
        })
    }

    /// Answers a challenge. If this consumer holds the same index with a
    /// different chain hash — and both sides carry valid producer
    /// signatures — the producer has equivocated and the proof is returned.
    pub fn respond_to_challenge(
        &self,
        challenge: &Challenge,
    ) -> Result<Option<EquivocationProof>, StreamError> {
        let signed = batch_signing_bytes(challenge.index, &challenge.chain_hash);
        if !verify(&self.producer_verify, &signed, &challenge.signature) {
            return Err(StreamError::BadChallenge);
        }
        let Some((own_hash, own_sig)) = self.held.get(&challenge.index) else {
            return Ok(None);
        };
        if *own_hash == challenge.chain_hash {
            return Ok(None);
        }
        Ok(Some(EquivocationProof {
            index: challenge.index,
            first: (challenge.chain_hash, challenge.signature),
            second: (*own_hash, *own_sig),
        }))
    }
}

/// "Here is the `(index, hash, signature)` I accepted — do you agree?"
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge {
    pub challenger: PartyId,
    pub index: u64,
    pub chain_hash: ChainHash,
    /// Producer's signature as seen by the challenger.
    pub signature: SigBytes,
}

impl Challenge {
    /// True if the producer really signed the claimed `(index, hash)`.
    pub fn verify(&self, producer_verify: &KeyBytes) -> bool {
        let signed = batch_signing_bytes(self.index, &self.chain_hash);
        verify(producer_verify, &signed, &self.signature)
    }
}

/// Two valid producer signatures on different chain hashes for one index.
/// Anyone holding the producer's public key can check it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivocationProof {
    pub index: u64,
    pub first: (ChainHash, SigBytes),
    pub second: (ChainHash, SigBytes),
}

impl EquivocationProof {
    pub fn verify(&self, producer_verify: &KeyBytes) -> bool {
        if self.first.0 == self.second.0 {
            return false;
        }
        let first_ok = verify(
            producer_verify,
            &batch_signing_bytes(self.index, &self.first.0),
            &self.first.1,
        );
        let second_ok = verify(
            producer_verify,
            &batch_signing_bytes(self.index, &self.second.0),
            &self.second.1,
        );
        first_ok && second_ok
    }
}
