//! Networked alert streaming over TCP: wire framing, the subscription
//! handshake, and a fault-injection demo harness.
//!
//! Wire format: every message is a 4-byte big-endian length prefix followed
//! by a JSON body whose `kind` field names the message type. Binary fields
//! travel base64-encoded, so captures stay debuggable with standard tools.
//!
//! Handshake: the buyer opens the sealed endpoint published in the
//! marketplace, connects, and names its subscription (`HELLO`). The seller
//! answers with a fresh 32-byte nonce; the buyer returns an Ed25519
//! signature over the raw nonce bytes; the seller verifies it against the
//! subscriber key registered in the marketplace and either accepts and
//! starts streaming or rejects and drops. A signature replayed from an
//! earlier connection fails because each connection gets its own nonce. At
//! most one live session per subscription is allowed.
//!
//! The demo harness wires everything together in one process: a market with
//! a posted stream deposit, a seller thread streaming signed batches to
//! concurrent buyer sessions over loopback, optional fault injection
//! (forked chain or corrupted signature), a cross-buyer challenge exchanged
//! over its own socket, and — when the challenge yields an equivocation
//! proof — on-market adjudication that splits the deposit. Every byte of
//! the transcript is deterministic given the seed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{seal, verify, CryptoError, KeyBytes, KeyPair, NonceBytes};
use crate::market::{AdvertTags, Command, Event, MarketConfig, MarketError, MarketState};
use crate::seed::{derive_rng, derive_seed_bytes};
use crate::stream::{
    Alert, Challenge as StreamChallenge, EquivocationProof, SignedBatch, StreamConsumer,
    StreamError, StreamProducer, VerifyOutcome,
};
use crate::tokens::Tokens;
use crate::PartyId;

/// Nonce length for the handshake (raw bytes; the buyer signs them as-is).
pub const NONCE_LEN: usize = 32;

/// Upper bound on a single frame body, applied on both send and receive.
pub const MAX_FRAME: u32 = 1 << 20;

const IO_TIMEOUT: Duration = Duration::from_secs(30);

/// Everything that crosses the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    /// Buyer names the subscription it wants to stream.
    Hello { subscription: u64, buyer: PartyId },
    /// Seller's fresh random nonce for this connection.
    Nonce { nonce: NonceBytes },
    /// Buyer's signature over the raw nonce bytes.
    NonceSig { signature: crate::crypto::SigBytes },
    /// Handshake accepted; batches follow.
    Accept,
    /// Handshake or request refused.
    Reject { reason: String },
    /// One signed alert batch.
    Batch { batch: SignedBatch },
    /// Cross-consumer chain-head comparison request.
    Challenge { challenge: StreamChallenge },
    /// Positive answer to a challenge: proof of equivocation.
    Proof { proof: EquivocationProof },
}

fn kind_name(message: &Message) -> &'static str {
    match message {
        Message::Hello { .. } => "HELLO",
        Message::Nonce { .. } => "NONCE",
        Message::NonceSig { .. } => "NONCE_SIG",
        Message::Accept => "ACCEPT",
        Message::Reject { .. } => "REJECT",
        Message::Batch { .. } => "BATCH",
        Message::Challenge { .. } => "CHALLENGE",
        Message::Proof { .. } => "PROOF",
    }
}

/// Transport and protocol failures.
#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("message encoding: {0}")]
    Codec(#[from] serde_json::Error),
    #[error("frame of {len} bytes exceeds the {MAX_FRAME}-byte limit")]
    FrameTooLarge { len: usize },
    #[error("expected {expected}, got {got}")]
    Protocol { expected: &'static str, got: &'static str },
    #[error("peer rejected: {reason}")]
    Rejected { reason: String },
    #[error("handshake failed: {reason}")]
    HandshakeFailed { reason: String },
    #[error("sealed endpoint unusable: {detail}")]
    BadEndpoint { detail: String },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Writes one length-prefixed message and flushes.
pub fn write_message(w: &mut impl Write, message: &Message) -> Result<(), NetError> {
    let body = serde_json::to_vec(message)?;
    if body.len() > MAX_FRAME as usize {
        return Err(NetError::FrameTooLarge { len: body.len() });
    }
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(&body)?;
    w.flush()?;
    Ok(())
}

/// Reads one message; `None` on a clean end-of-stream (EOF exactly at a
/// frame boundary). EOF inside a frame is an error.
pub fn try_read_message(r: &mut impl Read) -> Result<Option<Message>, NetError> {
    let mut len_buf = [0u8; 4];
    let mut filled = 0;
    while filled < len_buf.len() {
        let n = r.read(&mut len_buf[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(None);
            }
            return Err(NetError::Io(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "connection closed mid-frame",
            )));
        }
        filled += n;
    }
    let len = u32::from_be_bytes(len_buf);
    if len > MAX_FRAME {
        return Err(NetError::FrameTooLarge { len: len as usize });
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    Ok(Some(serde_json::from_slice(&body)?))
}

/// Reads one message, treating end-of-stream as an error.
pub fn read_message(r: &mut impl Read) -> Result<Message, NetError> {
    try_read_message(r)?.ok_or_else(|| {
        NetError::Io(io::Error::new(
            io::ErrorKind::UnexpectedEof,
            "connection closed before a message",
        ))
    })
}

fn configure(stream: &TcpStream) -> io::Result<()> {
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_write_timeout(Some(IO_TIMEOUT))
}

/// What the seller knows about one subscription: who may stream it and the
/// verification key they registered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubscriberInfo {
    pub buyer: PartyId,
    pub verify: KeyBytes,
}

/// Seller-side listener plus the subscription registry and the set of
/// currently live sessions.
pub struct Seller {
    listener: TcpListener,
    registry: BTreeMap<u64, SubscriberInfo>,
    active: Arc<Mutex<BTreeSet<u64>>>,
}

/// Removes the subscription from the live-session set when the session
/// drops, freeing it for a reconnect.
struct ActiveGuard {
    active: Arc<Mutex<BTreeSet<u64>>>,
    subscription: u64,
}

impl Drop for ActiveGuard {
    fn drop(&mut self) {
        self.active
            .lock()
            .expect("session set lock")
            .remove(&self.subscription);
    }
}

/// One accepted streaming session on the seller side.
pub struct SellerSession {
    stream: TcpStream,
    pub subscription: u64,
    pub buyer: PartyId,
    _guard: ActiveGuard,
}

impl SellerSession {
    pub fn send_batch(&mut self, batch: &SignedBatch) -> Result<(), NetError> {
        write_message(&mut self.stream, &Message::Batch { batch: batch.clone() })
    }
}

impl Seller {
    pub fn new(listener: TcpListener, registry: BTreeMap<u64, SubscriberInfo>) -> Self {
        Seller {
            listener,
            registry,
            active: Arc::new(Mutex::new(BTreeSet::new())),
        }
    }

    pub fn bind(addr: &str, registry: BTreeMap<u64, SubscriberInfo>) -> io::Result<Self> {
        Ok(Seller::new(TcpListener::bind(addr)?, registry))
    }

    pub fn local_addr(&self) -> io::Result<std::net::SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts one connection and runs the seller side of the handshake
    /// with the given per-connection nonce. The caller must never reuse a
    /// nonce. On any check failing, the peer gets a `REJECT` and this
    /// returns `HandshakeFailed`.
    pub fn accept_subscriber(&self, nonce: [u8; NONCE_LEN]) -> Result<SellerSession, NetError> {
        let (mut stream, _peer) = self.listener.accept()?;
        configure(&stream)?;
        let (subscription, buyer) = match read_message(&mut stream)? {
            Message::Hello { subscription, buyer } => (subscription, buyer),
            other => {
                let got = kind_name(&other);
                let _ = write_message(
                    &mut stream,
                    &Message::Reject { reason: format!("expected HELLO, got {got}") },
                );
                return Err(NetError::Protocol { expected: "HELLO", got });
            }
        };
        let reject = |stream: &mut TcpStream, reason: String| -> NetError {
            let _ = write_message(stream, &Message::Reject { reason: reason.clone() });
            NetError::HandshakeFailed { reason }
        };
        let Some(info) = self.registry.get(&subscription) else {
            return Err(reject(&mut stream, format!("no subscription {subscription}")));
        };
        if info.buyer != buyer {
            return Err(reject(
                &mut stream,
                format!("subscription {subscription} does not belong to {buyer}"),
            ));
        }
        if self.active.lock().expect("session set lock").contains(&subscription) {
            return Err(reject(
                &mut stream,
                format!("subscription {subscription} already has a live session"),
            ));
        }
        write_message(&mut stream, &Message::Nonce { nonce: NonceBytes(nonce) })?;
        let signature = match read_message(&mut stream)? {
            Message::NonceSig { signature } => signature,
            other => {
                let got = kind_name(&other);
                let _ = write_message(
                    &mut stream,
                    &Message::Reject { reason: format!("expected NONCE_SIG, got {got}") },
                );
                return Err(NetError::Protocol { expected: "NONCE_SIG", got });
            }
        };
        if !verify(&info.verify, &nonce, &signature) {
            return Err(reject(
                &mut stream,
                "nonce signature does not verify under the registered key".into(),
            ));
        }
        // Re-check and claim the slot atomically before accepting.
        if !self.active.lock().expect("session set lock").insert(subscription) {
            return Err(reject(
                &mut stream,
                format!("subscription {subscription} already has a live session"),
            ));
        }
        let guard = ActiveGuard {
            active: Arc::clone(&self.active),
            subscription,
        };
        write_message(&mut stream, &Message::Accept)?;
        Ok(SellerSession {
            stream,
            subscription,
            buyer,
            _guard: guard,
        })
    }
}

/// Decrypts a base64 sealed endpoint into the `address:port` it carries.
pub fn open_endpoint(sealed_b64: &str, keys: &KeyPair) -> Result<String, NetError> {
    let sealed = BASE64
        .decode(sealed_b64)
        .map_err(|e| NetError::BadEndpoint { detail: format!("base64: {e}") })?;
    let plain = keys
        .open_sealed(&sealed)
        .map_err(|e| NetError::BadEndpoint { detail: e.to_string() })?;
    String::from_utf8(plain).map_err(|_| NetError::BadEndpoint {
        detail: "endpoint is not UTF-8".into(),
    })
}

/// Buyer-side streaming session.
#[derive(Debug)]
pub struct BuyerSession {
    stream: TcpStream,
    pub subscription: u64,
}

impl BuyerSession {
    /// Connects to a plain `address:port` and runs the buyer side of the
    /// handshake: HELLO, sign the nonce, await ACCEPT.
    pub fn connect_and_handshake(
        endpoint: &str,
        keys: &KeyPair,
        subscription: u64,
        buyer: &str,
    ) -> Result<Self, NetError> {
        let mut stream = TcpStream::connect(endpoint)?;
        configure(&stream)?;
        write_message(
            &mut stream,
            &Message::Hello {
                subscription,
                buyer: buyer.to_string(),
            },
        )?;
        let nonce = match read_message(&mut stream)? {
            Message::Nonce { nonce } => nonce,
            Message::Reject { reason } => return Err(NetError::Rejected { reason }),
            other => {
                return Err(NetError::Protocol {
                    expected: "NONCE",
                    got: kind_name(&other),
                })
            }
        };
        let signature = keys.sign(&nonce.0);
        write_message(&mut stream, &Message::NonceSig { signature })?;
        match read_message(&mut stream)? {
            Message::Accept => Ok(BuyerSession {
                stream,
                subscription,
            }),
            Message::Reject { reason } => Err(NetError::Rejected { reason }),
            other => Err(NetError::Protocol {
                expected: "ACCEPT or REJECT",
                got: kind_name(&other),
            }),
        }
    }

    /// Opens a sealed endpoint and connects through it.
    pub fn connect_sealed(
        sealed_endpoint_b64: &str,
        keys: &KeyPair,
        subscription: u64,
        buyer: &str,
    ) -> Result<Self, NetError> {
        let endpoint = open_endpoint(sealed_endpoint_b64, keys)?;
        Self::connect_and_handshake(&endpoint, keys, subscription, buyer)
    }

    /// Receives the next batch; `None` when the seller closed the stream.
    pub fn recv_batch(&mut self) -> Result<Option<SignedBatch>, NetError> {
        match try_read_message(&mut self.stream)? {
            None => Ok(None),
            Some(Message::Batch { batch }) => Ok(Some(batch)),
            Some(Message::Reject { reason }) => Err(NetError::Rejected { reason }),
            Some(other) => Err(NetError::Protocol {
                expected: "BATCH",
                got: kind_name(&other),
            }),
        }
    }
}

/// Fault injected by the demo seller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultMode {
    /// Honest streaming.
    None,
    /// Fork the chain at this batch index: the second half of the buyers
    /// gets a divergent history from there on.
    ForkAt(u64),
    /// Corrupt the signature of buyer 0's final batch.
    BadSignature,
}

impl std::fmt::Display for FaultMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FaultMode::None => f.write_str("none"),
            FaultMode::ForkAt(k) => write!(f, "fork-at-{k}"),
            FaultMode::BadSignature => f.write_str("bad-signature"),
        }
    }
}

impl std::str::FromStr for FaultMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(FaultMode::None),
            "bad-signature" => Ok(FaultMode::BadSignature),
            other => {
                if let Some(k) = other.strip_prefix("fork-at-") {
                    k.parse::<u64>()
                        .map(FaultMode::ForkAt)
                        .map_err(|_| format!("bad fork index in {other:?}"))
                } else {
                    Err(format!(
                        "unknown fault mode {other:?} (expected none, fork-at-K, or bad-signature)"
                    ))
                }
            }
        }
    }
}

/// Demo/two-process failures.
#[derive(Debug, Error)]
pub enum DemoError {
    #[error("invalid demo parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("market: {0}")]
    Market(#[from] MarketError),
    #[error("stream: {0}")]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One rejected batch in a demo run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedBatch {
    pub buyer: usize,
    pub index: u64,
    pub reason: &'static str,
}

/// Outcome summary of [`run_stream_demo`]; the human-readable transcript
/// goes to the writer passed in.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub fault: FaultMode,
    pub batches: u64,
    pub buyers: usize,
    /// Verified batch count per buyer.
    pub accepted: Vec<u64>,
    pub rejected: Vec<RejectedBatch>,
    /// Index at which equivocation was proven, if any.
    pub equivocation_index: Option<u64>,
    pub challenger_share: Option<Tokens>,
    pub prover_share: Option<Tokens>,
    /// True when the honest path completed takedown + reclaim.
    pub deposit_reclaimed: bool,
    pub conservation_ok: bool,
}

/// Deterministic per-party key derivation shared by every demo role, so
/// separate processes started with the same seed agree on all keys.
pub fn demo_keys(seed: u64, party: &str) -> KeyPair {
    KeyPair::from_seed(&derive_seed_bytes(seed, &format!("keys.{party}"), 0))
}

const CLASSIFICATIONS: [&str; 4] = ["CVE-2021-44228", "portscan", "botnet-c2", "dns-tunnel"];

/// Three deterministic alerts per batch; the fork variant differs in its
/// assessment text (and therefore in every chain hash from the fork on).
fn demo_alerts(index: u64, fork: bool) -> Vec<Alert> {
    (0..3)
        .map(|j| Alert {
            time: 1_700_000_000 + index * 60 + j,
            source: format!("10.0.{}.{}", index % 200, j + 1),
            target: "192.168.1.5".into(),
            classification: CLASSIFICATIONS[((index + j) % 4) as usize].into(),
            assessment: if fork {
                "severity: low (revised)".into()
            } else {
                "severity: high".into()
            },
            external: None,
        })
        .collect()
}

fn validate_demo(fault: FaultMode, batches: u64, buyers: usize) -> Result<(), DemoError> {
    if batches == 0 {
        return Err(DemoError::Invalid("need at least one batch".into()));
    }
    if buyers == 0 {
        return Err(DemoError::Invalid("need at least one buyer".into()));
    }
    if let FaultMode::ForkAt(k) = fault {
        if buyers < 2 {
            return Err(DemoError::Invalid(
                "a fork needs at least two buyers to be observable".into(),
            ));
        }
        if k >= batches {
            return Err(DemoError::Invalid(format!(
                "fork index {k} is beyond the last batch {}",
                batches - 1
            )));
        }
    }
    Ok(())
}

/// Seller role shared by the single-process demo and the two-process mode:
/// accept every buyer, then stream `batches` batches applying the fault.
struct SellerCore {
    seller: Seller,
    keys: KeyPair,
    fault: FaultMode,
    batches: u64,
    buyers: usize,
    seed: u64,
}

struct SellerOutput {
    lines: Vec<String>,
}

impl SellerCore {
    fn run(self) -> Result<SellerOutput, DemoError> {
        let mut lines = Vec::new();
        let mut sessions: BTreeMap<u64, SellerSession> = BTreeMap::new();
        for connection in 0..self.buyers {
            let nonce = derive_seed_bytes(self.seed, "demo.nonce", connection as u64);
            let session = self.seller.accept_subscriber(nonce)?;
            lines.push(format!(
                "handshake: {} subscription {} accepted",
                session.buyer, session.subscription
            ));
            sessions.insert(session.subscription, session);
        }

        let mut producer = StreamProducer::new(self.keys);
        let mut fork_producer: Option<StreamProducer> = None;
        // Buyers with index >= this threshold follow the forked chain.
        let fork_threshold = self.buyers.div_ceil(2);
        for index in 0..self.batches {
            if self.fault == FaultMode::ForkAt(index) {
                fork_producer = Some(producer.clone());
            }
            let honest = producer.produce_batch(demo_alerts(index, false))?;
            let forked = match fork_producer.as_mut() {
                Some(fork) => Some(fork.produce_batch(demo_alerts(index, true))?),
                None => None,
            };
            for (subscription, session) in sessions.iter_mut() {
                let buyer_index = (*subscription - 1) as usize;
                let mut batch = match &forked {
                    Some(fork_batch) if buyer_index >= fork_threshold => fork_batch.clone(),
                    _ => honest.clone(),
                };
                if self.fault == FaultMode::BadSignature
                    && buyer_index == 0
                    && index == self.batches - 1
                {
                    batch.signature.0[0] ^= 0x01;
                }
                session.send_batch(&batch)?;
            }
        }
        // Sessions drop here; buyers see a clean end-of-stream.
        Ok(SellerOutput { lines })
    }
}

fn reason_of(outcome: &VerifyOutcome) -> &'static str {
    match outcome {
        VerifyOutcome::Ok => "ok",
        VerifyOutcome::BadSignature => "bad signature",
        VerifyOutcome::ChainMismatch { .. } => "chain mismatch",
    }
}

/// Ships a challenge to a responding consumer over its own loopback socket
/// and returns the proof, if the responder's chain disagrees.
fn exchange_challenge_over_loopback(
    challenge: &StreamChallenge,
    responder: StreamConsumer,
) -> Result<Option<EquivocationProof>, DemoError> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let handle = thread::spawn(move || -> Result<(), NetError> {
        let (mut sock, _) = listener.accept()?;
        configure(&sock)?;
        match read_message(&mut sock)? {
            Message::Challenge { challenge } => match responder.respond_to_challenge(&challenge) {
                Ok(Some(proof)) => write_message(&mut sock, &Message::Proof { proof }),
                Ok(None) => write_message(
                    &mut sock,
                    &Message::Reject { reason: "chain heads agree".into() },
                ),
                Err(e) => write_message(
                    &mut sock,
                    &Message::Reject { reason: format!("challenge refused: {e}") },
                ),
            },
            other => Err(NetError::Protocol {
                expected: "CHALLENGE",
                got: kind_name(&other),
            }),
        }
    });
    let mut sock = TcpStream::connect(addr)?;
    configure(&sock)?;
    write_message(&mut sock, &Message::Challenge { challenge: challenge.clone() })?;
    let reply = read_message(&mut sock)?;
    handle.join().expect("challenge responder thread")?;
    match reply {
        Message::Proof { proof } => Ok(Some(proof)),
        Message::Reject { .. } => Ok(None),
        other => Err(NetError::Protocol {
            expected: "PROOF or REJECT",
            got: kind_name(&other),
        }
        .into()),
    }
}

/// Runs the full single-process demo: marketplace setup, TCP streaming with
/// the chosen fault, verification, a cross-buyer challenge, and either
/// adjudication (fault proven) or takedown + reclaim (honest stream).
/// Writes a deterministic transcript to `out` (no ports, no timing).
pub fn run_stream_demo(
    fault: FaultMode,
    batches: u64,
    buyers: usize,
    seed: u64,
    out: &mut impl Write,
) -> Result<DemoReport, DemoError> {
    validate_demo(fault, batches, buyers)?;
    let seller_keys = demo_keys(seed, "seller");
    let buyer_keys: Vec<KeyPair> = (0..buyers)
        .map(|i| demo_keys(seed, &format!("buyer{i}")))
        .collect();

    // Marketplace: seller posts a 9-token stream deposit; each buyer escrows
    // fee 1 + rating bond 1 and gets a sealed endpoint back.
    let config = MarketConfig {
        reclaim_delay: 4,
        ..MarketConfig::default()
    };
    let reclaim_delay = config.reclaim_delay;
    let mut market = MarketState::new(config)?;
    let one = Tokens::from_whole(1);
    market.apply(
        "seller",
        Command::Register { payment: one, keys: seller_keys.public() },
    )?;
    market.apply("seller", Command::Mint { amount: Tokens::from_whole(9) })?;
    market.apply(
        "seller",
        Command::Advertise {
            tags: AdvertTags {
                throughput_per_hour: 10.0,
                price_per_alert: one,
                detector: "IDS".into(),
                network: "industrial".into(),
                attack_types: vec!["DDoS".into(), "botnet".into()],
            },
        },
    )?;
    market.apply(
        "seller",
        Command::PostDeposit { advert: 1, amount: Tokens::from_whole(9) },
    )?;

    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?.to_string();

    let mut seal_rng = derive_rng(seed, "demo.seal", 0);
    for (i, keys) in buyer_keys.iter().enumerate() {
        let name = format!("buyer{i}");
        market.apply(
            &name,
            Command::Register { payment: one, keys: keys.public() },
        )?;
        market.apply(&name, Command::Mint { amount: Tokens::from_whole(2) })?;
        market.apply(
            &name,
            Command::MkOffer { advert: 1, fee: one, deposit: one },
        )?;
    }
    for (i, keys) in buyer_keys.iter().enumerate() {
        let sealed = seal(&keys.seal_key(), addr.as_bytes(), &mut seal_rng);
        market.apply(
            "seller",
            Command::AccOffer {
                offer: i as u64 + 1,
                sealed_endpoint: BASE64.encode(sealed),
            },
        )?;
    }
    writeln!(
        out,
        "market: seller and {buyers} buyers registered; stream deposit 9 posted (advert 1)"
    )?;

    let registry: BTreeMap<u64, SubscriberInfo> = market
        .subscriptions
        .values()
        .map(|s| {
            (
                s.id,
                SubscriberInfo {
                    buyer: s.subscriber.clone(),
                    verify: market.parties[&s.subscriber].keys.verify,
                },
            )
        })
        .collect();

    let core = SellerCore {
        seller: Seller::new(listener, registry),
        keys: seller_keys.clone(),
        fault,
        batches,
        buyers,
        seed,
    };
    let seller_thread = thread::spawn(move || core.run());

    // Buyers connect strictly in order so the transcript is stable.
    let mut buyer_sessions = Vec::new();
    for (i, keys) in buyer_keys.iter().enumerate() {
        let subscription = &market.subscriptions[&(i as u64 + 1)];
        let session = BuyerSession::connect_sealed(
            &subscription.sealed_endpoint,
            keys,
            subscription.id,
            &format!("buyer{i}"),
        )?;
        buyer_sessions.push(session);
    }
    // Each buyer drains its socket on its own thread so the seller never
    // blocks on a full buffer, whatever the batch count.
    let readers: Vec<_> = buyer_sessions
        .into_iter()
        .map(|mut session| {
            thread::spawn(move || -> Result<Vec<SignedBatch>, NetError> {
                let mut collected = Vec::new();
                while let Some(batch) = session.recv_batch()? {
                    collected.push(batch);
                }
                Ok(collected)
            })
        })
        .collect();

    let seller_output = seller_thread.join().expect("seller thread panicked")?;
    let mut collected: Vec<Vec<SignedBatch>> = Vec::new();
    for reader in readers {
        collected.push(reader.join().expect("reader thread panicked")?);
    }
    for line in &seller_output.lines {
        writeln!(out, "{line}")?;
    }

    // Verify each buyer's stream independently.
    let producer_key = seller_keys.verify_key();
    let mut consumers = Vec::new();
    let mut accepted = vec![0u64; buyers];
    let mut rejected: Vec<RejectedBatch> = Vec::new();
    for (i, batches_received) in collected.iter().enumerate() {
        let mut consumer = StreamConsumer::new(producer_key);
        for batch in batches_received {
            let outcome = consumer.verify_batch(batch);
            if outcome == VerifyOutcome::Ok {
                accepted[i] += 1;
            } else {
                rejected.push(RejectedBatch {
                    buyer: i,
                    index: batch.index,
                    reason: reason_of(&outcome),
                });
            }
        }
        consumers.push(consumer);
    }
    for (i, taken) in accepted.iter().enumerate() {
        let mine: Vec<String> = rejected
            .iter()
            .filter(|r| r.buyer == i)
            .map(|r| format!("index {} ({})", r.index, r.reason))
            .collect();
        if mine.is_empty() {
            writeln!(out, "stream: buyer{i} accepted {taken}/{batches} batches")?;
        } else {
            writeln!(
                out,
                "stream: buyer{i} accepted {taken}/{batches} batches; rejected {}",
                mine.join(", ")
            )?;
        }
    }

    // Cross-buyer chain comparison over the wire, then adjudication if the
    // producer equivocated.
    let mut equivocation_index = None;
    let mut challenger_share = None;
    let mut prover_share = None;
    if buyers >= 2 && consumers[0].accepted() > 0 && consumers[1].accepted() > 0 {
        let index = match fault {
            FaultMode::ForkAt(k) => k,
            _ => consumers[0].accepted().min(consumers[1].accepted()) - 1,
        };
        let challenge = consumers[0].make_challenge("buyer0".into(), index)?;
        match exchange_challenge_over_loopback(&challenge, consumers[1].clone())? {
            Some(proof) => {
                writeln!(
                    out,
                    "challenge: buyer0 index {index} -> buyer1 proves equivocation"
                )?;
                let event = market.apply(
                    "buyer1",
                    Command::Adjudicate {
                        deposit: 1,
                        challenge: challenge.into(),
                        proof: proof.into(),
                    },
                )?;
                if let Event::Adjudicated {
                    challenger_share: c,
                    prover_share: p,
                    ..
                } = event
                {
                    writeln!(
                        out,
                        "adjudication: deposit 9 split 2:1; buyer0 +{c}, buyer1 +{p}"
                    )?;
                    challenger_share = Some(c);
                    prover_share = Some(p);
                }
                equivocation_index = Some(index);
            }
            None => {
                writeln!(out, "challenge: buyer0 index {index} -> buyer1 agrees")?;
            }
        }
    } else if buyers < 2 {
        writeln!(out, "challenge: skipped (needs two buyers)")?;
    }

    // Honest outcome: wind the stream down and reclaim the deposit.
    let mut deposit_reclaimed = false;
    if equivocation_index.is_none() {
        market.apply("seller", Command::Takedown { deposit: 1 })?;
        for _ in 0..reclaim_delay - 1 {
            market.apply("seller", Command::Mint { amount: Tokens::from_milli(1) })?;
        }
        market.apply("seller", Command::Reclaim { deposit: 1 })?;
        deposit_reclaimed = true;
        writeln!(
            out,
            "takedown: deposit 9 reclaimed by seller after {reclaim_delay} steps"
        )?;
    }

    let conservation_ok =
        market.check_conservation().is_ok() && market.escrow == market.expected_escrow();
    writeln!(out, "conservation: {}", if conservation_ok { "ok" } else { "VIOLATED" })?;

    Ok(DemoReport {
        fault,
        batches,
        buyers,
        accepted,
        rejected,
        equivocation_index,
        challenger_share,
        prover_share,
        deposit_reclaimed,
        conservation_ok,
    })
}

fn two_process_registry(seed: u64, buyers: usize) -> BTreeMap<u64, SubscriberInfo> {
    (0..buyers)
        .map(|i| {
            let name = format!("buyer{i}");
            (
                i as u64 + 1,
                SubscriberInfo {
                    buyer: name.clone(),
                    verify: demo_keys(seed, &name).verify_key(),
                },
            )
        })
        .collect()
}

/// Seller half of the two-process demo: listens on a fixed address and
/// streams to `buyers` connections. Buyer identities and keys are derived
/// from the shared seed, standing in for a marketplace both processes
/// trust.
pub fn run_seller_process(
    listen: &str,
    seed: u64,
    buyers: usize,
    batches: u64,
    fault: FaultMode,
    out: &mut impl Write,
) -> Result<(), DemoError> {
    validate_demo(fault, batches, buyers)?;
    let listener = TcpListener::bind(listen)?;
    writeln!(
        out,
        "seller: listening for {buyers} buyers ({batches} batches, fault {fault})"
    )?;
    let core = SellerCore {
        seller: Seller::new(listener, two_process_registry(seed, buyers)),
        keys: demo_keys(seed, "seller"),
        fault,
        batches,
        buyers,
        seed,
    };
    let output = core.run()?;
    for line in output.lines {
        writeln!(out, "{line}")?;
    }
    writeln!(out, "seller: stream complete")?;
    Ok(())
}

/// Buyer half of the two-process demo: connect, handshake, verify the whole
/// stream, and report the outcome.
pub fn run_buyer_process(
    endpoint: &str,
    seed: u64,
    buyer_index: usize,
    out: &mut impl Write,
) -> Result<(), DemoError> {
    let name = format!("buyer{buyer_index}");
    let keys = demo_keys(seed, &name);
    let subscription = buyer_index as u64 + 1;
    let mut session = BuyerSession::connect_and_handshake(endpoint, &keys, subscription, &name)?;
    writeln!(out, "{name}: handshake accepted (subscription {subscription})")?;
    let mut consumer = StreamConsumer::new(demo_keys(seed, "seller").verify_key());
    let mut accepted = 0u64;
    let mut rejections: Vec<String> = Vec::new();
    while let Some(batch) = session.recv_batch()? {
        let outcome = consumer.verify_batch(&batch);
        if outcome == VerifyOutcome::Ok {
            accepted += 1;
        } else {
            rejections.push(format!("index {} ({})", batch.index, reason_of(&outcome)));
        }
    }
    if rejections.is_empty() {
        writeln!(out, "{name}: accepted {accepted} batches, chain verified")?;
    } else {
        writeln!(
            out,
            "{name}: accepted {accepted} batches; rejected {}",
            rejections.join(", ")
        )?;
    }
    Ok(())
}
