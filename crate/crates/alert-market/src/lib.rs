//! Economics of alert sharing between two defenders facing a correlated
//! attacker, plus the infrastructure needed to actually trade alerts.
//!
//! The crate has two halves that meet in the middle:
//!
//! * **Analysis** — [`attacker`] models the attacker as a four-state Markov
//!   chain over which defender is currently under fire; [`game`] prices a
//!   single traded bit of "were you attacked last round?" and classifies when
//!   buying beats blind defense; [`sim`] runs seeded round-by-round
//!   simulations of the resulting policies; [`trust`] scores alert sellers
//!   from rating evidence and burned collateral.
//! * **Infrastructure** — [`market`] is a deterministic, replayable token
//!   marketplace (advertisements, offers, subscriptions, ratings, stream
//!   deposits); [`stream`] hash-chains and signs alert batches so a seller
//!   cannot show different histories to different buyers without minting a
//!   slashing proof; [`net`] runs the subscriber handshake and batch
//!   transport over TCP; [`crypto`] holds the key, signature and sealed-box
//!   primitives shared by both.
//!
//! Everything randomized takes an explicit `u64` seed and derives per-purpose
//! generators from it (see [`seed`]), so every simulation, market scenario and
//! streaming demo is reproducible bit-for-bit. Token amounts are scaled
//! integers ([`tokens::Tokens`]), so ledger conservation checks are exact.
//!
//! The `examples/` directory contains one runnable program per capability;
//! `src/main.rs` is a thin CLI over the same API.

pub mod attacker;
pub mod crypto;
pub mod game;
pub mod market;
pub mod net;
pub mod script;
pub mod seed;
pub mod sim;
pub mod stream;
pub mod tokens;
pub mod trust;

/// Identifier for a marketplace participant. Plain strings keep command logs
/// and scenario scripts human-readable.
pub type PartyId = String;

pub use tokens::Tokens;
