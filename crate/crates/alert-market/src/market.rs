//! Deterministic token marketplace for alert streams.
//!
//! The marketplace is a single-writer state machine over an exact
//! milli-token ledger. Every command either applies atomically — producing
//! an event that is appended to the state's log — or is rejected with a
//! typed error and leaves the state untouched. Replaying a log from the
//! empty state reproduces the live state bit for bit, which makes every
//! run auditable.
//!
//! Flow of a trade: a publisher advertises a stream; a would-be subscriber
//! escrows a fee plus a rating deposit in an offer; the publisher accepts,
//! collecting the fee and publishing a sealed endpoint for the subscriber,
//! while the deposit stays escrowed until the subscriber rates the stream.
//! Ratings feed per-publisher evidence that [`MarketState::trust_of`] turns
//! into a trust score, seeded by the registration burn.
//!
//! Producers additionally post a misbehavior deposit. Anyone who can show
//! two producer-signed chain heads for the same batch index — an
//! [`EquivocationProof`] — gets the deposit split with the challenger who
//! raised the alarm. An honest producer takes the advert down and reclaims
//! the deposit after a waiting period counted in applied commands (the
//! marketplace has no wall clock; protocol time is the command sequence
//! number).

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::PublicKeys;
use crate::stream::{Challenge, EquivocationProof};
use crate::tokens::Tokens;
use crate::trust::{pob_prior, score, Evidence, TrustConfig, TrustError, TrustScore};
use crate::PartyId;

/// Tunable marketplace parameters. All are fixed at construction and become
/// part of the replay contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketConfig {
    /// Reference burn for the proof-of-burn prior (prior 0.5 at exactly
    /// this payment).
    pub burn_baseline: Tokens,
    /// How many applied commands a subscriber has to rate, counted from
    /// subscription creation.
    pub rate_deadline: u64,
    /// Wait between advert takedown and deposit reclaim, in applied
    /// commands.
    pub reclaim_delay: u64,
    /// Deposit split for a proven equivocation: the challenger receives
    /// `challenger_parts / (challenger_parts + prover_parts)` of it.
    pub challenger_parts: u32,
    /// The proof submitter's share of the split.
    pub prover_parts: u32,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            burn_baseline: Tokens::from_whole(1),
            rate_deadline: 10_000,
            reclaim_delay: 1_000,
            challenger_parts: 2,
            prover_parts: 1,
        }
    }
}

impl MarketConfig {
    pub fn validate(&self) -> Result<(), MarketError> {
        if !self.burn_baseline.is_positive() {
            return Err(MarketError::InvalidConfig {
                detail: format!("burn_baseline must be positive, got {}", self.burn_baseline),
            });
        }
        if self.prover_parts == 0 || self.challenger_parts <= self.prover_parts {
            return Err(MarketError::InvalidConfig {
                detail: format!(
                    "deposit split must favor the challenger: got {}:{}",
                    self.challenger_parts, self.prover_parts
                ),
            });
        }
        Ok(())
    }
}

/// A registered participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Party {
    pub id: PartyId,
    pub keys: PublicKeys,
    /// Registration payment, destroyed forever. Seeds the trust prior.
    pub burned: Tokens,
    pub balance: Tokens,
}

/// Advertised stream metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvertTags {
    pub throughput_per_hour: f64,
    pub price_per_alert: Tokens,
    /// Detector kind, e.g. "IDS" or "anomaly".
    pub detector: String,
    /// Network kind, e.g. "industrial" or "campus".
    pub network: String,
    pub attack_types: Vec<String>,
}

impl AdvertTags {
    fn validate(&self) -> Result<(), MarketError> {
        if !(self.throughput_per_hour.is_finite() && self.throughput_per_hour > 0.0) {
            return Err(MarketError::MalformedTags {
                detail: format!("throughput must be positive, got {}", self.throughput_per_hour),
            });
        }
        if self.price_per_alert.is_negative() {
            return Err(MarketError::MalformedTags {
                detail: format!("price must be non-negative, got {}", self.price_per_alert),
            });
        }
        if self.detector.trim().is_empty() || self.network.trim().is_empty() {
            return Err(MarketError::MalformedTags {
                detail: "detector and network types must be non-empty".into(),
            });
        }
        Ok(())
    }
}

/// A published advert and the offers/subscriptions attached to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advert {
    pub id: u64,
    pub publisher: PartyId,
    pub tags: AdvertTags,
    pub offers: BTreeSet<u64>,
    pub subscriptions: BTreeSet<u64>,
}

/// An open offer; `fee + deposit` sit in escrow while it is live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub id: u64,
    pub advert: u64,
    pub maker: PartyId,
    /// Paid to the publisher if the offer is accepted.
    pub fee: Tokens,
    /// Rating bond, escrowed until the subscriber's first rating.
    pub deposit: Tokens,
}

/// A live subscription created by accepting an offer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subscription {
    pub id: u64,
    pub advert: u64,
    pub subscriber: PartyId,
    /// Flips to true on the first rating, which also refunds the deposit.
    pub rated: bool,
    /// Fee that was paid for the subscription (bookkeeping only).
    pub fee: Tokens,
    /// Rating bond still escrowed while `rated` is false.
    pub deposit: Tokens,
    /// Ciphertext of the producer's `address:port`, opaque to the market,
    /// decryptable only by the subscriber (base64).
    pub sealed_endpoint: String,
    /// Sequence number of the accepting command; the rating deadline counts
    /// from here.
    pub created_seq: u64,
    /// Ratings submitted so far (at most 2: initial and one finalization).
    pub ratings_submitted: u8,
    /// Sign of the last rating, so finalization can replace it.
    pub last_positive: Option<bool>,
}

/// Lifecycle of a producer's misbehavior deposit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DepositStatus {
    /// Stream live; deposit slashable.
    Active,
    /// Advert taken down at the recorded sequence number; still slashable
    /// until reclaimed.
    TakenDown { at_seq: u64 },
    /// Split between challenger and prover after a proven equivocation.
    Slashed,
    /// Returned to the producer after the waiting period.
    Reclaimed,
}

/// A producer's slashable stream deposit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamDeposit {
    pub id: u64,
    pub advert: u64,
    pub producer: PartyId,
    pub amount: Tokens,
    pub status: DepositStatus,
}

impl StreamDeposit {
    /// True while the deposit can still be slashed by a proof.
    pub fn slashable(&self) -> bool {
        matches!(self.status, DepositStatus::Active | DepositStatus::TakenDown { .. })
    }
}

/// Marketplace commands. Each is applied atomically by
/// [`MarketState::apply`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Command {
    /// Join the market, burning `payment` as the proof-of-burn stake and
    /// recording the caller's public keys.
    Register { payment: Tokens, keys: PublicKeys },
    /// Credit the caller with freshly minted tokens (test/bootstrap money).
    Mint { amount: Tokens },
    /// Publish a stream advert.
    Advertise { tags: AdvertTags },
    /// Remove an advert; open offers are refunded to their makers, unrated
    /// subscriptions forfeit their deposits.
    RmAdvert { advert: u64 },
    /// Escrow `fee + deposit` towards a subscription to `advert`.
    MkOffer { advert: u64, fee: Tokens, deposit: Tokens },
    /// Withdraw an offer (maker) or turn it down (publisher); the maker is
    /// refunded either way.
    DelOffer { offer: u64 },
    /// Publisher accepts an offer: fee released to the publisher, deposit
    /// retained, subscription created with the sealed endpoint.
    AccOffer { offer: u64, sealed_endpoint: String },
    /// End a subscription (either side); if it was never rated the deposit
    /// is forfeited.
    Unsubscribe { subscription: u64 },
    /// Rate a subscription in [0, 1]; ≥ 0.5 counts positive. The first
    /// rating refunds the deposit; a second replaces the first; more are
    /// rejected.
    Rate { subscription: u64, rating: f64 },
    /// Post the slashable stream deposit for one's own advert.
    PostDeposit { advert: u64, amount: Tokens },
    /// Announce the end of the stream; starts the reclaim clock.
    Takedown { deposit: u64 },
    /// Submit an equivocation proof against a deposit; on success the
    /// deposit is split between the challenger named in the challenge and
    /// the caller. The evidence is boxed so that this rare variant does not
    /// inflate every stored command.
    Adjudicate {
        deposit: u64,
        challenge: Box<Challenge>,
        proof: Box<EquivocationProof>,
    },
    /// Recover a taken-down deposit once the waiting period has elapsed.
    Reclaim { deposit: u64 },
}

/// Refund detail inside [`Event::AdvertRemoved`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferRefund {
    pub offer: u64,
    pub maker: PartyId,
    pub fee: Tokens,
    pub deposit: Tokens,
}

/// Forfeit detail inside [`Event::AdvertRemoved`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscriptionForfeit {
    pub subscription: u64,
    pub subscriber: PartyId,
    pub deposit: Tokens,
}

/// What a successful command did. Events carry the full audit trail for
/// token movements, so the log alone reconstructs every ledger change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Registered {
        party: PartyId,
        burned: Tokens,
        /// Proof-of-burn prior derived from the payment.
        prior: f64,
    },
    Minted {
        party: PartyId,
        amount: Tokens,
        balance: Tokens,
    },
    Advertised {
        advert: u64,
    },
    AdvertRemoved {
        advert: u64,
        refunded_offers: Vec<OfferRefund>,
        forfeited_subscriptions: Vec<SubscriptionForfeit>,
        removed_subscriptions: Vec<u64>,
    },
    OfferMade {
        offer: u64,
        advert: u64,
        maker: PartyId,
        escrowed: Tokens,
    },
    OfferDeleted {
        offer: u64,
        maker: PartyId,
        refunded: Tokens,
    },
    Accepted {
        subscription: u64,
        offer: u64,
        advert: u64,
        subscriber: PartyId,
        /// Fee released from escrow to the publisher.
        fee: Tokens,
        /// Deposit retained in escrow until the first rating.
        deposit: Tokens,
        /// Publisher accepted their own offer; allowed but flagged so trust
        /// consumers can discount it.
        self_dealing: bool,
    },
    Unsubscribed {
        subscription: u64,
        /// Deposit forfeited because the subscription was never rated.
        forfeited: Option<Tokens>,
    },
    Rated {
        subscription: u64,
        publisher: PartyId,
        positive: bool,
        /// Deposit refunded on the first rating only.
        refunded: Option<Tokens>,
    },
    DepositPosted {
        deposit: u64,
        advert: u64,
        amount: Tokens,
    },
    TakenDown {
        deposit: u64,
        at_seq: u64,
    },
    Adjudicated {
        deposit: u64,
        challenger: PartyId,
        prover: PartyId,
        challenger_share: Tokens,
        prover_share: Tokens,
    },
    Reclaimed {
        deposit: u64,
        amount: Tokens,
    },
}

/// Typed command rejections. A rejected command changes nothing.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("invalid market config: {detail}")]
    InvalidConfig { detail: String },
    #[error("caller {party} is not registered")]
    NotRegistered { party: PartyId },
    #[error("{party} is already registered")]
    AlreadyRegistered { party: PartyId },
    #[error("invalid {what}: {value}")]
    InvalidAmount { what: &'static str, value: String },
    #[error("unknown advert {id}")]
    UnknownAdvert { id: u64 },
    #[error("unknown offer {id}")]
    UnknownOffer { id: u64 },
    #[error("unknown subscription {id}")]
    UnknownSubscription { id: u64 },
    #[error("unknown deposit {id}")]
    UnknownDeposit { id: u64 },
    #[error("unknown party {id}")]
    UnknownParty { id: PartyId },
    #[error("{party} may not {action}")]
    Unauthorized { party: PartyId, action: &'static str },
    #[error("{party} has {available}, needs {needed}")]
    InsufficientBalance {
        party: PartyId,
        needed: Tokens,
        available: Tokens,
    },
    #[error("malformed advert tags: {detail}")]
    MalformedTags { detail: String },
    #[error("subscription {subscription} already has its final rating")]
    RatingLimit { subscription: u64 },
    #[error("rating window for subscription {subscription} closed at step {deadline}")]
    RateDeadlineExpired { subscription: u64, deadline: u64 },
    #[error("advert {advert} already has a live deposit")]
    DepositExists { advert: u64 },
    #[error("deposit {deposit} is closed")]
    DepositClosed { deposit: u64 },
    #[error("deposit {deposit} was already taken down")]
    AlreadyTakenDown { deposit: u64 },
    #[error("deposit {deposit} has not been taken down")]
    NotTakenDown { deposit: u64 },
    #[error("deposit {deposit} reclaimable from step {available_at}, now {now}")]
    ReclaimTooEarly {
        deposit: u64,
        available_at: u64,
        now: u64,
    },
    #[error("invalid equivocation evidence: {detail}")]
    InvalidProof { detail: String },
    #[error(transparent)]
    Trust(#[from] TrustError),
}

/// One line of the append-only command log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub caller: PartyId,
    #[serde(flatten)]
    pub command: Command,
    pub result: Event,
}

/// Full marketplace state. Structural equality is the replay contract:
/// `replay(config, log) == live state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub config: MarketConfig,
    /// Count of applied (successful) commands; rejected commands do not
    /// advance it. Doubles as the protocol clock.
    pub seq: u64,
    pub parties: BTreeMap<PartyId, Party>,
    pub adverts: BTreeMap<u64, Advert>,
    pub offers: BTreeMap<u64, Offer>,
    pub subscriptions: BTreeMap<u64, Subscription>,
    /// Rating evidence per publisher.
    pub ratings: BTreeMap<PartyId, Evidence>,
    pub deposits: BTreeMap<u64, StreamDeposit>,
    /// Tokens held by the market itself (live offers, rating bonds, stream
    /// deposits).
    pub escrow: Tokens,
    /// Forfeited rating bonds; destroyed, never redistributed.
    pub forfeited: Tokens,
    /// Total minted via [`Command::Mint`].
    pub minted: Tokens,
    /// Total registration payments burned.
    pub burned: Tokens,
    pub log: Vec<LogRecord>,
    next_advert: u64,
    next_offer: u64,
    next_subscription: u64,
    next_deposit: u64,
}

impl MarketState {
    pub fn new(config: MarketConfig) -> Result<Self, MarketError> {
        config.validate()?;
        Ok(MarketState {
            config,
            seq: 0,
            parties: BTreeMap::new(),
            adverts: BTreeMap::new(),
            offers: BTreeMap::new(),
            subscriptions: BTreeMap::new(),
            ratings: BTreeMap::new(),
            deposits: BTreeMap::new(),
            escrow: Tokens::ZERO,
            forfeited: Tokens::ZERO,
            minted: Tokens::ZERO,
            burned: Tokens::ZERO,
            log: Vec::new(),
            next_advert: 1,
            next_offer: 1,
            next_subscription: 1,
            next_deposit: 1,
        })
    }

    /// Applies one command atomically. On success the event is logged and
    /// `seq` advances; on rejection the state is exactly as before.
    ///
    /// Every handler is written check-first: all validation happens before
    /// the first mutation, so a rejection can never leave a partial ledger
    /// change behind.
    pub fn apply(&mut self, caller: &str, command: Command) -> Result<Event, MarketError> {
        if !self.parties.contains_key(caller) && !matches!(command, Command::Register { .. }) {
            return Err(MarketError::NotRegistered {
                party: caller.to_string(),
            });
        }
        let now = self.seq + 1; // sequence number this command gets if applied
        let event = match command.clone() {
            Command::Register { payment, keys } => self.register(caller, payment, keys)?,
            Command::Mint { amount } => self.mint(caller, amount)?,
            Command::Advertise { tags } => self.advertise(caller, tags)?,
            Command::RmAdvert { advert } => self.rm_advert(caller, advert)?,
            Command::MkOffer {
                advert,
                fee,
                deposit,
            } => self.mk_offer(caller, advert, fee, deposit)?,
            Command::DelOffer { offer } => self.del_offer(caller, offer)?,
            Command::AccOffer {
                offer,
                sealed_endpoint,
            } => self.acc_offer(caller, offer, sealed_endpoint, now)?,
            Command::Unsubscribe { subscription } => self.unsubscribe(caller, subscription)?,
            Command::Rate {
                subscription,
                rating,
            } => self.rate(caller, subscription, rating, now)?,
            Command::PostDeposit { advert, amount } => self.post_deposit(caller, advert, amount)?,
            Command::Takedown { deposit } => self.takedown(caller, deposit, now)?,
            Command::Adjudicate {
                deposit,
                challenge,
                proof,
            } => self.adjudicate(caller, deposit, &challenge, &proof)?,
            Command::Reclaim { deposit } => self.reclaim(caller, deposit, now)?,
        };
        self.seq = now;
        self.log.push(LogRecord {
            seq: now,
            caller: caller.to_string(),
            command,
            result: event.clone(),
        });
        Ok(event)
    }

    fn register(
        &mut self,
        caller: &str,
        payment: Tokens,
        keys: PublicKeys,
    ) -> Result<Event, MarketError> {
        if self.parties.contains_key(caller) {
            return Err(MarketError::AlreadyRegistered {
                party: caller.to_string(),
            });
        }
        if !payment.is_positive() {
            return Err(MarketError::InvalidAmount {
                what: "registration payment",
                value: payment.to_string(),
            });
        }
        let prior = pob_prior(payment, self.config.burn_baseline)?;
        self.parties.insert(
            caller.to_string(),
            Party {
                id: caller.to_string(),
                keys,
                burned: payment,
                balance: Tokens::ZERO,
            },
        );
        self.ratings.insert(caller.to_string(), Evidence::EMPTY);
        self.burned += payment;
        Ok(Event::Registered {
            party: caller.to_string(),
            burned: payment,
            prior,
        })
    }

    fn mint(&mut self, caller: &str, amount: Tokens) -> Result<Event, MarketError> {
        if !amount.is_positive() {
            return Err(MarketError::InvalidAmount {
                what: "mint amount",
                value: amount.to_string(),
            });
        }
        let party = self.parties.get_mut(caller).expect("checked registered");
        party.balance += amount;
        let balance = party.balance;
        self.minted += amount;
        Ok(Event::Minted {
            party: caller.to_string(),
            amount,
            balance,
        })
    }

    fn advertise(&mut self, caller: &str, tags: AdvertTags) -> Result<Event, MarketError> {
        tags.validate()?;
        let id = self.next_advert;
        self.next_advert += 1;
        self.adverts.insert(
            id,
            Advert {
                id,
                publisher: caller.to_string(),
                tags,
                offers: BTreeSet::new(),
                subscriptions: BTreeSet::new(),
            },
        );
        Ok(Event::Advertised { advert: id })
    }

    fn rm_advert(&mut self, caller: &str, advert_id: u64) -> Result<Event, MarketError> {
        let advert = self
            .adverts
            .get(&advert_id)
            .ok_or(MarketError::UnknownAdvert { id: advert_id })?;
        if advert.publisher != caller {
            return Err(MarketError::Unauthorized {
                party: caller.to_string(),
                action: "remove an advert they do not publish",
            });
        }
        let advert = self.adverts.remove(&advert_id).expect("checked present");
        let mut refunded_offers = Vec::new();
        for offer_id in &advert.offers {
            let offer = self.offers.remove(offer_id).expect("advert offer set consistent");
            let refund = offer.fee + offer.deposit;
            self.escrow -= refund;
            self.parties
                .get_mut(&offer.maker)
                .expect("offer maker registered")
                .balance += refund;
            refunded_offers.push(OfferRefund {
                offer: offer.id,
                maker: offer.maker,
                fee: offer.fee,
                deposit: offer.deposit,
            });
        }
        let mut forfeited_subscriptions = Vec::new();
        let mut removed_subscriptions = Vec::new();
        for sub_id in &advert.subscriptions {
            let sub = self
                .subscriptions
                .remove(sub_id)
                .expect("advert subscription set consistent");
            if !sub.rated {
                self.escrow -= sub.deposit;
                self.forfeited += sub.deposit;
                forfeited_subscriptions.push(SubscriptionForfeit {
                    subscription: sub.id,
                    subscriber: sub.subscriber,
                    deposit: sub.deposit,
                });
            }
            removed_subscriptions.push(sub.id);
        }
        Ok(Event::AdvertRemoved {
            advert: advert_id,
            refunded_offers,
            forfeited_subscriptions,
            removed_subscriptions,
        })
    }

    fn mk_offer(
        &mut self,
        caller: &str,
        advert_id: u64,
        fee: Tokens,
        deposit: Tokens,
    ) -> Result<Event, MarketError> {
        if !self.adverts.contains_key(&advert_id) {
            return Err(MarketError::UnknownAdvert { id: advert_id });
        }
        if fee.is_negative() {
            return Err(MarketError::InvalidAmount {
                what: "offer fee",
                value: fee.to_string(),
            });
        }
        if !deposit.is_positive() {
            return Err(MarketError::InvalidAmount {
                what: "offer deposit",
                value: deposit.to_string(),
            });
        }
        let needed = fee + deposit;
        let party = self.parties.get(caller).expect("checked registered");
        if party.balance < needed {
            return Err(MarketError::InsufficientBalance {
                party: caller.to_string(),
                needed,
                available: party.balance,
            });
        }
        let id = self.next_offer;
        self.next_offer += 1;
        self.parties.get_mut(caller).expect("checked").balance -= needed;
        self.escrow += needed;
        self.offers.insert(
            id,
            Offer {
                id,
                advert: advert_id,
                maker: caller.to_string(),
                fee,
                deposit,
            },
        );
        self.adverts
            .get_mut(&advert_id)
            .expect("checked")
            .offers
            .insert(id);
        Ok(Event::OfferMade {
            offer: id,
            advert: advert_id,
            maker: caller.to_string(),
            escrowed: needed,
        })
    }

    fn del_offer(&mut self, caller: &str, offer_id: u64) -> Result<Event, MarketError> {
        let offer = self
            .offers
            .get(&offer_id)
            .ok_or(MarketError::UnknownOffer { id: offer_id })?;
        let publisher = &self
            .adverts
            .get(&offer.advert)
            .expect("offer references live advert")
            .publisher;
        if caller != offer.maker && caller != *publisher {
            return Err(MarketError::Unauthorized {
                party: caller.to_string(),
                action: "delete an offer they neither made nor received",
            });
        }
        let offer = self.offers.remove(&offer_id).expect("checked present");
        self.adverts
            .get_mut(&offer.advert)
            .expect("checked")
            .offers
            .remove(&offer_id);
        let refund = offer.fee + offer.deposit;
        self.escrow -= refund;
        self.parties
            .get_mut(&offer.maker)
            .expect("maker registered")
            .balance += refund;
        Ok(Event::OfferDeleted {
            offer: offer_id,
            maker: offer.maker,
            refunded: refund,
        })
    }

    fn acc_offer(
        &mut self,
        caller: &str,
        offer_id: u64,
        sealed_endpoint: String,
        now: u64,
    ) -> Result<Event, MarketError> {
        let offer = self
            .offers
            .get(&offer_id)
            .ok_or(MarketError::UnknownOffer { id: offer_id })?;
        let advert_id = offer.advert;
        let publisher = self
            .adverts
            .get(&advert_id)
            .expect("offer references live advert")
            .publisher
            .clone();
        if caller != publisher {
            return Err(MarketError::Unauthorized {
                party: caller.to_string(),
                action: "accept an offer on an advert they do not publish",
            });
        }
        let offer = self.offers.remove(&offer_id).expect("checked present");
        let id = self.next_subscription;
        self.next_subscription += 1;
        // Fee leaves escrow for the publisher; the rating bond stays put.
        self.escrow -= offer.fee;
        self.parties
            .get_mut(&publisher)
            .expect("publisher registered")
            .balance += offer.fee;
        let advert = self.adverts.get_mut(&advert_id).expect("checked");
        advert.offers.remove(&offer_id);
        advert.subscriptions.insert(id);
        let self_dealing = offer.maker == publisher;
        self.subscriptions.insert(
            id,
            Subscription {
                id,
                advert: advert_id,
                subscriber: offer.maker.clone(),
                rated: false,
                fee: offer.fee,
                deposit: offer.deposit,
                sealed_endpoint,
                created_seq: now,
                ratings_submitted: 0,
                last_positive: None,
            },
        );
        Ok(Event::Accepted {
            subscription: id,
            offer: offer_id,
            advert: advert_id,
            subscriber: offer.maker,
            fee: offer.fee,
            deposit: offer.deposit,
            self_dealing,
        })
    }

    fn unsubscribe(&mut self, caller: &str, sub_id: u64) -> Result<Event, MarketError> {
        let sub = self
            .subscriptions
            .get(&sub_id)
            .ok_or(MarketError::UnknownSubscription { id: sub_id })?;
        let publisher = &self
            .adverts
            .get(&sub.advert)
            .expect("subscription references live advert")
            .publisher;
        if caller != sub.subscriber && caller != *publisher {
            return Err(MarketError::Unauthorized {
                party: caller.to_string(),
                action: "end a subscription they are not a party to",
            });
        }
        let sub = self.subscriptions.remove(&sub_id).expect("checked present");
        self.adverts
            .get_mut(&sub.advert)
            .expect("checked")
            .subscriptions
            .remove(&sub_id);
        let forfeited = if sub.rated {
            None
        } else {
            self.escrow -= sub.deposit;
            self.forfeited += sub.deposit;
            Some(sub.deposit)
        };
        Ok(Event::Unsubscribed {
            subscription: sub_id,
            forfeited,
        })
    }

    fn rate(
        &mut self,
        caller: &str,
        sub_id: u64,
        rating: f64,
        now: u64,
    ) -> Result<Event, MarketError> {
        let sub = self
            .subscriptions
            .get(&sub_id)
            .ok_or(MarketError::UnknownSubscription { id: sub_id })?;
        if caller != sub.subscriber {
            return Err(MarketError::Unauthorized {
                party: caller.to_string(),
                action: "rate a subscription they do not hold",
            });
        }
        if !(rating.is_finite() && (0.0..=1.0).contains(&rating)) {
            return Err(MarketError::InvalidAmount {
                what: "rating",
                value: rating.to_string(),
            });
        }
        if sub.ratings_submitted >= 2 {
            return Err(MarketError::RatingLimit {
                subscription: sub_id,
            });
        }
        let deadline = sub.created_seq + self.config.rate_deadline;
        if now > deadline {
            return Err(MarketError::RateDeadlineExpired {
                subscription: sub_id,
                deadline,
            });
        }
        let publisher = self
            .adverts
            .get(&sub.advert)
            .expect("subscription references live advert")
            .publisher
            .clone();
        let positive = rating >= 0.5;
        let evidence = self.ratings.entry(publisher.clone()).or_default();
        let sub = self.subscriptions.get_mut(&sub_id).expect("checked present");
        let refunded = if sub.ratings_submitted == 0 {
            evidence.record(positive);
            sub.rated = true;
            Some(sub.deposit)
        } else {
            // Finalization: replace the earlier contribution, no refund.
            evidence.unrecord(sub.last_positive.expect("first rating recorded"));
            evidence.record(positive);
            None
        };
        sub.ratings_submitted += 1;
        sub.last_positive = Some(positive);
        if let Some(deposit) = refunded {
            self.escrow -= deposit;
            self.parties
                .get_mut(caller)
                .expect("checked registered")
                .balance += deposit;
        }
        Ok(Event::Rated {
            subscription: sub_id,
            publisher,
            positive,
            refunded,
        })
    }

    fn post_deposit(
        &mut self,
        caller: &str,
        advert_id: u64,
        amount: Tokens,
    ) -> Result<Event, MarketError> {
        let advert = self
            .adverts
            .get(&advert_id)
            .ok_or(MarketError::UnknownAdvert { id: advert_id })?;
        if advert.publisher != caller {
            return Err(MarketError::Unauthorized {
                party: caller.to_string(),
                action: "post a deposit for an advert they do not publish",
            });
        }
        if !amount.is_positive() {
            return Err(MarketError::InvalidAmount {
                what: "stream deposit",
                value: amount.to_string(),
            });
        }
        if self
            .deposits
            .values()
            .any(|d| d.advert == advert_id && d.slashable())
        {
            return Err(MarketError::DepositExists { advert: advert_id });
        }
        let party = self.parties.get(caller).expect("checked registered");
        if party.balance < amount {
            return Err(MarketError::InsufficientBalance {
                party: caller.to_string(),
                needed: amount,
                available: party.balance,
            });
        }
        let id = self.next_deposit;
        self.next_deposit += 1;
        self.parties.get_mut(caller).expect("checked").balance -= amount;
        self.escrow += amount;
        self.deposits.insert(
            id,
            StreamDeposit {
                id,
                advert: advert_id,
                producer: caller.to_string(),
                amount,
                status: DepositStatus::Active,
            },
        );
        Ok(Event::DepositPosted {
            deposit: id,
            advert: advert_id,
            amount,
        })
    }

    fn takedown(&mut self, caller: &str, deposit_id: u64, now: u64) -> Result<Event, MarketError> {
        let deposit = self
            .deposits
            .get(&deposit_id)
            .ok_or(MarketError::UnknownDeposit { id: deposit_id })?;
        if deposit.producer != caller {
            return Err(MarketError::Unauthorized {
                party: caller.to_string(),
                action: "take down a stream they do not produce",
            });
        }
        match deposit.status {
            DepositStatus::Active => {}
            DepositStatus::TakenDown { .. } => {
                return Err(MarketError::AlreadyTakenDown { deposit: deposit_id })
            }
            _ => return Err(MarketError::DepositClosed { deposit: deposit_id }),
        }
        self.deposits
            .get_mut(&deposit_id)
            .expect("checked present")
            .status = DepositStatus::TakenDown { at_seq: now };
        Ok(Event::TakenDown {
            deposit: deposit_id,
            at_seq: now,
        })
    }

    fn adjudicate(
        &mut self,
        caller: &str,
        deposit_id: u64,
        challenge: &Challenge,
        proof: &EquivocationProof,
    ) -> Result<Event, MarketError> {
        let deposit = self
            .deposits
            .get(&deposit_id)
            .ok_or(MarketError::UnknownDeposit { id: deposit_id })?;
        if !deposit.slashable() {
            return Err(MarketError::DepositClosed { deposit: deposit_id });
        }
        let challenger = challenge.challenger.clone();
        if !self.parties.contains_key(&challenger) {
            return Err(MarketError::UnknownParty { id: challenger });
        }
        let producer_key = self
            .parties
            .get(&deposit.producer)
            .expect("deposit producer registered")
            .keys
            .verify;
        if !challenge.verify(&producer_key) {
            return Err(MarketError::InvalidProof {
                detail: "challenge signature does not verify under the producer key".into(),
            });
        }
        if proof.index != challenge.index {
            return Err(MarketError::InvalidProof {
                detail: format!(
                    "proof is for index {}, challenge for index {}",
                    proof.index, challenge.index
                ),
            });
        }
        if proof.first.0 != challenge.chain_hash || proof.first.1 != challenge.signature {
            return Err(MarketError::InvalidProof {
                detail: "proof does not include the challenged chain head".into(),
            });
        }
        if !proof.verify(&producer_key) {
            return Err(MarketError::InvalidProof {
                detail: "equivocation proof does not verify under the producer key".into(),
            });
        }
        let amount = deposit.amount;
        let total_parts =
            i128::from(self.config.challenger_parts) + i128::from(self.config.prover_parts);
        let challenger_milli = (i128::from(amount.milli())
            * i128::from(self.config.challenger_parts)
            / total_parts) as i64;
        let challenger_share = Tokens::from_milli(challenger_milli);
        let prover_share = amount - challenger_share;
        self.escrow -= amount;
        self.parties
            .get_mut(&challenger)
            .expect("checked registered")
            .balance += challenger_share;
        self.parties
            .get_mut(caller)
            .expect("checked registered")
            .balance += prover_share;
        self.deposits
            .get_mut(&deposit_id)
            .expect("checked present")
            .status = DepositStatus::Slashed;
        Ok(Event::Adjudicated {
            deposit: deposit_id,
            challenger,
            prover: caller.to_string(),
            challenger_share,
            prover_share,
        })
    }

    fn reclaim(&mut self, caller: &str, deposit_id: u64, now: u64) -> Result<Event, MarketError> {
        let deposit = self
            .deposits
            .get(&deposit_id)
            .ok_or(MarketError::UnknownDeposit { id: deposit_id })?;
        if deposit.producer != caller {
            return Err(MarketError::Unauthorized {
                party: caller.to_string(),
                action: "reclaim a deposit they did not post",
            });
        }
        let at_seq = match deposit.status {
            DepositStatus::TakenDown { at_seq } => at_seq,
            DepositStatus::Active => {
                return Err(MarketError::NotTakenDown { deposit: deposit_id })
            }
            _ => return Err(MarketError::DepositClosed { deposit: deposit_id }),
        };
        let available_at = at_seq + self.config.reclaim_delay;
        if now < available_at {
            return Err(MarketError::ReclaimTooEarly {
                deposit: deposit_id,
                available_at,
                now,
            });
        }
        let amount = deposit.amount;
        self.escrow -= amount;
        self.parties
            .get_mut(caller)
            .expect("checked registered")
            .balance += amount;
        self.deposits
            .get_mut(&deposit_id)
            .expect("checked present")
            .status = DepositStatus::Reclaimed;
        Ok(Event::Reclaimed {
            deposit: deposit_id,
            amount,
        })
    }

    /// Trust score for a registered party under the given engine config.
    pub fn trust_of(&self, party: &str, cfg: &TrustConfig) -> Result<TrustScore, MarketError> {
        let record = self
            .parties
            .get(party)
            .ok_or_else(|| MarketError::UnknownParty {
                id: party.to_string(),
            })?;
        let evidence = self.ratings.get(party).copied().unwrap_or(Evidence::EMPTY);
        Ok(score(&evidence, record.burned, cfg)?)
    }

    /// Exact ledger identity: balances + escrow + forfeited tokens must
    /// equal all inflows (mint plus registration payments) minus burns.
    /// Registration payments are burned whole, so the right side reduces to
    /// the minted total.
    pub fn check_conservation(&self) -> Result<(), ConservationError> {
        let balances: Tokens = self.parties.values().map(|p| p.balance).sum();
        let held = balances + self.escrow + self.forfeited;
        let inflow = self.minted + self.burned; // mint + registration payments
        let expected = inflow - self.burned;
        if held != expected {
            return Err(ConservationError {
                held,
                expected,
                balances,
                escrow: self.escrow,
                forfeited: self.forfeited,
            });
        }
        Ok(())
    }

    /// What escrow should contain, recomputed from first principles: live
    /// offers, unrated rating bonds, and slashable stream deposits. Used by
    /// audits; equals `self.escrow` in any reachable state.
    pub fn expected_escrow(&self) -> Tokens {
        let offers: Tokens = self.offers.values().map(|o| o.fee + o.deposit).sum();
        let bonds: Tokens = self
            .subscriptions
            .values()
            .filter(|s| !s.rated)
            .map(|s| s.deposit)
            .sum();
        let deposits: Tokens = self
            .deposits
            .values()
            .filter(|d| d.slashable())
            .map(|d| d.amount)
            .sum();
        offers + bonds + deposits
    }
}

/// Conservation violation details (should be unreachable).
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error(
    "ledger out of balance: holds {held} (balances {balances} + escrow {escrow} + forfeited {forfeited}), expected {expected}"
)]
pub struct ConservationError {
    pub held: Tokens,
    pub expected: Tokens,
    pub balances: Tokens,
    pub escrow: Tokens,
    pub forfeited: Tokens,
}

/// Replay failures, naming the offending log position (0-based).
#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("invalid config: {0}")]
    Config(MarketError),
    #[error("log record {position} (seq {seq}): command rejected on replay: {source}")]
    Rejected {
        position: usize,
        seq: u64,
        source: MarketError,
    },
    #[error("log record {position}: seq {logged} in log, {replayed} on replay")]
    SeqMismatch {
        position: usize,
        logged: u64,
        replayed: u64,
    },
    #[error("log record {position} (seq {seq}): event diverged on replay")]
    EventMismatch { position: usize, seq: u64 },
}

/// Rebuilds a state by folding the log over the empty state. The result is
/// structurally equal to the state that produced the log.
pub fn replay(config: MarketConfig, records: &[LogRecord]) -> Result<MarketState, ReplayError> {
    let mut state = MarketState::new(config).map_err(ReplayError::Config)?;
    for (position, record) in records.iter().enumerate() {
        let event = state
            .apply(&record.caller, record.command.clone())
            .map_err(|source| ReplayError::Rejected {
                position,
                seq: record.seq,
                source,
            })?;
        if state.seq != record.seq {
            return Err(ReplayError::SeqMismatch {
                position,
                logged: record.seq,
                replayed: state.seq,
            });
        }
        if event != record.result {
            return Err(ReplayError::EventMismatch {
                position,
                seq: record.seq,
            });
        }
    }
    Ok(state)
}

/// Writes a command log as one JSON record per line.
pub fn write_log(out: &mut impl Write, records: &[LogRecord]) -> io::Result<()> {
    for record in records {
        let line = serde_json::to_string(record).expect("log records serialize");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Log file read/parse failures.
#[derive(Debug, Error)]
pub enum LogReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("log line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

/// Reads a line-delimited command log; blank lines are ignored. Errors name
/// the 1-based line number.
pub fn read_log(input: &mut impl BufRead) -> Result<Vec<LogRecord>, LogReadError> {
    let mut records = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| LogReadError::Parse {
            line: idx + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;
    use crate::stream::StreamProducer;

    fn keys(name: &str) -> PublicKeys {
        KeyPair::from_seed(name.as_bytes()).public()
    }

    fn tok(whole: i64) -> Tokens {
        Tokens::from_whole(whole)
    }

    fn fresh() -> MarketState {
        MarketState::new(MarketConfig::default()).unwrap()
    }

    /// Registers `name` with a baseline burn and `funds` minted tokens.
    fn join(state: &mut MarketState, name: &str, funds: i64) {
        state
            .apply(
                name,
                Command::Register {
                    payment: tok(1),
                    keys: keys(name),
                },
            )
            .unwrap();
        if funds > 0 {
            state
                .apply(name, Command::Mint { amount: tok(funds) })
                .unwrap();
        }
    }

    fn example_tags() -> AdvertTags {
        AdvertTags {
            throughput_per_hour: 10.0,
            price_per_alert: tok(1),
            detector: "IDS".into(),
            network: "industrial".into(),
            attack_types: vec!["DDoS".into(), "botnet".into()],
        }
    }

    /// register ×2, advertise, offer, accept — the backbone of most tests.
    fn subscribed() -> (MarketState, u64, u64) {
        let mut state = fresh();
        join(&mut state, "seller", 0);
        join(&mut state, "buyer", 10);
        state
            .apply("seller", Command::Advertise { tags: example_tags() })
            .unwrap();
        state
            .apply(
                "buyer",
                Command::MkOffer {
                    advert: 1,
                    fee: tok(5),
                    deposit: tok(1),
                },
            )
            .unwrap();
        let event = state
            .apply(
                "seller",
                Command::AccOffer {
                    offer: 1,
                    sealed_endpoint: "c2VhbGVk".into(),
                },
            )
            .unwrap();
        let Event::Accepted { subscription, advert, .. } = event else {
            panic!("expected acceptance event");
        };
        (state, advert, subscription)
    }

    #[test]
    fn registration_rules() {
        let mut state = fresh();
        let event = state
            .apply(
                "alice",
                Command::Register {
                    payment: tok(1),
                    keys: keys("alice"),
                },
            )
            .unwrap();
        let Event::Registered { prior, burned, .. } = event else {
            panic!()
        };
        assert_eq!(burned, tok(1));
        assert!((prior - 0.5).abs() < 1e-12, "baseline burn gives prior 1/2");

        // Duplicate registration rejected.
        assert!(matches!(
            state.apply(
                "alice",
                Command::Register {
                    payment: tok(1),
                    keys: keys("alice")
                }
            ),
            Err(MarketError::AlreadyRegistered { .. })
        ));
        // Zero payment rejected.
        assert!(matches!(
            state.apply(
                "bob",
                Command::Register {
                    payment: Tokens::ZERO,
                    keys: keys("bob")
                }
            ),
            Err(MarketError::InvalidAmount { .. })
        ));
        // 20x baseline lands near the 0.8145 prior.
        let event = state
            .apply(
                "whale",
                Command::Register {
                    payment: tok(20),
                    keys: keys("whale"),
                },
            )
            .unwrap();
        let Event::Registered { prior, .. } = event else { panic!() };
        assert!((prior - 0.8145512).abs() < 1e-6, "{prior}");
        // Burned tokens never reappear anywhere.
        assert_eq!(state.burned, tok(21));
        state.check_conservation().unwrap();
    }

    #[test]
    fn unregistered_callers_bounce_off_everything() {
        let mut state = fresh();
        let before = state.clone();
        for command in [
            Command::Mint { amount: tok(1) },
            Command::Advertise { tags: example_tags() },
            Command::MkOffer {
                advert: 1,
                fee: tok(1),
                deposit: tok(1),
            },
            Command::Rate {
                subscription: 1,
                rating: 1.0,
            },
        ] {
            assert!(matches!(
                state.apply("ghost", command),
                Err(MarketError::NotRegistered { .. })
            ));
        }
        assert_eq!(state, before, "rejections leave no trace");
    }

    #[test]
    fn offer_lifecycle_ledger_arithmetic() {
        let mut state = fresh();
        join(&mut state, "seller", 0);
        join(&mut state, "buyer", 10);
        state
            .apply("seller", Command::Advertise { tags: example_tags() })
            .unwrap();

        // balance 10, fee 5, deposit 1 → balance 4, escrow 6.
        state
            .apply(
                "buyer",
                Command::MkOffer {
                    advert: 1,
                    fee: tok(5),
                    deposit: tok(1),
                },
            )
            .unwrap();
        assert_eq!(state.parties["buyer"].balance, tok(4));
        assert_eq!(state.escrow, tok(6));
        state.check_conservation().unwrap();

        // Insufficient balance leaves state unchanged.
        let before = state.clone();
        assert!(matches!(
            state.apply(
                "buyer",
                Command::MkOffer {
                    advert: 1,
                    fee: tok(5),
                    deposit: tok(1)
                }
            ),
            Err(MarketError::InsufficientBalance { .. })
        ));
        assert_eq!(state, before);

        // Zero deposit rejected.
        assert!(matches!(
            state.apply(
                "buyer",
                Command::MkOffer {
                    advert: 1,
                    fee: tok(1),
                    deposit: Tokens::ZERO
                }
            ),
            Err(MarketError::InvalidAmount { .. })
        ));

        // Maker deletes: full refund.
        state.apply("buyer", Command::DelOffer { offer: 1 }).unwrap();
        assert_eq!(state.parties["buyer"].balance, tok(10));
        assert_eq!(state.escrow, Tokens::ZERO);
        state.check_conservation().unwrap();
    }

    #[test]
    fn publisher_turning_down_offer_refunds_maker() {
        let mut state = fresh();
        join(&mut state, "seller", 0);
        join(&mut state, "buyer", 10);
        join(&mut state, "stranger", 0);
        state
            .apply("seller", Command::Advertise { tags: example_tags() })
            .unwrap();
        state
            .apply(
                "buyer",
                Command::MkOffer {
                    advert: 1,
                    fee: tok(5),
                    deposit: tok(1),
                },
            )
            .unwrap();
        // Stranger cannot delete.
        assert!(matches!(
            state.apply("stranger", Command::DelOffer { offer: 1 }),
            Err(MarketError::Unauthorized { .. })
        ));
        // Publisher deleting refunds the *maker*.
        let event = state.apply("seller", Command::DelOffer { offer: 1 }).unwrap();
        assert_eq!(
            event,
            Event::OfferDeleted {
                offer: 1,
                maker: "buyer".into(),
                refunded: tok(6),
            }
        );
        assert_eq!(state.parties["buyer"].balance, tok(10));
        assert_eq!(state.parties["seller"].balance, Tokens::ZERO);
    }

    #[test]
    fn accepting_offer_moves_fee_and_retains_bond() {
        let (state, _, _) = subscribed();
        assert_eq!(state.parties["seller"].balance, tok(5), "fee claimed");
        assert_eq!(state.parties["buyer"].balance, tok(4));
        assert_eq!(state.escrow, tok(1), "rating bond retained");
        assert!(state.offers.is_empty(), "offer consumed");
        assert_eq!(state.subscriptions[&1].sealed_endpoint, "c2VhbGVk");
        assert!(!state.subscriptions[&1].rated);
        state.check_conservation().unwrap();
    }

    #[test]
    fn accept_twice_fails_offer_gone() {
        let (mut state, _, _) = subscribed();
        assert!(matches!(
            state.apply(
                "seller",
                Command::AccOffer {
                    offer: 1,
                    sealed_endpoint: String::new()
                }
            ),
            Err(MarketError::UnknownOffer { id: 1 })
        ));
    }

    #[test]
    fn self_dealing_is_allowed_but_flagged() {
        let mut state = fresh();
        join(&mut state, "seller", 10);
        state
            .apply("seller", Command::Advertise { tags: example_tags() })
            .unwrap();
        state
            .apply(
                "seller",
                Command::MkOffer {
                    advert: 1,
                    fee: tok(2),
                    deposit: tok(1),
                },
            )
            .unwrap();
        let event = state
            .apply(
                "seller",
                Command::AccOffer {
                    offer: 1,
                    sealed_endpoint: String::new(),
                },
            )
            .unwrap();
        let Event::Accepted { self_dealing, .. } = event else { panic!() };
        assert!(self_dealing);
        state.check_conservation().unwrap();
    }

    #[test]
    fn first_rating_refunds_bond_second_replaces_third_rejected() {
        let (mut state, _, sub) = subscribed();
        let event = state
            .apply(
                "buyer",
                Command::Rate {
                    subscription: sub,
                    rating: 0.9,
                },
            )
            .unwrap();
        assert_eq!(
            event,
            Event::Rated {
                subscription: sub,
                publisher: "seller".into(),
                positive: true,
                refunded: Some(tok(1)),
            }
        );
        assert_eq!(state.ratings["seller"], Evidence::new(1, 0));
        assert_eq!(state.parties["buyer"].balance, tok(5));
        assert_eq!(state.escrow, Tokens::ZERO);
        assert!(state.subscriptions[&sub].rated);

        // Finalization replaces the contribution; no second refund.
        let event = state
            .apply(
                "buyer",
                Command::Rate {
                    subscription: sub,
                    rating: 0.2,
                },
            )
            .unwrap();
        assert_eq!(
            event,
            Event::Rated {
                subscription: sub,
                publisher: "seller".into(),
                positive: false,
                refunded: None,
            }
        );
        assert_eq!(state.ratings["seller"], Evidence::new(0, 1));
        assert_eq!(state.parties["buyer"].balance, tok(5));

        assert!(matches!(
            state.apply(
                "buyer",
                Command::Rate {
                    subscription: sub,
                    rating: 1.0
                }
            ),
            Err(MarketError::RatingLimit { .. })
        ));
        // The boundary rating 0.5 counts positive.
        state.check_conservation().unwrap();
    }

    #[test]
    fn rating_boundary_is_positive_and_range_checked() {
        let (mut state, _, sub) = subscribed();
        assert!(matches!(
            state.apply(
                "buyer",
                Command::Rate {
                    subscription: sub,
                    rating: 1.5
                }
            ),
            Err(MarketError::InvalidAmount { .. })
        ));
        assert!(matches!(
            state.apply(
                "buyer",
                Command::Rate {
                    subscription: sub,
                    rating: f64::NAN
                }
            ),
            Err(MarketError::InvalidAmount { .. })
        ));
        state
            .apply(
                "buyer",
                Command::Rate {
                    subscription: sub,
                    rating: 0.5,
                },
            )
            .unwrap();
        assert_eq!(state.ratings["seller"], Evidence::new(1, 0));
    }

    #[test]
    fn only_subscriber_rates() {
        let (mut state, _, sub) = subscribed();
        assert!(matches!(
            state.apply(
                "seller",
                Command::Rate {
                    subscription: sub,
                    rating: 1.0
                }
            ),
            Err(MarketError::Unauthorized { .. })
        ));
        join(&mut state, "stranger", 0);
        assert!(matches!(
            state.apply(
                "stranger",
                Command::Rate {
                    subscription: sub,
                    rating: 1.0
                }
            ),
            Err(MarketError::Unauthorized { .. })
        ));
    }

    #[test]
    fn rate_deadline_counts_applied_commands() {
        let config = MarketConfig { rate_deadline: 3, ..MarketConfig::default() };
        let mut state = MarketState::new(config).unwrap();
        join(&mut state, "seller", 0);
        join(&mut state, "buyer", 10);
        state
            .apply("seller", Command::Advertise { tags: example_tags() })
            .unwrap();
        state
            .apply(
                "buyer",
                Command::MkOffer {
                    advert: 1,
                    fee: tok(1),
                    deposit: tok(1),
                },
            )
            .unwrap();
        state
            .apply(
                "seller",
                Command::AccOffer {
                    offer: 1,
                    sealed_endpoint: String::new(),
                },
            )
            .unwrap();
        let created = state.seq;
        // Two filler commands: rating at exactly created+3 still allowed.
        state.apply("buyer", Command::Mint { amount: tok(1) }).unwrap();
        state.apply("buyer", Command::Mint { amount: tok(1) }).unwrap();
        assert_eq!(state.seq, created + 2);
        state
            .apply(
                "buyer",
                Command::Rate {
                    subscription: 1,
                    rating: 1.0,
                },
            )
            .unwrap();

        // Second (finalizing) rating one step past the deadline: rejected.
        state.apply("buyer", Command::Mint { amount: tok(1) }).unwrap();
        assert!(matches!(
            state.apply(
                "buyer",
                Command::Rate {
                    subscription: 1,
                    rating: 0.0
                }
            ),
            Err(MarketError::RateDeadlineExpired { .. })
        ));
        // Rejected commands do not advance the clock.
        assert_eq!(state.seq, created + 4);
    }

    #[test]
    fn unsubscribe_semantics() {
        // Rated subscription: no token movement on unsubscribe.
        let (mut state, _, sub) = subscribed();
        state
            .apply(
                "buyer",
                Command::Rate {
                    subscription: sub,
                    rating: 1.0,
                },
            )
            .unwrap();
        let event = state
            .apply("buyer", Command::Unsubscribe { subscription: sub })
            .unwrap();
        assert_eq!(
            event,
            Event::Unsubscribed {
                subscription: sub,
                forfeited: None
            }
        );
        state.check_conservation().unwrap();

        // Publisher ending an unrated subscription forfeits the bond.
        let (mut state, _, sub) = subscribed();
        let event = state
            .apply("seller", Command::Unsubscribe { subscription: sub })
            .unwrap();
        assert_eq!(
            event,
            Event::Unsubscribed {
                subscription: sub,
                forfeited: Some(tok(1))
            }
        );
        assert_eq!(state.forfeited, tok(1));
        assert_eq!(state.escrow, Tokens::ZERO);
        state.check_conservation().unwrap();

        // Strangers cannot unsubscribe.
        let (mut state, _, sub) = subscribed();
        join(&mut state, "stranger", 0);
        assert!(matches!(
            state.apply("stranger", Command::Unsubscribe { subscription: sub }),
            Err(MarketError::Unauthorized { .. })
        ));
    }

    #[test]
    fn rm_advert_refunds_offers_and_forfeits_unrated_bonds() {
        let mut state = fresh();
        join(&mut state, "seller", 0);
        join(&mut state, "alice", 10);
        join(&mut state, "bob", 10);
        state
            .apply("seller", Command::Advertise { tags: example_tags() })
            .unwrap();
        // Two live offers (fee 5, deposit 1 each) → escrow 12.
        for who in ["alice", "bob"] {
            state
                .apply(
                    who,
                    Command::MkOffer {
                        advert: 1,
                        fee: tok(5),
                        deposit: tok(1),
                    },
                )
                .unwrap();
        }
        assert_eq!(state.escrow, tok(12));
        let event = state.apply("seller", Command::RmAdvert { advert: 1 }).unwrap();
        let Event::AdvertRemoved { refunded_offers, .. } = &event else {
            panic!()
        };
        assert_eq!(refunded_offers.len(), 2);
        assert_eq!(state.escrow, Tokens::ZERO);
        assert_eq!(state.parties["alice"].balance, tok(10));
        assert_eq!(state.parties["bob"].balance, tok(10));
        assert!(state.adverts.is_empty() && state.offers.is_empty());
        state.check_conservation().unwrap();

        // With an unrated subscription attached, its bond is forfeited.
        let (mut state, advert, sub) = subscribed();
        let event = state
            .apply("seller", Command::RmAdvert { advert })
            .unwrap();
        let Event::AdvertRemoved {
            forfeited_subscriptions,
            removed_subscriptions,
            ..
        } = &event
        else {
            panic!()
        };
        assert_eq!(forfeited_subscriptions.len(), 1);
        assert_eq!(forfeited_subscriptions[0].subscription, sub);
        assert_eq!(removed_subscriptions, &vec![sub]);
        assert_eq!(state.forfeited, tok(1));
        assert!(state.subscriptions.is_empty());
        state.check_conservation().unwrap();

        // Non-publisher cannot remove.
        let (mut state, advert, _) = subscribed();
        assert!(matches!(
            state.apply("buyer", Command::RmAdvert { advert }),
            Err(MarketError::Unauthorized { .. })
        ));
    }

    #[test]
    fn malformed_tags_rejected() {
        let mut state = fresh();
        join(&mut state, "seller", 0);
        let mut bad = example_tags();
        bad.throughput_per_hour = 0.0;
        assert!(matches!(
            state.apply("seller", Command::Advertise { tags: bad }),
            Err(MarketError::MalformedTags { .. })
        ));
        let mut bad = example_tags();
        bad.detector = "  ".into();
        assert!(matches!(
            state.apply("seller", Command::Advertise { tags: bad }),
            Err(MarketError::MalformedTags { .. })
        ));
        // Two identical valid adverts get distinct ids.
        state
            .apply("seller", Command::Advertise { tags: example_tags() })
            .unwrap();
        let event = state
            .apply("seller", Command::Advertise { tags: example_tags() })
            .unwrap();
        assert_eq!(event, Event::Advertised { advert: 2 });
    }

    fn forked_evidence(
        producer_seed: &str,
    ) -> (PublicKeys, Box<Challenge>, Box<EquivocationProof>) {
        let keys = KeyPair::from_seed(producer_seed.as_bytes());
        let public = keys.public();
        let mut honest = StreamProducer::new(keys);
        let mut forked = honest.clone();
        let alert = crate::stream::Alert {
            time: 0,
            source: "a".into(),
            target: "b".into(),
            classification: "c".into(),
            assessment: "d".into(),
            external: None,
        };
        let mut alert2 = alert.clone();
        alert2.time = 1;
        let real = honest.produce_batch(vec![alert]).unwrap();
        let fake = forked.produce_batch(vec![alert2]).unwrap();
        let challenge = Challenge {
            challenger: "challenger".into(),
            index: 0,
            chain_hash: real.chain_hash,
            signature: real.signature,
        };
        let proof = EquivocationProof {
            index: 0,
            first: (real.chain_hash, real.signature),
            second: (fake.chain_hash, fake.signature),
        };
        (public, Box::new(challenge), Box::new(proof))
    }

    /// Market with a registered producer ("seller", keyed by seed) holding a
    /// posted deposit, plus registered "challenger" and "prover".
    fn deposit_scene(amount: i64) -> (MarketState, u64, Box<Challenge>, Box<EquivocationProof>) {
        let (public, challenge, proof) = forked_evidence("seller-keys");
        let mut state = fresh();
        state
            .apply(
                "seller",
                Command::Register {
                    payment: tok(1),
                    keys: public,
                },
            )
            .unwrap();
        state
            .apply("seller", Command::Mint { amount: tok(amount) })
            .unwrap();
        join(&mut state, "challenger", 0);
        join(&mut state, "prover", 0);
        state
            .apply("seller", Command::Advertise { tags: example_tags() })
            .unwrap();
        state
            .apply(
                "seller",
                Command::PostDeposit {
                    advert: 1,
                    amount: tok(amount),
                },
            )
            .unwrap();
        (state, 1, challenge, proof)
    }

    #[test]
    fn adjudication_splits_deposit_two_to_one() {
        let (mut state, deposit, challenge, proof) = deposit_scene(9);
        assert_eq!(state.escrow, tok(9));
        let event = state
            .apply(
                "prover",
                Command::Adjudicate {
                    deposit,
                    challenge,
                    proof,
                },
            )
            .unwrap();
        assert_eq!(
            event,
            Event::Adjudicated {
                deposit,
                challenger: "challenger".into(),
                prover: "prover".into(),
                challenger_share: tok(6),
                prover_share: tok(3),
            }
        );
        assert_eq!(state.parties["challenger"].balance, tok(6));
        assert_eq!(state.parties["prover"].balance, tok(3));
        assert_eq!(state.escrow, Tokens::ZERO);
        assert_eq!(state.deposits[&deposit].status, DepositStatus::Slashed);
        state.check_conservation().unwrap();
    }

    #[test]
    fn adjudication_rejects_bad_evidence_and_duplicates() {
        let (mut state, deposit, challenge, proof) = deposit_scene(9);
        // Proof signed by a different producer key.
        let (_, foreign_challenge, foreign_proof) = forked_evidence("other-keys");
        let before = state.clone();
        assert!(matches!(
            state.apply(
                "prover",
                Command::Adjudicate {
                    deposit,
                    challenge: foreign_challenge,
                    proof: foreign_proof,
                }
            ),
            Err(MarketError::InvalidProof { .. })
        ));
        assert_eq!(state, before, "deposit intact after invalid proof");

        // Proof must include the challenged head.
        let mut detached = proof.clone();
        detached.first = detached.second;
        assert!(matches!(
            state.apply(
                "prover",
                Command::Adjudicate {
                    deposit,
                    challenge: challenge.clone(),
                    proof: detached,
                }
            ),
            Err(MarketError::InvalidProof { .. })
        ));

        // Unregistered challenger: rejected.
        let mut orphan = challenge.clone();
        orphan.challenger = "nobody".into();
        assert!(matches!(
            state.apply(
                "prover",
                Command::Adjudicate {
                    deposit,
                    challenge: orphan,
                    proof: proof.clone(),
                }
            ),
            Err(MarketError::UnknownParty { .. })
        ));

        // Valid adjudication once, then duplicates bounce.
        state
            .apply(
                "prover",
                Command::Adjudicate {
                    deposit,
                    challenge: challenge.clone(),
                    proof: proof.clone(),
                },
            )
            .unwrap();
        assert!(matches!(
            state.apply(
                "prover",
                Command::Adjudicate {
                    deposit,
                    challenge,
                    proof,
                }
            ),
            Err(MarketError::DepositClosed { .. })
        ));
        state.check_conservation().unwrap();
    }

    #[test]
    fn self_adjudication_still_conserves() {
        let (mut state, deposit, mut challenge, proof) = deposit_scene(10);
        challenge.challenger = "prover".into();
        let event = state
            .apply(
                "prover",
                Command::Adjudicate {
                    deposit,
                    challenge,
                    proof,
                },
            )
            .unwrap();
        let Event::Adjudicated {
            challenger_share,
            prover_share,
            ..
        } = event
        else {
            panic!()
        };
        assert_eq!(challenger_share + prover_share, tok(10));
        assert_eq!(state.parties["prover"].balance, tok(10));
        state.check_conservation().unwrap();
    }

    #[test]
    fn reclaim_respects_takedown_and_delay() {
        let config = MarketConfig { reclaim_delay: 3, ..MarketConfig::default() };
        let (public, _challenge, _proof) = forked_evidence("seller-keys");
        let mut state = MarketState::new(config).unwrap();
        state
            .apply(
                "seller",
                Command::Register {
                    payment: tok(1),
                    keys: public,
                },
            )
            .unwrap();
        state
            .apply("seller", Command::Mint { amount: tok(9) })
            .unwrap();
        state
            .apply("seller", Command::Advertise { tags: example_tags() })
            .unwrap();
        state
            .apply(
                "seller",
                Command::PostDeposit {
                    advert: 1,
                    amount: tok(9),
                },
            )
            .unwrap();

        // Reclaim before takedown: rejected.
        assert!(matches!(
            state.apply("seller", Command::Reclaim { deposit: 1 }),
            Err(MarketError::NotTakenDown { .. })
        ));
        state
            .apply("seller", Command::Takedown { deposit: 1 })
            .unwrap();
        let takedown_seq = state.seq;
        // Double takedown rejected.
        assert!(matches!(
            state.apply("seller", Command::Takedown { deposit: 1 }),
            Err(MarketError::AlreadyTakenDown { .. })
        ));
        // A reclaim one step before takedown + delay is rejected, and the
        // failed attempt does not tick the clock.
        state.apply("seller", Command::Mint { amount: tok(1) }).unwrap();
        assert_eq!(state.seq, takedown_seq + 1);
        assert!(matches!(
            state.apply("seller", Command::Reclaim { deposit: 1 }),
            Err(MarketError::ReclaimTooEarly { .. })
        ));
        assert_eq!(state.seq, takedown_seq + 1);
        // The reclaim command itself lands exactly at takedown + delay:
        // succeeds (boundary inclusive).
        state.apply("seller", Command::Mint { amount: tok(1) }).unwrap();
        let event = state.apply("seller", Command::Reclaim { deposit: 1 }).unwrap();
        assert_eq!(state.seq, takedown_seq + 3);
        assert_eq!(
            event,
            Event::Reclaimed {
                deposit: 1,
                amount: tok(9)
            }
        );
        assert_eq!(state.deposits[&1].status, DepositStatus::Reclaimed);
        assert_eq!(state.parties["seller"].balance, tok(2) + tok(9));
        state.check_conservation().unwrap();

        // Reclaim after reclaim: closed.
        assert!(matches!(
            state.apply("seller", Command::Reclaim { deposit: 1 }),
            Err(MarketError::DepositClosed { .. })
        ));
    }

    #[test]
    fn adjudication_blocked_after_reclaim_and_vice_versa() {
        // After a slash, reclaim is rejected.
        let (mut state, deposit, challenge, proof) = deposit_scene(9);
        state
            .apply("seller", Command::Takedown { deposit })
            .unwrap();
        state
            .apply(
                "prover",
                Command::Adjudicate {
                    deposit,
                    challenge,
                    proof,
                },
            )
            .unwrap();
        assert!(matches!(
            state.apply("seller", Command::Reclaim { deposit }),
            Err(MarketError::DepositClosed { .. })
        ));
        state.check_conservation().unwrap();
    }

    #[test]
    fn deposit_uniqueness_per_advert() {
        let (mut state, _, _, _) = deposit_scene(9);
        state.apply("seller", Command::Mint { amount: tok(5) }).unwrap();
        assert!(matches!(
            state.apply(
                "seller",
                Command::PostDeposit {
                    advert: 1,
                    amount: tok(5)
                }
            ),
            Err(MarketError::DepositExists { .. })
        ));
        // Only the publisher may post.
        join(&mut state, "outsider", 5);
        assert!(matches!(
            state.apply(
                "outsider",
                Command::PostDeposit {
                    advert: 1,
                    amount: tok(5)
                }
            ),
            Err(MarketError::Unauthorized { .. })
        ));
    }

    #[test]
    fn trust_of_composes_evidence_and_burn() {
        let (mut state, _, sub) = subscribed();
        let cfg = TrustConfig::default();
        // Fresh party, baseline burn: prior-only score is 0.5.
        let score = state.trust_of("seller", &cfg).unwrap();
        assert_eq!(score.certainty, 0.0);
        assert!((score.expectation - 0.5).abs() < 1e-12);
        // One positive rating moves the expectation up.
        state
            .apply(
                "buyer",
                Command::Rate {
                    subscription: sub,
                    rating: 1.0,
                },
            )
            .unwrap();
        let rated = state.trust_of("seller", &cfg).unwrap();
        assert!(rated.expectation > 0.5, "{rated:?}");
        assert!(matches!(
            state.trust_of("nobody", &cfg),
            Err(MarketError::UnknownParty { .. })
        ));
    }

    #[test]
    fn escrow_decomposition_matches() {
        let (mut state, advert, _) = subscribed();
        state
            .apply("buyer", Command::Mint { amount: tok(20) })
            .unwrap();
        state
            .apply(
                "buyer",
                Command::MkOffer {
                    advert,
                    fee: tok(3),
                    deposit: tok(2),
                },
            )
            .unwrap();
        state
            .apply("seller", Command::Mint { amount: tok(9) })
            .unwrap();
        state
            .apply(
                "seller",
                Command::PostDeposit {
                    advert,
                    amount: tok(9),
                },
            )
            .unwrap();
        assert_eq!(state.escrow, state.expected_escrow());
        assert_eq!(state.escrow, tok(1) + tok(5) + tok(9));
        state.check_conservation().unwrap();
    }

    #[test]
    fn replay_reproduces_state_and_detects_divergence() {
        let (mut state, _, sub) = subscribed();
        state
            .apply(
                "buyer",
                Command::Rate {
                    subscription: sub,
                    rating: 0.9,
                },
            )
            .unwrap();
        state
            .apply("buyer", Command::Unsubscribe { subscription: sub })
            .unwrap();

        // Interleave a rejected command: it is not logged and replay is
        // unaffected.
        assert!(state
            .apply("buyer", Command::DelOffer { offer: 99 })
            .is_err());

        let replayed = replay(state.config.clone(), &state.log).unwrap();
        assert_eq!(replayed, state);

        // Tamper with a logged event: replay flags the exact position.
        let mut tampered = state.log.clone();
        let last = tampered.len() - 1;
        tampered[last].result = Event::Advertised { advert: 42 };
        match replay(state.config.clone(), &tampered) {
            Err(ReplayError::EventMismatch { position, .. }) => assert_eq!(position, last),
            other => panic!("expected event mismatch, got {other:?}"),
        }

        // Tamper with a command so it gets rejected mid-replay.
        let mut broken = state.log.clone();
        broken[2].caller = "ghost".into();
        assert!(matches!(
            replay(state.config.clone(), &broken),
            Err(ReplayError::Rejected { position: 2, .. })
        ));

        // Empty log → empty state.
        let empty = replay(MarketConfig::default(), &[]).unwrap();
        assert_eq!(empty, MarketState::new(MarketConfig::default()).unwrap());
    }

    #[test]
    fn log_round_trips_through_jsonl() {
        let (state, _, _) = subscribed();
        let mut buf = Vec::new();
        write_log(&mut buf, &state.log).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), state.log.len());
        assert!(text.lines().all(|l| l.starts_with("{\"seq\":")));
        let parsed = read_log(&mut buf.as_slice()).unwrap();
        assert_eq!(parsed, state.log);
        let replayed = replay(state.config.clone(), &parsed).unwrap();
        assert_eq!(replayed, state);

        // Parse errors carry the line number.
        let mut mangled = text.clone();
        mangled.push_str("not json\n");
        match read_log(&mut mangled.as_bytes()) {
            Err(LogReadError::Parse { line, .. }) => {
                assert_eq!(line, state.log.len() + 1)
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let config = MarketConfig { challenger_parts: 1, ..MarketConfig::default() };
        assert!(MarketState::new(config).is_err());
        let config = MarketConfig { burn_baseline: Tokens::ZERO, ..MarketConfig::default() };
        assert!(MarketState::new(config).is_err());
    }
}
