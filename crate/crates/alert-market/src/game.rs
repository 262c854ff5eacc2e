//! The two-player alert-trading game induced by the attacker chain.
//!
//! Each round has three phases: players may *buy* the other player's alert
//! bit about the previous round (trade phase), then choose whether to
//! *defend* (defense phase), then attacks land. Defending costs `delta` and
//! absorbs any attack; an undefended attack costs `alpha`. Selling an alert
//! costs the seller a fixed disclosure cost `s` (leakage of sensitive detail)
//! and earns the seller's listed price; the buyer pays that price, and only
//! pays when an alert actually exists (the seller was attacked).
//!
//! The interesting question is when the bit is worth buying. With
//! `p*alpha < delta < q*alpha` (the *conditional* regime) the bit has
//! decision value exactly after a player's own "attacked, then quiet"
//! pattern, and the analysis in this module derives the highest price at
//! which buying is still a best response — which is also the seller's
//! revenue-maximizing price. Outside that window defense is degenerate:
//! always defend (`delta <= p*alpha`) or never defend (`q*alpha <= delta`),
//! and information is worthless.
//!
//! All ledger arithmetic is exact ([`Tokens`]); the expected-cost analysis is
//! in `f64` with an explicit relative tie tolerance so engineered
//! indifference points classify stably.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacker::{p_prime, AttackState, ChainError, ChainParams};
use crate::tokens::Tokens;

/// Relative tolerance for cost/price comparisons. Ties (within tolerance)
/// resolve toward the action the analysis prefers at exact indifference:
/// buying and defending.
pub const TIE_EPS: f64 = 1e-9;

/// `a <= b`, allowing `a` to exceed `b` by a relative `TIE_EPS` margin.
pub(crate) fn approx_le(a: f64, b: f64) -> bool {
    a <= b + TIE_EPS * a.abs().max(b.abs()).max(1.0)
}

/// The opposite player index.
pub const fn other(player: usize) -> usize {
    1 - player
}

/// Full parameter set for the trading game.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub chain: ChainParams,
    /// Cost of an undefended attack.
    pub alpha: Tokens,
    /// Cost of defending for one round.
    pub delta: Tokens,
    /// Seller's fixed disclosure cost per sold alert.
    pub disclosure: Tokens,
    /// `prices[i]` is the price player `i` charges for their alert bit.
    pub prices: [Tokens; 2],
}

/// Parameter or precondition violations in the game analysis.
#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("{name} must be {constraint}, got {value}")]
    InvalidAmount {
        name: &'static str,
        constraint: &'static str,
        value: Tokens,
    },
    #[error("game analysis requires p < q strictly, got p = {p}, q = {q}")]
    EqualRates { p: f64, q: f64 },
    #[error("player index must be 0 or 1, got {0}")]
    BadPlayer(usize),
    #[error("simulation horizon must be at least 1")]
    ZeroHorizon,
    #[error("regime is {regime}, not conditional: {detail}")]
    NotConditional { regime: Regime, detail: String },
    #[error(
        "disclosure cost violates s <= q*alpha - delta: s = {s}, bound = {bound}; \
         selling at any acceptable price loses money"
    )]
    DisclosureExceedsDefenseGain { s: f64, bound: f64 },
    #[error(
        "disclosure cost violates s <= (1-q)/q * (delta - p*alpha): s = {s}, bound = {bound}; \
         selling at any acceptable price loses money"
    )]
    DisclosureExceedsIndifference { s: f64, bound: f64 },
}

impl GameParams {
    pub fn new(
        chain: ChainParams,
        alpha: Tokens,
        delta: Tokens,
        disclosure: Tokens,
        prices: [Tokens; 2],
    ) -> Result<Self, GameError> {
        let params = GameParams {
            chain,
            alpha,
            delta,
            disclosure,
            prices,
        };
        params.validate()?;
        Ok(params)
    }

    /// Re-checks every invariant (fields are public, so a struct literal can
    /// bypass [`GameParams::new`]).
    pub fn validate(&self) -> Result<(), GameError> {
        ChainParams::new(self.chain.p, self.chain.q)?;
        if self.chain.p >= self.chain.q {
            return Err(GameError::EqualRates {
                p: self.chain.p,
                q: self.chain.q,
            });
        }
        if !self.alpha.is_positive() {
            return Err(GameError::InvalidAmount {
                name: "alpha",
                constraint: "positive",
                value: self.alpha,
            });
        }
        if !self.delta.is_positive() {
            return Err(GameError::InvalidAmount {
                name: "delta",
                constraint: "positive",
                value: self.delta,
            });
        }
        if self.disclosure.is_negative() {
            return Err(GameError::InvalidAmount {
                name: "disclosure cost",
                constraint: "non-negative",
                value: self.disclosure,
            });
        }
        for (i, price) in self.prices.iter().enumerate() {
            if price.is_negative() {
                return Err(GameError::InvalidAmount {
                    name: if i == 0 { "price0" } else { "price1" },
                    constraint: "non-negative",
                    value: *price,
                });
            }
        }
        Ok(())
    }

    /// The worked-example configuration used throughout docs and tests:
    /// `p = 0.05`, `q = 0.6`, `alpha = 10`, `delta = 2`, `s = 0.2`, both
    /// prices 1 token (which is also the optimal price here).
    pub fn canonical() -> GameParams {
        GameParams {
            chain: ChainParams { p: 0.05, q: 0.6 },
            alpha: Tokens::from_whole(10),
            delta: Tokens::from_whole(2),
            disclosure: Tokens::from_milli(200),
            prices: [Tokens::from_whole(1), Tokens::from_whole(1)],
        }
    }

    /// Price charged to `player` when they buy (the other player's price).
    pub fn price_paid_by(&self, player: usize) -> Tokens {
        self.prices[other(player)]
    }
}

// ---------------------------------------------------------------------------
// Per-round realized costs (exact integer arithmetic)
// ---------------------------------------------------------------------------

/// Trade-phase cost components for one player in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TradeCosts {
    /// Seller side: `s - own_price` when the other player bought our alert
    /// (usually negative, i.e. a net gain), else zero.
    pub sell: Tokens,
    /// Buyer side: the other player's price when we bought and an alert
    /// existed, else zero.
    pub buy: Tokens,
}

impl TradeCosts {
    pub fn total(self) -> Tokens {
        self.sell + self.buy
    }
}

/// Trade-phase costs for both players given the previous round's attacks and
/// this round's buy decisions.
///
/// A sale by player `i` happens iff player `i` was attacked last round (there
/// is an alert to sell) and the other player chose to buy. The seller then
/// pays the disclosure cost `s` and receives their price; the buyer pays that
/// price. A buy decision against a seller with no alert moves no tokens.
pub fn disclosure_costs(
    prev: AttackState,
    buys: [bool; 2],
    params: &GameParams,
) -> [TradeCosts; 2] {
    let mut costs = [TradeCosts::default(); 2];
    for seller in 0..2 {
        let buyer = other(seller);
        if prev.attacked(seller) && buys[buyer] {
            costs[seller].sell = params.disclosure - params.prices[seller];
            costs[buyer].buy = params.prices[seller];
        }
    }
    costs
}

/// Defense-phase cost: `delta` when defending (defense absorbs any attack),
/// `alpha` when hit undefended, zero otherwise.
pub fn defense_cost(defended: bool, attacked: bool, params: &GameParams) -> Tokens {
    if defended {
        params.delta
    } else if attacked {
        params.alpha
    } else {
        Tokens::ZERO
    }
}

/// One player's full cost for one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub sell: Tokens,
    pub buy: Tokens,
    pub defense: Tokens,
}

impl CostBreakdown {
    pub fn total(self) -> Tokens {
        self.sell + self.buy + self.defense
    }
}

/// Realized per-player costs for a full round: trade components based on the
/// previous round's attacks plus the defense outcome against this round's
/// attacks.
pub fn instant_cost(
    prev: AttackState,
    buys: [bool; 2],
    defends: [bool; 2],
    attacks: AttackState,
    params: &GameParams,
) -> [CostBreakdown; 2] {
    let trade = disclosure_costs(prev, buys, params);
    let mut out = [CostBreakdown::default(); 2];
    for i in 0..2 {
        out[i] = CostBreakdown {
            sell: trade[i].sell,
            buy: trade[i].buy,
            defense: defense_cost(defends[i], attacks.attacked(i), params),
        };
    }
    out
}

// ---------------------------------------------------------------------------
// Expected-cost analysis (f64)
// ---------------------------------------------------------------------------

/// What a player knows about next round's attack probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThreatContext {
    /// Nobody was attacked last round: probability `p`.
    Calm,
    /// Someone (possibly the player) was attacked last round: probability `q`.
    Active,
    /// The player's own pattern just completed (attacked, then quiet) with no
    /// information about the other player: blended probability `p'`.
    AfterPattern,
}

/// Next-round attack probability under a threat context.
pub fn threat_probability(ctx: ThreatContext, chain: &ChainParams) -> f64 {
    match ctx {
        ThreatContext::Calm => chain.p,
        ThreatContext::Active => chain.q,
        ThreatContext::AfterPattern => p_prime(chain),
    }
}

/// Expected cost of *not* defending for one round under a threat context:
/// the attack probability times `alpha`.
pub fn cost_not_defend(ctx: ThreatContext, params: &GameParams) -> f64 {
    threat_probability(ctx, &params.chain) * params.alpha.to_f64()
}

/// Defense regimes determined by where `delta` falls against `p*alpha` and
/// `q*alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `delta <= p*alpha`: defense is cheap enough to run every round.
    AlwaysDefend,
    /// `p*alpha < delta < q*alpha`: defense pays only when an attack is
    /// likely, so information has value.
    Conditional,
    /// `q*alpha <= delta`: defense never pays.
    NeverDefend,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::AlwaysDefend => "always-defend",
            Regime::Conditional => "conditional",
            Regime::NeverDefend => "never-defend",
        })
    }
}

/// Classifies the defense regime. Boundaries go to the degenerate side:
/// `delta = p*alpha` is AlwaysDefend, `delta = q*alpha` is NeverDefend.
pub fn classify_regime(params: &GameParams) -> Regime {
    let alpha = params.alpha.to_f64();
    let delta = params.delta.to_f64();
    if approx_le(delta, params.chain.p * alpha) {
        Regime::AlwaysDefend
    } else if approx_le(params.chain.q * alpha, delta) {
        Regime::NeverDefend
    } else {
        Regime::Conditional
    }
}

fn require_conditional(params: &GameParams) -> Result<(), GameError> {
    params.validate()?;
    let regime = classify_regime(params);
    if regime == Regime::Conditional {
        return Ok(());
    }
    let alpha = params.alpha.to_f64();
    let delta = params.delta.to_f64();
    let detail = match regime {
        Regime::AlwaysDefend => format!(
            "delta = {delta} <= p*alpha = {}",
            params.chain.p * alpha
        ),
        Regime::NeverDefend => format!(
            "q*alpha = {} <= delta = {delta}",
            params.chain.q * alpha
        ),
        Regime::Conditional => unreachable!(),
    };
    Err(GameError::NotConditional { regime, detail })
}

/// Raw expected-cost formula for buying the alert bit right after one's own
/// pattern, at a given price for the other player's alert:
/// `(1-q) * p * alpha + q * (price + delta)`.
///
/// With probability `q` the other player was attacked: the buyer pays the
/// price, learns the attack regime is live, and defends (`delta`). With
/// probability `1-q` there is no alert: nothing is paid and the buyer sits
/// out a `p`-probability attack. The formula assumes those continuations are
/// optimal, which is what the conditional regime guarantees.
pub fn buying_cost_formula(p: f64, q: f64, alpha: f64, delta: f64, price: f64) -> f64 {
    (1.0 - q) * p * alpha + q * (price + delta)
}

/// Expected cost for `buyer` of buying the other player's alert bit right
/// after the buyer's own pattern. Requires the conditional regime.
pub fn cost_of_buying(params: &GameParams, buyer: usize) -> Result<f64, GameError> {
    if buyer > 1 {
        return Err(GameError::BadPlayer(buyer));
    }
    require_conditional(params)?;
    Ok(buying_cost_formula(
        params.chain.p,
        params.chain.q,
        params.alpha.to_f64(),
        params.delta.to_f64(),
        params.price_paid_by(buyer).to_f64(),
    ))
}

/// Expected cost of *not* buying right after one's own pattern: the better of
/// blindly defending (`delta`) and not defending (`p' * alpha`). Requires the
/// conditional regime.
pub fn cost_of_not_buying(params: &GameParams) -> Result<f64, GameError> {
    require_conditional(params)?;
    let delta = params.delta.to_f64();
    Ok(delta.min(cost_not_defend(ThreatContext::AfterPattern, params)))
}

/// One two-sided check: does the expected-cost comparison agree with the
/// closed-form price bound?
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IffCheck {
    /// Left side: buying is no worse than the alternative (by expected cost).
    pub cost_holds: bool,
    /// Right side: the price is within the derived bound.
    pub price_holds: bool,
}

impl IffCheck {
    pub fn agrees(self) -> bool {
        self.cost_holds == self.price_holds
    }
}

/// The three buy-or-not equivalences checked at once (see [`price_bound_checks`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceBoundChecks {
    /// Buying vs never defending: price bound `q*alpha - delta`.
    pub vs_no_defense: IffCheck,
    /// Buying vs blind defense: price bound `(1-q)/q * (delta - p*alpha)`.
    pub vs_defense: IffCheck,
    /// Buying vs the better of the two: price bound is the min of both.
    pub vs_best_response: IffCheck,
}

impl PriceBoundChecks {
    pub fn all_agree(self) -> bool {
        self.vs_no_defense.agrees() && self.vs_defense.agrees() && self.vs_best_response.agrees()
    }
}

/// Largest price at which buying is still a best response after one's own
/// pattern: `min(q*alpha - delta, (1-q)/q * (delta - p*alpha))`. Both terms
/// are positive in the conditional regime. Callers must ensure the regime.
pub fn purchase_threshold(params: &GameParams) -> f64 {
    let alpha = params.alpha.to_f64();
    let delta = params.delta.to_f64();
    let q = params.chain.q;
    let vs_no_defense = q * alpha - delta;
    let vs_defense = (1.0 - q) / q * (delta - params.chain.p * alpha);
    vs_no_defense.min(vs_defense)
}

/// Verifies, for one parameter point, that the expected-cost comparisons and
/// the closed-form price bounds decide buying identically.
///
/// `vs_no_defense`: buying beats not defending iff the other player's price
/// is at most `q*alpha - delta`. `vs_defense`: buying beats blind defense iff
/// the price is at most `(1-q)/q * (delta - p*alpha)`. `vs_best_response`:
/// buying beats the better alternative iff the price is at most the min of
/// both bounds. Requires the conditional regime.
pub fn price_bound_checks(params: &GameParams, buyer: usize) -> Result<PriceBoundChecks, GameError> {
    require_conditional(params)?;
    if buyer > 1 {
        return Err(GameError::BadPlayer(buyer));
    }
    let alpha = params.alpha.to_f64();
    let delta = params.delta.to_f64();
    let (p, q) = (params.chain.p, params.chain.q);
    let price = params.price_paid_by(buyer).to_f64();
    let buy_cost = buying_cost_formula(p, q, alpha, delta, price);
    let no_defense_cost = p_prime(&params.chain) * alpha;
    let bound_no_defense = q * alpha - delta;
    let bound_defense = (1.0 - q) / q * (delta - p * alpha);
    Ok(PriceBoundChecks {
        vs_no_defense: IffCheck {
            cost_holds: approx_le(buy_cost, no_defense_cost),
            price_holds: approx_le(price, bound_no_defense),
        },
        vs_defense: IffCheck {
            cost_holds: approx_le(buy_cost, delta),
            price_holds: approx_le(price, bound_defense),
        },
        vs_best_response: IffCheck {
            cost_holds: approx_le(buy_cost, delta.min(no_defense_cost)),
            price_holds: approx_le(price, bound_no_defense.min(bound_defense)),
        },
    })
}

/// The seller's revenue-maximizing price: exactly the buyer's purchase
/// threshold, since any higher price kills the sale and any lower price
/// leaves revenue on the table. At the threshold the buyer is indifferent
/// and buys.
///
/// Requires the conditional regime and a disclosure cost the price can cover
/// (`s` at most each bound); violations return an error naming the violated
/// inequality.
pub fn optimal_price(params: &GameParams) -> Result<f64, GameError> {
    require_conditional(params)?;
    let alpha = params.alpha.to_f64();
    let delta = params.delta.to_f64();
    let (p, q) = (params.chain.p, params.chain.q);
    let s = params.disclosure.to_f64();
    let bound_no_defense = q * alpha - delta;
    let bound_defense = (1.0 - q) / q * (delta - p * alpha);
    if !approx_le(s, bound_no_defense) {
        return Err(GameError::DisclosureExceedsDefenseGain {
            s,
            bound: bound_no_defense,
        });
    }
    if !approx_le(s, bound_defense) {
        return Err(GameError::DisclosureExceedsIndifference {
            s,
            bound: bound_defense,
        });
    }
    Ok(bound_no_defense.min(bound_defense))
}

// ---------------------------------------------------------------------------
// Player policy
// ---------------------------------------------------------------------------

/// Defense part of a decision, stated as a rule so it can be expressed before
/// the trade resolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DefenseRule {
    Defend,
    Hold,
    /// Buy first, then defend iff the purchased bit reports an attack.
    DefendIfReportedAttack,
}

/// A player's decision for the upcoming round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub buy: bool,
    pub defense: DefenseRule,
}

/// One completed round as seen by one player: their own attack outcome, plus
/// the other player's outcome for the same round if it was later purchased.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub attacked: bool,
    pub report: Option<bool>,
}

/// Incremental decision state for one player.
///
/// The player tracks a posterior `belief` that the *other* player was
/// attacked in the last completed round, updated from their own outcomes (the
/// two attack bits share a round's regime, so one's own bit is evidence about
/// the other's) and overwritten by any purchased report. Decisions:
///
/// * **Buy** (conditional regime only) exactly when the player's own pattern
///   just completed — quiet last round, attacked the round before (or quiet
///   in round 1, whose dynamics count as following an attack) — and the other
///   player's price is within [`purchase_threshold`].
/// * **Defend** when the expected loss `P(own attack) * alpha` is at least
///   `delta`, where `P(own attack)` is `q` after an own attack and
///   `belief * q + (1 - belief) * p` otherwise. Ties defend. In the
///   degenerate regimes this reduces to always/never defend.
#[derive(Debug, Clone)]
pub struct PlayerPolicy {
    player: usize,
    regime: Regime,
    threshold: f64,
    price_other: f64,
    p: f64,
    q: f64,
    alpha: f64,
    delta: f64,
    /// Next round to decide, 1-based.
    round: u64,
    /// Own outcome in the last completed round.
    last_own: Option<bool>,
    /// Own outcome two rounds back.
    prev_own: Option<bool>,
    /// Posterior P(other attacked in last completed round).
    belief: f64,
}

impl PlayerPolicy {
    /// Builds the policy for `player`. `params` must already be validated.
    pub fn new(params: &GameParams, player: usize) -> Result<Self, GameError> {
        if player > 1 {
            return Err(GameError::BadPlayer(player));
        }
        params.validate()?;
        let regime = classify_regime(params);
        let threshold = if regime == Regime::Conditional {
            purchase_threshold(params)
        } else {
            f64::NEG_INFINITY
        };
        Ok(PlayerPolicy {
            player,
            regime,
            threshold,
            price_other: params.price_paid_by(player).to_f64(),
            p: params.chain.p,
            q: params.chain.q,
            alpha: params.alpha.to_f64(),
            delta: params.delta.to_f64(),
            round: 1,
            last_own: None,
            prev_own: None,
            belief: params.chain.q,
        })
    }

    pub fn player(&self) -> usize {
        self.player
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Current round number (1-based), i.e. the round about to be decided.
    pub fn round(&self) -> u64 {
        self.round
    }

    /// Posterior that the other player was attacked in the last completed
    /// round. Meaningful from round 2 on.
    pub fn belief_other_attacked(&self) -> f64 {
        self.belief
    }

    /// Trade decision for the current round.
    pub fn wants_to_buy(&self) -> bool {
        if self.regime != Regime::Conditional || self.round < 2 {
            return false;
        }
        let quiet_last = self.last_own == Some(false);
        let pattern = quiet_last && (self.round == 2 || self.prev_own == Some(true));
        pattern && approx_le(self.price_other, self.threshold)
    }

    /// Injects a purchased report about the other player's outcome in the
    /// last completed round, replacing the inferred belief with certainty.
    pub fn apply_report(&mut self, other_attacked: bool) {
        self.belief = if other_attacked { 1.0 } else { 0.0 };
    }

    /// The policy's current estimate of P(own attack this round).
    pub fn own_attack_probability(&self) -> f64 {
        match self.last_own {
            None => self.q,       // round 1 follows the attacked dummy start
            Some(true) => self.q, // own attack keeps the persistent regime
            Some(false) => self.belief * self.q + (1.0 - self.belief) * self.p,
        }
    }

    /// Defense decision for the current round (after any trade resolved).
    pub fn decide_defense(&self) -> bool {
        match self.regime {
            Regime::AlwaysDefend => true,
            Regime::NeverDefend => false,
            Regime::Conditional => {
                approx_le(self.delta, self.own_attack_probability() * self.alpha)
            }
        }
    }

    /// Records the player's own outcome for the current round and advances.
    ///
    /// The belief about the other player updates by Bayes: both players'
    /// round-`n` bits are i.i.d. given round `n-1`'s regime, so after an own
    /// attack (or in round 1) the other's bit is simply Bernoulli(q), and
    /// after an own quiet round the own outcome reweights the posterior over
    /// whether the regime was persistent (`q`) or calm (`p`).
    pub fn observe_own(&mut self, attacked: bool) {
        let new_belief = match self.last_own {
            // Round 1: both bits were Bernoulli(q) independently.
            None => self.q,
            // Own attack pinned the regime to q for this round.
            Some(true) => self.q,
            Some(false) => {
                let w_q = self.belief;
                let w_p = 1.0 - self.belief;
                let (num, den) = if attacked {
                    (
                        w_q * self.q * self.q + w_p * self.p * self.p,
                        w_q * self.q + w_p * self.p,
                    )
                } else {
                    (
                        w_q * (1.0 - self.q) * self.q + w_p * (1.0 - self.p) * self.p,
                        w_q * (1.0 - self.q) + w_p * (1.0 - self.p),
                    )
                };
                if den > 0.0 {
                    num / den
                } else {
                    // Probability-zero observation under the model; fall back
                    // to the persistent regime (conservative).
                    self.q
                }
            }
        };
        self.belief = new_belief;
        self.prev_own = self.last_own;
        self.last_own = Some(attacked);
        self.round += 1;
    }
}

/// Pure decision function: replays a player-local history (own outcomes plus
/// any purchased reports) and returns the decision for the next round.
pub fn policy_decide(
    history: &[Observation],
    params: &GameParams,
    player: usize,
) -> Result<Decision, GameError> {
    let mut policy = PlayerPolicy::new(params, player)?;
    for obs in history {
        policy.observe_own(obs.attacked);
        if let Some(bit) = obs.report {
            policy.apply_report(bit);
        }
    }
    let buy = policy.wants_to_buy();
    let defense = if buy {
        DefenseRule::DefendIfReportedAttack
    } else if policy.decide_defense() {
        DefenseRule::Defend
    } else {
        DefenseRule::Hold
    };
    Ok(Decision { buy, defense })
}
