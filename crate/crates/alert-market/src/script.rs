//! Line-oriented scenario scripts for the marketplace and grid files for
//! parameter sweeps.
//!
//! Both formats share the same surface rules: one record per line, blank
//! lines skipped, everything after `#` ignored. Errors name the 1-based
//! line they come from.
//!
//! Scenario scripts drive the marketplace state machine:
//!
//! ```text
//! # <caller> <op> <args...>; a leading ! means "this must be rejected"
//! alice register 1
//! alice advertise 10 1 IDS industrial DDoS,botnet
//! bob   register 1
//! bob   mk_offer 1 1 1
//! alice acc_offer 1 127.0.0.1:4242
//! bob   rate 1 1.0
//! ! eve rm_advert 1
//! ```
//!
//! Parties have no key material in the file: each caller's keys are derived
//! deterministically from the run seed and the caller name, and `acc_offer`
//! endpoints are sealed to the offer maker's derived key at execution time.
//! A step without `!` that gets rejected — or a `!` step that succeeds —
//! aborts the run with an error naming the step, so a script is also a
//! test of the exact paths it exercises.
//!
//! Grid files for sweeps carry one parameter set per line, seven columns:
//!
//! ```text
//! # p    q    alpha delta s    price0 price1
//! 0.05   0.6  10    2     0.2  opt    opt
//! ```
//!
//! `opt` resolves to the closed-form optimal price when the parameters sit
//! in the conditional regime, and to 0 otherwise (prices are irrelevant in
//! the degenerate regimes — nobody trades).

use std::fmt::Write as _;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use thiserror::Error;

use crate::crypto::seal;
use crate::attacker::ChainParams;
use crate::game::{classify_regime, optimal_price, GameParams, Regime};
use crate::market::{Command, Event, MarketError, MarketState};
use crate::net::demo_keys;
use crate::seed::derive_rng;
use crate::sim::format_sig;
use crate::tokens::Tokens;
use crate::trust::TrustConfig;

/// A marketplace operation as parsed from a script. `acc_offer` cannot be
/// turned into a [`Command`] until execution time because the endpoint has
/// to be sealed to whoever made the offer in the current state.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptOp {
    Ready(Command),
    AccOffer { offer: u64, endpoint: String },
}

/// One parsed script step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptStep {
    /// 1-based line number in the script file.
    pub line: usize,
    /// `!` prefix: this step must be rejected by the market.
    pub expect_rejection: bool,
    pub caller: String,
    pub op: ScriptOp,
    /// The step as written (trimmed, without the `!` marker).
    pub summary: String,
}

/// What one executed step did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub line: usize,
    pub summary: String,
    /// `Err` only for steps that expected and got a rejection.
    pub result: Result<Event, MarketError>,
}

/// Script parsing or execution failures, each naming its step.
#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("step {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("step {line}: expected a rejection, but the command succeeded")]
    UnexpectedSuccess { line: usize },
    #[error("step {line}: {source}")]
    UnexpectedRejection { line: usize, source: MarketError },
}

fn parse_err(line: usize, detail: impl Into<String>) -> ScriptError {
    ScriptError::Parse { line, detail: detail.into() }
}

fn content_of(raw: &str) -> &str {
    raw.split('#').next().unwrap_or("").trim()
}

fn parse_tokens(line: usize, what: &str, text: &str) -> Result<Tokens, ScriptError> {
    text.parse::<Tokens>()
        .map_err(|e| parse_err(line, format!("{what} {text:?}: {e}")))
}

fn parse_u64(line: usize, what: &str, text: &str) -> Result<u64, ScriptError> {
    text.parse::<u64>()
        .map_err(|_| parse_err(line, format!("{what} {text:?} is not a non-negative integer")))
}

fn parse_f64(line: usize, what: &str, text: &str) -> Result<f64, ScriptError> {
    text.parse::<f64>()
        .map_err(|_| parse_err(line, format!("{what} {text:?} is not a number")))
}

/// Parses a scenario script. `seed` fixes the key material: a party named
/// `x` registers with the keys every other seed-`x` derivation agrees on.
pub fn parse_script(text: &str, seed: u64) -> Result<Vec<ScriptStep>, ScriptError> {
    let mut steps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut content = content_of(raw);
        if content.is_empty() {
            continue;
        }
        let expect_rejection = if let Some(rest) = content.strip_prefix('!') {
            content = rest.trim_start();
            true
        } else {
            false
        };
        let summary = content.to_string();
        let mut words = content.split_whitespace();
        let caller = words
            .next()
            .ok_or_else(|| parse_err(line, "missing caller"))?
            .to_string();
        let op = words
            .next()
            .ok_or_else(|| parse_err(line, "missing operation"))?;
        let args: Vec<&str> = words.collect();
        let arity = |n: usize| -> Result<(), ScriptError> {
            if args.len() == n {
                Ok(())
            } else {
                Err(parse_err(
                    line,
                    format!("{op} takes {n} argument(s), got {}", args.len()),
                ))
            }
        };
        let op = match op {
            "register" => {
                arity(1)?;
                ScriptOp::Ready(Command::Register {
                    payment: parse_tokens(line, "payment", args[0])?,
                    keys: demo_keys(seed, &caller).public(),
                })
            }
            "mint" => {
                arity(1)?;
                ScriptOp::Ready(Command::Mint {
                    amount: parse_tokens(line, "amount", args[0])?,
                })
            }
            "advertise" => {
                arity(5)?;
                ScriptOp::Ready(Command::Advertise {
                    tags: crate::market::AdvertTags {
                        throughput_per_hour: parse_f64(line, "throughput", args[0])?,
                        price_per_alert: parse_tokens(line, "price", args[1])?,
                        detector: args[2].to_string(),
                        network: args[3].to_string(),
                        attack_types: args[4].split(',').map(str::to_string).collect(),
                    },
                })
            }
            "rm_advert" => {
                arity(1)?;
                ScriptOp::Ready(Command::RmAdvert {
                    advert: parse_u64(line, "advert id", args[0])?,
                })
            }
            "mk_offer" => {
                arity(3)?;
                ScriptOp::Ready(Command::MkOffer {
                    advert: parse_u64(line, "advert id", args[0])?,
                    fee: parse_tokens(line, "fee", args[1])?,
                    deposit: parse_tokens(line, "deposit", args[2])?,
                })
            }
            "del_offer" => {
                arity(1)?;
                ScriptOp::Ready(Command::DelOffer {
                    offer: parse_u64(line, "offer id", args[0])?,
                })
            }
            "acc_offer" => {
                arity(2)?;
                ScriptOp::AccOffer {
                    offer: parse_u64(line, "offer id", args[0])?,
                    endpoint: args[1].to_string(),
                }
            }
            "unsubscribe" => {
                arity(1)?;
                ScriptOp::Ready(Command::Unsubscribe {
                    subscription: parse_u64(line, "subscription id", args[0])?,
                })
            }
            "rate" => {
                arity(2)?;
                ScriptOp::Ready(Command::Rate {
                    subscription: parse_u64(line, "subscription id", args[0])?,
                    rating: parse_f64(line, "rating", args[1])?,
                })
            }
            "post_deposit" => {
                arity(2)?;
                ScriptOp::Ready(Command::PostDeposit {
                    advert: parse_u64(line, "advert id", args[0])?,
                    amount: parse_tokens(line, "amount", args[1])?,
                })
            }
            "takedown" => {
                arity(1)?;
                ScriptOp::Ready(Command::Takedown {
                    deposit: parse_u64(line, "deposit id", args[0])?,
                })
            }
            "reclaim" => {
                arity(1)?;
                ScriptOp::Ready(Command::Reclaim {
                    deposit: parse_u64(line, "deposit id", args[0])?,
                })
            }
            other => {
                return Err(parse_err(line, format!("unknown operation {other:?}")));
            }
        };
        steps.push(ScriptStep {
            line,
            expect_rejection,
            caller,
            op,
            summary,
        });
    }
    Ok(steps)
}

/// Executes parsed steps against a market. A rejection on a plain step or
/// a success on a `!` step aborts with an error naming the step; otherwise
/// every step's outcome is returned in order.
pub fn run_script(
    market: &mut MarketState,
    steps: &[ScriptStep],
    seed: u64,
) -> Result<Vec<StepOutcome>, ScriptError> {
    let mut outcomes = Vec::with_capacity(steps.len());
    for step in steps {
        let command = match &step.op {
            ScriptOp::Ready(command) => command.clone(),
            ScriptOp::AccOffer { offer, endpoint } => {
                // Seal the endpoint to the offer maker's registered key; if
                // the offer does not exist the market will reject the
                // command before looking at the endpoint.
                let sealed = market
                    .offers
                    .get(offer)
                    .and_then(|o| market.parties.get(&o.maker))
                    .map(|party| {
                        let mut rng = derive_rng(seed, "script.seal", step.line as u64);
                        BASE64.encode(seal(&party.keys.seal, endpoint.as_bytes(), &mut rng))
                    })
                    .unwrap_or_default();
                Command::AccOffer {
                    offer: *offer,
                    sealed_endpoint: sealed,
                }
            }
        };
        let result = market.apply(&step.caller, command);
        match (&result, step.expect_rejection) {
            (Ok(_), true) => return Err(ScriptError::UnexpectedSuccess { line: step.line }),
            (Err(e), false) => {
                return Err(ScriptError::UnexpectedRejection {
                    line: step.line,
                    source: e.clone(),
                })
            }
            _ => {}
        }
        outcomes.push(StepOutcome {
            line: step.line,
            summary: step.summary.clone(),
            result,
        });
    }
    Ok(outcomes)
}

/// One transcript line per executed step, stable across runs.
pub fn render_outcome(outcome: &StepOutcome) -> String {
    match &outcome.result {
        Ok(event) => {
            let json = serde_json::to_string(event).expect("events serialize");
            format!("step {:>3} ok:       {} -> {json}", outcome.line, outcome.summary)
        }
        Err(e) => format!(
            "step {:>3} rejected: {} -> {e}",
            outcome.line, outcome.summary
        ),
    }
}

/// Renders the trust table for every registered party under `config`.
pub fn trust_table(market: &MarketState, config: &TrustConfig) -> Result<String, MarketError> {
    let width = market
        .parties
        .keys()
        .map(|p| p.len())
        .chain(std::iter::once("party".len()))
        .max()
        .unwrap_or(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>8}  {:>4}  {:>4}  {:>9}  {:>9}",
        "party", "burned", "pos", "neg", "prior", "trust"
    );
    for (id, party) in &market.parties {
        let score = market.trust_of(id, config)?;
        let evidence = market.ratings.get(id).copied().unwrap_or_default();
        let _ = writeln!(
            out,
            "{id:<width$}  {:>8}  {:>4}  {:>4}  {:>9}  {:>9}",
            party.burned.to_string(),
            evidence.positive,
            evidence.negative,
            format_sig(score.prior),
            format_sig(score.expectation)
        );
    }
    Ok(out)
}

/// Grid-file parsing failures, naming the offending line.
#[derive(Debug, Error)]
#[error("grid line {line}: {detail}")]
pub struct GridParseError {
    pub line: usize,
    pub detail: String,
}

fn grid_err(line: usize, detail: impl Into<String>) -> GridParseError {
    GridParseError { line, detail: detail.into() }
}

/// Parses a sweep grid file: seven columns per line
/// (`p q alpha delta s price0 price1`), where a price is a token amount or
/// `opt`. Row order is preserved. An empty grid is returned as an empty
/// vector; callers decide whether that is an error.
pub fn parse_grid(text: &str) -> Result<Vec<GameParams>, GridParseError> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = content_of(raw);
        if content.is_empty() {
            continue;
        }
        let cols: Vec<&str> = content.split_whitespace().collect();
        if cols.len() != 7 {
            return Err(grid_err(
                line,
                format!("expected 7 columns (p q alpha delta s price0 price1), got {}", cols.len()),
            ));
        }
        let num = |what: &str, text: &str| -> Result<f64, GridParseError> {
            text.parse::<f64>()
                .map_err(|_| grid_err(line, format!("{what} {text:?} is not a number")))
        };
        let amount = |what: &str, text: &str| -> Result<Tokens, GridParseError> {
            text.parse::<Tokens>()
                .map_err(|e| grid_err(line, format!("{what} {text:?}: {e}")))
        };
        let mut params = GameParams {
            chain: ChainParams {
                p: num("p", cols[0])?,
                q: num("q", cols[1])?,
            },
            alpha: amount("alpha", cols[2])?,
            delta: amount("delta", cols[3])?,
            disclosure: amount("s", cols[4])?,
            prices: [Tokens::ZERO; 2],
        };
        params
            .validate()
            .map_err(|e| grid_err(line, e.to_string()))?;
        let mut resolved_opt: Option<Tokens> = None;
        let mut price = |input: &str| -> Result<Tokens, GridParseError> {
            if input == "opt" {
                if let Some(v) = resolved_opt {
                    return Ok(v);
                }
                let v = match classify_regime(&params) {
                    Regime::Conditional => Tokens::from_f64_rounded(
                        optimal_price(&params).map_err(|e| grid_err(line, e.to_string()))?,
                    ),
                    // No trade happens outside the conditional regime, so
                    // "optimal" collapses to zero.
                    _ => Tokens::ZERO,
                };
                resolved_opt = Some(v);
                Ok(v)
            } else {
                amount("price", input)
            }
        };
        let p0 = price(cols[5])?;
        let p1 = price(cols[6])?;
        params.prices = [p0, p1];
        params
            .validate()
            .map_err(|e| grid_err(line, e.to_string()))?;
        rows.push(params);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::MarketConfig;

    const GOLDEN: &str = "\
# the smallest useful marketplace session
alice register 1
alice advertise 10 1 IDS industrial DDoS,botnet
bob   register 1
bob   mint 5
bob   mk_offer 1 1 1          # fee 1, rating bond 1
alice acc_offer 1 127.0.0.1:4242
bob   rate 1 1.0              # refunds the bond
";

    fn run_golden() -> (MarketState, Vec<StepOutcome>) {
        let steps = parse_script(GOLDEN, 7).unwrap();
        let mut market = MarketState::new(MarketConfig::default()).unwrap();
        let outcomes = run_script(&mut market, &steps, 7).unwrap();
        (market, outcomes)
    }

    #[test]
    fn golden_scenario_refunds_rating_bond_and_conserves() {
        let (market, outcomes) = run_golden();
        let rated = outcomes
            .iter()
            .find_map(|o| match &o.result {
                Ok(Event::Rated { refunded, positive, .. }) => Some((*refunded, *positive)),
                _ => None,
            })
            .expect("rating event present");
        assert_eq!(rated, (Some(Tokens::from_whole(1)), true));
        market.check_conservation().unwrap();
        assert_eq!(market.escrow, market.expected_escrow());
        assert_eq!(market.escrow, Tokens::ZERO, "fee released, bond refunded");
    }

    #[test]
    fn sealed_endpoint_opens_with_derived_buyer_keys() {
        let (market, _) = run_golden();
        let sub = &market.subscriptions[&1];
        let endpoint =
            crate::net::open_endpoint(&sub.sealed_endpoint, &demo_keys(7, "bob")).unwrap();
        assert_eq!(endpoint, "127.0.0.1:4242");
    }

    #[test]
    fn expected_rejection_is_recorded_not_fatal() {
        let text = "alice register 1\n! eve rm_advert 1\n";
        let steps = parse_script(text, 1).unwrap();
        let mut market = MarketState::new(MarketConfig::default()).unwrap();
        let outcomes = run_script(&mut market, &steps, 1).unwrap();
        assert!(outcomes[1].result.is_err());
        assert_eq!(market.seq, 1, "rejected step must not advance the clock");
    }

    #[test]
    fn unexpected_outcomes_abort_with_step_number() {
        let mut market = MarketState::new(MarketConfig::default()).unwrap();
        let steps = parse_script("\n\n! alice register 1\n", 1).unwrap();
        match run_script(&mut market, &steps, 1) {
            Err(ScriptError::UnexpectedSuccess { line: 3 }) => {}
            other => panic!("expected step-3 failure, got {other:?}"),
        }
        let mut market = MarketState::new(MarketConfig::default()).unwrap();
        let steps = parse_script("eve rm_advert 1\n", 1).unwrap();
        match run_script(&mut market, &steps, 1) {
            Err(ScriptError::UnexpectedRejection { line: 1, .. }) => {}
            other => panic!("expected step-1 failure, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_name_the_line() {
        for (text, needle) in [
            ("alice register 1\nalice fly 2\n", "unknown operation"),
            ("alice register\n", "takes 1 argument"),
            ("alice mk_offer 1 x 1\n", "fee"),
            ("bob rate one 1\n", "subscription id"),
        ] {
            let err = parse_script(text, 1).unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains(needle), "{msg}");
            if text.lines().count() > 1 && text.starts_with("alice register 1") {
                assert!(msg.starts_with("step 2"), "{msg}");
            } else {
                assert!(msg.starts_with("step 1"), "{msg}");
            }
        }
    }

    #[test]
    fn comments_blanks_and_inline_comments_are_skipped() {
        let text = "# full comment\n\n   \nalice register 1  # trailing\n";
        let steps = parse_script(text, 1).unwrap();
        assert_eq!(steps.len(), 1);
        assert_eq!(steps[0].line, 4);
        assert_eq!(steps[0].summary, "alice register 1");
    }

    #[test]
    fn grid_parses_and_resolves_opt_prices() {
        let text = "\
# p    q   alpha delta s   price0 price1
0.05  0.6  10    2     0.2 opt    opt
0.05  0.6  10    0.4   0.2 opt    1.5   # always-defend: opt -> 0
0.05  0.6  10    7     0   opt    opt   # never-defend: opt -> 0
";
        let rows = parse_grid(text).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].prices, [Tokens::from_whole(1); 2], "canonical optimum is 1.0");
        assert_eq!(rows[1].prices, [Tokens::ZERO, Tokens::from_milli(1500)]);
        assert_eq!(rows[2].prices, [Tokens::ZERO; 2]);
        assert_eq!(classify_regime(&rows[1]), Regime::AlwaysDefend);
        assert_eq!(classify_regime(&rows[2]), Regime::NeverDefend);
    }

    #[test]
    fn grid_errors_name_line_and_reason() {
        let err = parse_grid("0.05 0.6 10 2 0.2 opt\n").unwrap_err();
        assert!(err.to_string().contains("grid line 1"), "{err}");
        assert!(err.to_string().contains("7 columns"), "{err}");
        let err = parse_grid("\n0.6 0.05 10 2 0.2 1 1\n").unwrap_err();
        assert!(err.to_string().contains("grid line 2"), "{err}");
        // Disclosure too high for an optimal price to exist.
        let err = parse_grid("0.05 0.6 10 2 4.1 opt opt\n").unwrap_err();
        assert!(err.to_string().contains("grid line 1"), "{err}");
        assert!(parse_grid("# nothing\n").unwrap().is_empty());
    }

    #[test]
    fn trust_table_shows_fresh_baseline_at_half() {
        let (market, _) = run_golden();
        let table = trust_table(&market, &TrustConfig::default()).unwrap();
        // alice has one positive rating; bob has none, so bob sits at the
        // burn prior, which for a 1-token burn over a 1-token baseline is
        // 0.5.
        let bob_line = table.lines().find(|l| l.starts_with("bob")).unwrap();
        assert!(bob_line.trim_end().ends_with("0.5"), "{table}");
        assert!(table.lines().next().unwrap().contains("trust"), "{table}");
    }

    #[test]
    fn render_outcome_is_single_line_and_stable() {
        let (_, outcomes) = run_golden();
        for outcome in &outcomes {
            let line = render_outcome(outcome);
            assert_eq!(line.lines().count(), 1);
            assert!(line.starts_with("step "));
        }
    }
}
