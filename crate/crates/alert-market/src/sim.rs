//! Seeded round-by-round simulation of the trading game.
//!
//! Each round of [`simulate`] runs three phases: both players' policies make
//! their trade decisions (purchased reports are applied to beliefs), then
//! their defense decisions, then the attacker chain samples the round's
//! attacks and realized costs are recorded. All randomness comes from one
//! generator derived from the caller's seed, and policies are deterministic,
//! so a `(params, horizon, seed)` triple always reproduces the same trace.
//!
//! [`sweep`] runs one simulation per grid point, reusing the same master seed
//! for every row (common random numbers: duplicated grid points produce
//! identical rows, and rows differ only through their parameters).
//!
//! Traces and sweep results export to CSV with `#`-prefixed comment lines
//! carrying the seed and parameters, a fixed header, and floats printed to 6
//! significant digits; identical inputs produce byte-identical files.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacker::{sample_next, AttackState};
use crate::game::{
    classify_regime, defense_cost, instant_cost, optimal_price, GameError, GameParams,
    PlayerPolicy, Regime,
};
use crate::seed::derive_rng;
use crate::tokens::Tokens;

/// One simulated round: decisions, attacks, and realized per-player costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round number.
    pub round: u64,
    pub buys: [bool; 2],
    pub defends: [bool; 2],
    pub attacks: AttackState,
    /// Total cost per player (trade components plus defense outcome).
    pub costs: [Tokens; 2],
}

/// A complete simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub params: GameParams,
    pub seed: u64,
    pub horizon: u64,
    pub rounds: Vec<RoundRecord>,
    /// Exact sums of the per-round costs.
    pub cumulative_costs: [Tokens; 2],
}

/// Runs the game for `horizon` rounds.
///
/// Round 1 has no previous round, so there is nothing to trade and costs are
/// defense-only; trading starts in round 2. A player who buys receives the
/// true bit about the other player's previous round and conditions both the
/// payment (only if an alert existed) and the defense decision on it.
pub fn simulate(params: &GameParams, horizon: u64, seed: u64) -> Result<Trace, GameError> {
    params.validate()?;
    if horizon == 0 {
        return Err(GameError::ZeroHorizon);
    }
    let mut rng = derive_rng(seed, "sim.attacks", 0);
    let mut policies = [PlayerPolicy::new(params, 0)?, PlayerPolicy::new(params, 1)?];
    let mut prev: Option<AttackState> = None;
    let mut rounds = Vec::with_capacity(horizon.min(1 << 24) as usize);
    let mut cumulative = [Tokens::ZERO; 2];

    for round in 1..=horizon {
        // Trade phase.
        let mut buys = [false; 2];
        if let Some(prev_state) = prev {
            for (i, policy) in policies.iter_mut().enumerate() {
                if policy.wants_to_buy() {
                    buys[i] = true;
                    policy.apply_report(prev_state.attacked(crate::game::other(i)));
                }
            }
        }
        // Defense phase.
        let defends = [policies[0].decide_defense(), policies[1].decide_defense()];
        // Attacks land.
        let attacks = sample_next(prev, &params.chain, &mut rng);
        let costs = match prev {
            Some(prev_state) => {
                let detail = instant_cost(prev_state, buys, defends, attacks, params);
                [detail[0].total(), detail[1].total()]
            }
            None => [
                defense_cost(defends[0], attacks.attacked(0), params),
                defense_cost(defends[1], attacks.attacked(1), params),
            ],
        };
        for i in 0..2 {
            cumulative[i] += costs[i];
            policies[i].observe_own(attacks.attacked(i));
        }
        rounds.push(RoundRecord {
            round,
            buys,
            defends,
            attacks,
            costs,
        });
        prev = Some(attacks);
    }

    Ok(Trace {
        params: *params,
        seed,
        horizon,
        rounds,
        cumulative_costs: cumulative,
    })
}

/// Aggregate statistics over a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub horizon: u64,
    /// Purchase count per player.
    pub purchases: [u64; 2],
    /// Mean gap in rounds between a player's consecutive purchases; `None`
    /// with fewer than two purchases. The open-ended stretch after the last
    /// purchase is not counted as a gap.
    pub mean_purchase_gap: [Option<f64>; 2],
    pub purchase_gap_se: [Option<f64>; 2],
    pub defense_rate: [f64; 2],
    pub attack_rate: [f64; 2],
    /// Mean per-round cost in tokens.
    pub mean_round_cost: [f64; 2],
    pub total_cost: [Tokens; 2],
}

/// Computes purchase, defense, attack and cost statistics for a trace.
pub fn trace_stats(trace: &Trace) -> TraceStats {
    let mut purchases = [0u64; 2];
    let mut defenses = [0u64; 2];
    let mut attacks = [0u64; 2];
    let mut gaps = [
        crate::attacker::Accumulator::default(),
        crate::attacker::Accumulator::default(),
    ];
    let mut last_purchase: [Option<u64>; 2] = [None; 2];
    for record in &trace.rounds {
        for i in 0..2 {
            if record.buys[i] {
                purchases[i] += 1;
                if let Some(at) = last_purchase[i] {
                    gaps[i].push((record.round - at) as f64);
                }
                last_purchase[i] = Some(record.round);
            }
            if record.defends[i] {
                defenses[i] += 1;
            }
            if record.attacks.attacked(i) {
                attacks[i] += 1;
            }
        }
    }
    let horizon = trace.horizon.max(1) as f64;
    let stat = |acc: &crate::attacker::Accumulator| {
        if acc.count == 0 {
            (None, None)
        } else {
            (Some(acc.mean()), Some(acc.standard_error()))
        }
    };
    let (gap0, se0) = stat(&gaps[0]);
    let (gap1, se1) = stat(&gaps[1]);
    TraceStats {
        horizon: trace.horizon,
        purchases,
        mean_purchase_gap: [gap0, gap1],
        purchase_gap_se: [se0, se1],
        defense_rate: [defenses[0] as f64 / horizon, defenses[1] as f64 / horizon],
        attack_rate: [attacks[0] as f64 / horizon, attacks[1] as f64 / horizon],
        mean_round_cost: [
            trace.cumulative_costs[0].to_f64() / horizon,
            trace.cumulative_costs[1].to_f64() / horizon,
        ],
        total_cost: trace.cumulative_costs,
    }
}

/// One sweep result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub params: GameParams,
    pub regime: Regime,
    /// The revenue-maximizing price, when the regime admits one.
    pub optimal_price: Option<f64>,
    /// Total purchases (both players) per thousand rounds.
    pub purchases_per_1k: f64,
    /// Pooled mean purchase gap across both players.
    pub mean_purchase_gap: Option<f64>,
    pub mean_round_cost: [f64; 2],
}

/// A sweep failure, naming the offending grid row (0-based).
#[derive(Debug, Error)]
#[error("sweep row {row}: {source}")]
pub struct SweepError {
    pub row: usize,
    #[source]
    pub source: GameError,
}

/// Runs one simulation per grid point with a shared master seed and
/// summarizes each into a row.
pub fn sweep(grid: &[GameParams], horizon: u64, seed: u64) -> Result<Vec<SweepRow>, SweepError> {
    let mut rows = Vec::with_capacity(grid.len());
    for (row, params) in grid.iter().enumerate() {
        let trace = simulate(params, horizon, seed).map_err(|source| SweepError { row, source })?;
        let stats = trace_stats(&trace);
        let total_purchases = stats.purchases[0] + stats.purchases[1];
        // Pool both players' gap samples weighted by count.
        let mean_purchase_gap = match (
            stats.purchases[0].checked_sub(1),
            stats.purchases[1].checked_sub(1),
        ) {
            _ if total_purchases < 2 => None,
            (a, b) => {
                let (na, nb) = (a.unwrap_or(0) as f64, b.unwrap_or(0) as f64);
                if na + nb == 0.0 {
                    None
                } else {
                    let ga = stats.mean_purchase_gap[0].unwrap_or(0.0);
                    let gb = stats.mean_purchase_gap[1].unwrap_or(0.0);
                    Some((ga * na + gb * nb) / (na + nb))
                }
            }
        };
        rows.push(SweepRow {
            params: *params,
            regime: classify_regime(params),
            optimal_price: optimal_price(params).ok(),
            purchases_per_1k: total_purchases as f64 * 1000.0 / horizon as f64,
            mean_purchase_gap,
            mean_round_cost: stats.mean_round_cost,
        });
    }
    Ok(rows)
}

/// Formats a float with 6 significant digits, trimming trailing zeros.
/// Output is locale-independent and stable across runs.
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 6;
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (DIGITS - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt_sig(x: Option<f64>) -> String {
    x.map(format_sig).unwrap_or_default()
}

/// Writes a trace as CSV: comment lines with seed and parameters, a fixed
/// header, then one row per round with 0/1 decision flags and exact decimal
/// costs.
pub fn write_trace_csv(out: &mut impl Write, trace: &Trace) -> io::Result<()> {
    let p = &trace.params;
    writeln!(out, "# seed={} horizon={}", trace.seed, trace.horizon)?;
    writeln!(
        out,
        "# p={} q={} alpha={} delta={} s={} price0={} price1={}",
        format_sig(p.chain.p),
        format_sig(p.chain.q),
        p.alpha,
        p.delta,
        p.disclosure,
        p.prices[0],
        p.prices[1],
    )?;
    writeln!(out, "round,buy0,buy1,def0,def1,atk0,atk1,cost0,cost1")?;
    for r in &trace.rounds {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.round,
            r.buys[0] as u8,
            r.buys[1] as u8,
            r.defends[0] as u8,
            r.defends[1] as u8,
            r.attacks.attacked(0) as u8,
            r.attacks.attacked(1) as u8,
            r.costs[0],
            r.costs[1],
        )?;
    }
    Ok(())
}

/// Writes sweep rows as CSV with the same comment-line conventions as traces.
/// Optional columns (no optimal price, no observed gaps) are left empty.
pub fn write_sweep_csv(
    out: &mut impl Write,
    rows: &[SweepRow],
    horizon: u64,
    seed: u64,
) -> io::Result<()> {
    writeln!(out, "# seed={seed} horizon={horizon}")?;
    writeln!(
        out,
        "p,q,alpha,delta,s,price0,price1,regime,optimal_price,purchases_per_1k,mean_purchase_gap,mean_cost0,mean_cost1"
    )?;
    for row in rows {
        let p = &row.params;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            format_sig(p.chain.p),
            format_sig(p.chain.q),
            p.alpha,
            p.delta,
            p.disclosure,
            p.prices[0],
            p.prices[1],
            row.regime,
            opt_sig(row.optimal_price),
            format_sig(row.purchases_per_1k),
            opt_sig(row.mean_purchase_gap),
            format_sig(row.mean_round_cost[0]),
            format_sig(row.mean_round_cost[1]),
        )?;
    }
    Ok(())
}
