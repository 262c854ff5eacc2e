//! Four-state Markov model of a correlated attacker facing two defenders.
//!
//! Each round the attacker independently decides, per defender, whether to
//! attack. The per-defender attack probability depends only on whether
//! *anyone* was attacked in the previous round: `q` if someone was (attacks
//! persist), `p` if nobody was (attacks start rarely), with `p <= q`. The
//! joint state is the pair of attack bits, giving a four-state chain over
//! `(-,-), (a,-), (-,a), (a,a)`. The round before the first round is treated
//! as if someone had been attacked, so round 1 uses `q`.
//!
//! Besides sampling, this module computes the chain's exact quantities used
//! by tests and by the pricing analysis: the one-round-later attack
//! probability after a quiet round that follows an attack
//! ([`p_prime`]), expected lengths of attack runs and truces
//! ([`exact_run_expectations`]), the stationary distribution, and the exact
//! long-run mean gap between completions of the *pattern* "attacked, then
//! quiet" for one player ([`exact_mean_pattern_gap`]) — the pattern is what
//! triggers an alert purchase in the trading game.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{derive_rng, SimRng};

/// Number of joint attack states.
pub const STATE_COUNT: usize = 4;

/// Joint attack outcome for one round: `attacked[i]` is whether player `i`
/// was attacked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttackState {
    pub attacked: [bool; 2],
}

impl AttackState {
    pub const fn new(player0: bool, player1: bool) -> Self {
        AttackState {
            attacked: [player0, player1],
        }
    }

    pub const fn none() -> Self {
        AttackState::new(false, false)
    }

    /// All states in canonical order: `(-,-), (a,-), (-,a), (a,a)`.
    pub const ALL: [AttackState; STATE_COUNT] = [
        AttackState::new(false, false),
        AttackState::new(true, false),
        AttackState::new(false, true),
        AttackState::new(true, true),
    ];

    /// Canonical index: bit 0 for player 0, bit 1 for player 1.
    pub const fn index(self) -> usize {
        self.attacked[0] as usize | ((self.attacked[1] as usize) << 1)
    }

    pub const fn from_index(index: usize) -> Self {
        AttackState::new(index & 1 != 0, index & 2 != 0)
    }

    /// True if either player was attacked.
    pub const fn any(self) -> bool {
        self.attacked[0] || self.attacked[1]
    }

    pub const fn attacked(self, player: usize) -> bool {
        self.attacked[player]
    }
}

impl std::fmt::Display for AttackState {
    /// Compact two-character form: `a` attacked, `-` quiet (player 0 first).
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = |b: bool| if b { 'a' } else { '-' };
        write!(f, "{}{}", c(self.attacked[0]), c(self.attacked[1]))
    }
}

/// Chain parameters: quiet-regime attack probability `p` and persistence
/// probability `q`, with `0 <= p <= q <= 1`.
///
/// The trading-game analysis additionally assumes `p < q` strictly (see
/// [`crate::game::GameParams`]); the chain itself is well-defined for
/// `p == q`, which degenerates to i.i.d. attack bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    pub p: f64,
    pub q: f64,
}

/// Invalid or degenerate chain parameters.
#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("probability {name} = {value} must be in [0, 1]")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("need p <= q, got p = {p}, q = {q}")]
    Ordering { p: f64, q: f64 },
    #[error("{what} requires {constraint} (p = {p}, q = {q})")]
    Degenerate {
        what: &'static str,
        constraint: &'static str,
        p: f64,
        q: f64,
    },
    #[error("pattern statistics need at least one trial")]
    NoTrials,
}

impl ChainParams {
    pub fn new(p: f64, q: f64) -> Result<Self, ChainError> {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(ChainError::InvalidProbability { name: "p", value: p });
        }
        if !(0.0..=1.0).contains(&q) || q.is_nan() {
            return Err(ChainError::InvalidProbability { name: "q", value: q });
        }
        if p > q {
            return Err(ChainError::Ordering { p, q });
        }
        Ok(ChainParams { p, q })
    }

    /// Per-player attack probability for the round following `prev`.
    /// `None` is the dummy pre-game state and counts as "someone attacked",
    /// so the first round uses `q`.
    pub fn attack_probability(&self, prev: Option<AttackState>) -> f64 {
        match prev {
            None => self.q,
            Some(state) if state.any() => self.q,
            Some(_) => self.p,
        }
    }
}

/// Row-stochastic transition matrix in canonical state order.
/// `m[s][t]` is the probability of moving from state `s` to state `t`.
pub fn transition_matrix(params: &ChainParams) -> [[f64; STATE_COUNT]; STATE_COUNT] {
    let mut m = [[0.0; STATE_COUNT]; STATE_COUNT];
    for from in AttackState::ALL {
        let r = params.attack_probability(Some(from));
        for to in AttackState::ALL {
            let prob0 = if to.attacked(0) { r } else { 1.0 - r };
            let prob1 = if to.attacked(1) { r } else { 1.0 - r };
            m[from.index()][to.index()] = prob0 * prob1;
        }
    }
    m
}

/// Samples the next joint state. Player 0's bit is drawn first; the two bits
/// are conditionally independent given the previous state.
pub fn sample_next(prev: Option<AttackState>, params: &ChainParams, rng: &mut SimRng) -> AttackState {
    let r = params.attack_probability(prev);
    let p0 = rng.gen_bool(r);
    let p1 = rng.gen_bool(r);
    AttackState::new(p0, p1)
}

/// Attack probability one round after a player saw "attacked, then quiet":
/// `p' = (1 - q) * p + q^2`.
///
/// The quiet round had someone-attacked dynamics; the next round is quiet
/// dynamics with probability `1 - q` (the other player was also quiet) and
/// persistence dynamics with probability `q`. For `p < q` this lands strictly
/// between them: `p < p' < q`.
pub fn p_prime(params: &ChainParams) -> f64 {
    (1.0 - params.q) * params.p + params.q * params.q
}

/// Exact expected run lengths for player 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunExpectations {
    /// Expected length of the initial attack run (consecutive attacked rounds
    /// from round 1): `q / (1 - q)`.
    pub mean_attack_run: f64,
    /// Expected truce length (consecutive quiet rounds for player 0 starting
    /// after a round in which nobody was attacked), computed numerically.
    pub mean_truce_run: f64,
}

/// Tail mass below which the truce-expectation series is truncated.
const TRUCE_TAIL_EPS: f64 = 1e-12;

/// Exact expectations of the initial attack-run length and the truce length.
///
/// The attack run is geometric with continuation probability `q` (a player's
/// own attack keeps the chain in the someone-attacked regime), giving mean
/// `q / (1 - q)` — e.g. 1.5 rounds at `q = 0.6`. The truce expectation has no
/// closed form because the other player's attacks can end a truce early; it
/// is summed as `Σ P(truce survives n rounds)` over the sub-chain of
/// player-0-quiet states until the surviving mass drops below `1e-12`.
///
/// Requires `q < 1` (else attack runs never end) and `p > 0` (else truces
/// never end).
pub fn exact_run_expectations(params: &ChainParams) -> Result<RunExpectations, ChainError> {
    if params.q >= 1.0 {
        return Err(ChainError::Degenerate {
            what: "mean attack run",
            constraint: "q < 1",
            p: params.p,
            q: params.q,
        });
    }
    if params.p <= 0.0 {
        return Err(ChainError::Degenerate {
            what: "mean truce run",
            constraint: "p > 0",
            p: params.p,
            q: params.q,
        });
    }
    let q = params.q;
    let p = params.p;
    let mean_attack_run = q / (1.0 - q);

    // Survival masses over the two player-0-quiet states: (-,-) and (-,a).
    // The truce starts right after a round with no attacks at all.
    let mut quiet_both = 1.0f64;
    let mut quiet_self = 0.0f64;
    let mut mean_truce_run = 0.0f64;
    loop {
        let next_both = quiet_both * (1.0 - p) * (1.0 - p) + quiet_self * (1.0 - q) * (1.0 - q);
        let next_self = quiet_both * (1.0 - p) * p + quiet_self * (1.0 - q) * q;
        quiet_both = next_both;
        quiet_self = next_self;
        let surviving = quiet_both + quiet_self;
        if surviving < TRUCE_TAIL_EPS {
            break;
        }
        mean_truce_run += surviving;
    }
    Ok(RunExpectations {
        mean_attack_run,
        mean_truce_run,
    })
}

/// Loose closed-form upper bound on the expected truce length:
/// `q * (1 - p) / p^2 + 1`.
pub fn truce_run_upper_bound(params: &ChainParams) -> f64 {
    params.q * (1.0 - params.p) / (params.p * params.p) + 1.0
}

/// Closed-form upper bound on the expected gap between pattern completions:
/// `2 + 1/(1 - q) + q(1 - p)/p^2` (one pattern, the following attack run, and
/// the truce bound). The exact value from [`exact_mean_pattern_gap`] is far
/// smaller for typical parameters.
pub fn pattern_gap_upper_bound(params: &ChainParams) -> f64 {
    2.0 + 1.0 / (1.0 - params.q) + params.q * (1.0 - params.p) / (params.p * params.p)
}

/// Stationary distribution of the four-state chain, solved directly from the
/// balance equations. Requires irreducibility: `p > 0` and `q < 1`.
pub fn stationary_distribution(params: &ChainParams) -> Result<[f64; STATE_COUNT], ChainError> {
    if params.p <= 0.0 || params.q >= 1.0 {
        return Err(ChainError::Degenerate {
            what: "stationary distribution",
            constraint: "0 < p and q < 1",
            p: params.p,
            q: params.q,
        });
    }
    let m = transition_matrix(params);
    // Solve (P^T - I) pi = 0 with the last balance equation replaced by the
    // normalization sum(pi) = 1.
    let mut a = [[0.0f64; STATE_COUNT + 1]; STATE_COUNT];
    for row in 0..STATE_COUNT {
        for col in 0..STATE_COUNT {
            a[row][col] = m[col][row] - if row == col { 1.0 } else { 0.0 };
        }
    }
    a[STATE_COUNT - 1][..STATE_COUNT].fill(1.0);
    a[STATE_COUNT - 1][STATE_COUNT] = 1.0;

    // Gaussian elimination with partial pivoting on the 4x5 system.
    for col in 0..STATE_COUNT {
        let pivot = (col..STATE_COUNT)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        a.swap(col, pivot);
        let lead = a[col][col];
        debug_assert!(lead.abs() > 1e-14, "singular stationary system");
        let pivot_row = a[col];
        for (row, values) in a.iter_mut().enumerate() {
            if row == col {
                continue;
            }
            let factor = values[col] / lead;
            for (value, pivot_value) in values.iter_mut().zip(pivot_row).skip(col) {
                *value -= factor * pivot_value;
            }
        }
    }
    let mut pi = [0.0; STATE_COUNT];
    for (i, value) in pi.iter_mut().enumerate() {
        *value = a[i][STATE_COUNT] / a[i][i];
    }
    Ok(pi)
}

/// Exact long-run mean number of rounds between consecutive completions of
/// player 0's pattern (an attacked round immediately followed by a quiet
/// round).
///
/// In the stationary chain a completion happens at round `n` with probability
/// `P(player 0 attacked at n-1) * (1 - q)`, and the mean gap is the
/// reciprocal of that rate. For `p == q` (i.i.d. rounds) this reduces to
/// `1 / (q * (1 - q))`.
pub fn exact_mean_pattern_gap(params: &ChainParams) -> Result<f64, ChainError> {
    let pi = stationary_distribution(params)?;
    let attacked_mass = pi[1] + pi[3];
    let rate = attacked_mass * (1.0 - params.q);
    if rate <= 0.0 {
        return Err(ChainError::Degenerate {
            what: "pattern gap",
            constraint: "a positive completion rate",
            p: params.p,
            q: params.q,
        });
    }
    Ok(1.0 / rate)
}

/// Length of player 0's initial attack run in a fresh trajectory, capped at
/// `cap` rounds. Round 1 uses `q` (dummy start counts as attacked).
pub fn sample_initial_attack_run(params: &ChainParams, rng: &mut SimRng, cap: u64) -> u64 {
    let mut prev: Option<AttackState> = None;
    let mut run = 0;
    while run < cap {
        let state = sample_next(prev, params, rng);
        if !state.attacked(0) {
            break;
        }
        run += 1;
        prev = Some(state);
    }
    run
}

/// Length of player 0's truce starting from a round in which nobody was
/// attacked, capped at `cap` rounds.
pub fn sample_initial_truce_run(params: &ChainParams, rng: &mut SimRng, cap: u64) -> u64 {
    let mut prev = Some(AttackState::none());
    let mut run = 0;
    while run < cap {
        let state = sample_next(prev, params, rng);
        if state.attacked(0) {
            break;
        }
        run += 1;
        prev = Some(state);
    }
    run
}

/// Monte Carlo estimates of the two run-length expectations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunLengthStats {
    pub mean_attack_run: f64,
    pub attack_run_se: f64,
    pub mean_truce_run: f64,
    pub truce_run_se: f64,
    pub trials: u64,
    pub cap: u64,
    pub seed: u64,
}

/// Samples `trials` independent attack runs and truces (each from its own
/// derived generator) and reports means with standard errors.
pub fn sample_run_lengths(
    params: &ChainParams,
    trials: u64,
    cap: u64,
    seed: u64,
) -> Result<RunLengthStats, ChainError> {
    if trials == 0 {
        return Err(ChainError::NoTrials);
    }
    let mut attack = Accumulator::default();
    let mut truce = Accumulator::default();
    for t in 0..trials {
        let mut rng_a = derive_rng(seed, "run.attack", t);
        attack.push(sample_initial_attack_run(params, &mut rng_a, cap) as f64);
        let mut rng_t = derive_rng(seed, "run.truce", t);
        truce.push(sample_initial_truce_run(params, &mut rng_t, cap) as f64);
    }
    Ok(RunLengthStats {
        mean_attack_run: attack.mean(),
        attack_run_se: attack.standard_error(),
        mean_truce_run: truce.mean(),
        truce_run_se: truce.standard_error(),
        trials,
        cap,
        seed,
    })
}

/// Monte Carlo summary of full trajectories: run lengths plus the gaps
/// between pattern completions for player 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    /// Mean initial attack run across trajectories.
    pub mean_attack_run: f64,
    /// Mean truce length across per-trial truce trajectories.
    pub mean_truce_run: f64,
    /// Mean gap between consecutive pattern completions, pooled over all
    /// trajectories; `None` if fewer than two completions were ever observed
    /// in the same trajectory.
    pub mean_pattern_gap: Option<f64>,
    /// Standard error of the pooled gap mean (`None` alongside the mean).
    pub pattern_gap_se: Option<f64>,
    /// Total number of gaps observed.
    pub gap_count: u64,
    pub trial_count: u64,
    pub horizon: u64,
    pub seed: u64,
}

/// Simulates `trials` trajectories of `horizon` rounds each and measures the
/// gaps between consecutive completions of player 0's attacked-then-quiet
/// pattern, along with the run-length statistics from the same trajectories.
///
/// An absent pattern (e.g. `q` too close to 1 for the horizon) is reported as
/// `mean_pattern_gap = None`, never as zero.
pub fn pattern_statistics(
    params: &ChainParams,
    horizon: u64,
    trials: u64,
    seed: u64,
) -> Result<RunStats, ChainError> {
    if trials == 0 {
        return Err(ChainError::NoTrials);
    }
    let mut attack = Accumulator::default();
    let mut truce = Accumulator::default();
    let mut gaps = Accumulator::default();
    for t in 0..trials {
        let mut rng = derive_rng(seed, "pattern.main", t);
        let mut prev: Option<AttackState> = None;
        let mut initial_run = 0u64;
        let mut in_initial_run = true;
        let mut last_completion: Option<u64> = None;
        for round in 1..=horizon {
            let state = sample_next(prev, params, &mut rng);
            if in_initial_run {
                if state.attacked(0) {
                    initial_run += 1;
                } else {
                    in_initial_run = false;
                }
            }
            let completed = matches!(prev, Some(s) if s.attacked(0)) && !state.attacked(0);
            if completed {
                if let Some(at) = last_completion {
                    gaps.push((round - at) as f64);
                }
                last_completion = Some(round);
            }
            prev = Some(state);
        }
        attack.push(initial_run as f64);

        let mut rng_t = derive_rng(seed, "pattern.truce", t);
        truce.push(sample_initial_truce_run(params, &mut rng_t, horizon) as f64);
    }
    let (mean_pattern_gap, pattern_gap_se) = if gaps.count == 0 {
        (None, None)
    } else {
        (Some(gaps.mean()), Some(gaps.standard_error()))
    };
    Ok(RunStats {
        mean_attack_run: attack.mean(),
        mean_truce_run: truce.mean(),
        mean_pattern_gap,
        pattern_gap_se,
        gap_count: gaps.count,
        trial_count: trials,
        horizon,
        seed,
    })
}

/// Running mean / standard-error accumulator (Welford's algorithm).
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Accumulator {
    pub count: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}
