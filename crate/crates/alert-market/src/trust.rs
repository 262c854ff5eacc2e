//! Bayesian trust scoring from rating evidence and burned collateral.
//!
//! A party's trust is the expectation `E = c_e * t + (1 - c_e) * f`:
//!
//! * `t` — point estimate, the fraction of positive ratings;
//! * `c_e` — certainty weight in `[0,1]` that grows with the evidence count
//!   `n` and saturates at a threshold `N`, fading the prior out;
//! * `f` — a prior earned by *burning* tokens at registration, so that a
//!   fresh identity cannot start with meaningful trust for free.
//!
//! The burn prior is `f1(r) = 1 - 1/(1 + log2(r + 1))` of the burned-to-
//! baseline ratio `r`: it reaches 0.5 at exactly the baseline burn and then
//! grows only logarithmically, so outspending the baseline buys very little
//! extra prior (burning 20x the baseline still stays below 0.82). The faster
//! alternative `f2(r) = 1 - (1/2)^r` is provided for comparison.
//!
//! The evidence threshold `N` can be fixed (a value in 10..=15 behaves well)
//! or derived from a target confidence interval: `N` is the number of
//! Bernoulli samples after which a `100*(1-z)%` CI for the underlying rate
//! has length at most `1 - c`, evaluated at the current point estimate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokens::Tokens;

/// Rating evidence counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Evidence {
    pub positive: u64,
    pub negative: u64,
}

impl Evidence {
    pub const EMPTY: Evidence = Evidence {
        positive: 0,
        negative: 0,
    };

    pub const fn new(positive: u64, negative: u64) -> Self {
        Evidence { positive, negative }
    }

    pub const fn total(self) -> u64 {
        self.positive + self.negative
    }

    /// Adds one rating.
    pub fn record(&mut self, positive: bool) {
        if positive {
            self.positive += 1;
        } else {
            self.negative += 1;
        }
    }

    /// Removes one rating (used when a rating is replaced).
    pub fn unrecord(&mut self, positive: bool) {
        if positive {
            debug_assert!(self.positive > 0);
            self.positive = self.positive.saturating_sub(1);
        } else {
            debug_assert!(self.negative > 0);
            self.negative = self.negative.saturating_sub(1);
        }
    }
}

/// Invalid trust inputs or configuration.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrustError {
    #[error("{name} = {value} must be in {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("evidence threshold must be at least 1")]
    ZeroThreshold,
    #[error("certainty weight w must be positive, got {0}")]
    BadWeight(f64),
    #[error("burn baseline must be positive, got {0}")]
    BadBaseline(Tokens),
    #[error("burned amount must be non-negative, got {0}")]
    NegativeBurn(Tokens),
}

/// How the evidence threshold `N` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThresholdMode {
    /// Constant `N`.
    Fixed(u32),
    /// Derive `N` from a confidence-interval target: `significance` is `z`
    /// (the CI covers with probability `1 - z`) and `certainty_level` is `c`
    /// (the CI length is `1 - c`).
    ConfidenceInterval {
        significance: f64,
        certainty_level: f64,
    },
}

/// Scoring configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustConfig {
    pub threshold: ThresholdMode,
    /// Normalizing weight `w` in the certainty formula.
    pub weight: f64,
    /// Burn amount that buys a prior of exactly 0.5.
    pub burn_baseline: Tokens,
}

impl Default for TrustConfig {
    fn default() -> Self {
        TrustConfig {
            threshold: ThresholdMode::Fixed(12),
            weight: 1.0,
            burn_baseline: Tokens::from_whole(1),
        }
    }
}

impl TrustConfig {
    pub fn validate(&self) -> Result<(), TrustError> {
        match self.threshold {
            ThresholdMode::Fixed(n) => {
                if n == 0 {
                    return Err(TrustError::ZeroThreshold);
                }
            }
            ThresholdMode::ConfidenceInterval {
                significance,
                certainty_level,
            } => {
                if !(0.0 < significance && significance < 1.0) {
                    return Err(TrustError::OutOfRange {
                        name: "significance",
                        value: significance,
                        range: "(0, 1)",
                    });
                }
                if !(0.0 < certainty_level && certainty_level < 1.0) {
                    return Err(TrustError::OutOfRange {
                        name: "certainty_level",
                        value: certainty_level,
                        range: "(0, 1)",
                    });
                }
            }
        }
        if self.weight.is_nan() || self.weight <= 0.0 {
            return Err(TrustError::BadWeight(self.weight));
        }
        if !self.burn_baseline.is_positive() {
            return Err(TrustError::BadBaseline(self.burn_baseline));
        }
        Ok(())
    }
}

/// A computed trust score and its components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustScore {
    pub point_estimate: f64,
    pub certainty: f64,
    pub prior: f64,
    pub expectation: f64,
    /// The evidence threshold actually used.
    pub threshold: u32,
}

/// Fraction of positive ratings; zero with no evidence.
pub fn point_estimate(evidence: &Evidence) -> f64 {
    let n = evidence.total();
    if n == 0 {
        0.0
    } else {
        evidence.positive as f64 / n as f64
    }
}

/// Certainty weight: 0 with no evidence, 1 once `count >= threshold`, and
/// `N*n / (2*w*(N-n) + N*n)` in between.
pub fn certainty(count: u64, threshold: u32, weight: f64) -> f64 {
    debug_assert!(threshold >= 1 && weight > 0.0);
    if count == 0 {
        return 0.0;
    }
    if count >= u64::from(threshold) {
        return 1.0;
    }
    let n = count as f64;
    let cap = f64::from(threshold);
    cap * n / (2.0 * weight * (cap - n) + cap * n)
}

/// The trust expectation `c_e * t + (1 - c_e) * f`. All inputs must lie in
/// `[0, 1]`.
pub fn expectation(t: f64, c_e: f64, f: f64) -> Result<f64, TrustError> {
    for (name, value) in [("t", t), ("c_e", c_e), ("f", f)] {
        if !(0.0..=1.0).contains(&value) || value.is_nan() {
            return Err(TrustError::OutOfRange {
                name,
                value,
                range: "[0, 1]",
            });
        }
    }
    Ok(c_e * t + (1.0 - c_e) * f)
}

/// The burn prior on a raw burned-to-baseline ratio:
/// `f1(r) = 1 - 1/(1 + log2(r + 1))`.
pub fn pob_prior_ratio(ratio: f64) -> f64 {
    debug_assert!(ratio >= 0.0);
    1.0 - 1.0 / (1.0 + (ratio + 1.0).log2())
}

/// The comparison prior `f2(r) = 1 - (1/2)^r`, which saturates much faster.
pub fn pob_prior_alt_ratio(ratio: f64) -> f64 {
    debug_assert!(ratio >= 0.0);
    1.0 - 0.5f64.powf(ratio)
}

/// Prior from burned tokens: `f1(burned / baseline)`. Zero burn gives zero
/// prior; burning exactly the baseline gives 0.5.
pub fn pob_prior(burned: Tokens, baseline: Tokens) -> Result<f64, TrustError> {
    if !baseline.is_positive() {
        return Err(TrustError::BadBaseline(baseline));
    }
    if burned.is_negative() {
        return Err(TrustError::NegativeBurn(burned));
    }
    Ok(pob_prior_ratio(burned.to_f64() / baseline.to_f64()))
}

/// Alternative prior from burned tokens: `f2(burned / baseline)`.
pub fn pob_prior_alt(burned: Tokens, baseline: Tokens) -> Result<f64, TrustError> {
    if !baseline.is_positive() {
        return Err(TrustError::BadBaseline(baseline));
    }
    if burned.is_negative() {
        return Err(TrustError::NegativeBurn(burned));
    }
    Ok(pob_prior_alt_ratio(burned.to_f64() / baseline.to_f64()))
}

/// Inverse standard-normal CDF via Acklam's rational approximation
/// (absolute error below 1.2e-9 across `(0, 1)`).
pub fn inverse_normal_cdf(p: f64) -> Result<f64, TrustError> {
    if !(0.0 < p && p < 1.0) {
        return Err(TrustError::OutOfRange {
            name: "probability",
            value: p,
            range: "(0, 1)",
        });
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |pp: f64| -> f64 {
        // Valid for pp in (0, P_LOW): the lower tail.
        let q = (-2.0 * pp.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    let x = if p < P_LOW {
        tail(p)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail(1.0 - p)
    };
    Ok(x)
}

/// Number of Bernoulli samples needed before a `100*(1-z)%` confidence
/// interval around the point estimate `t` shrinks to length `1 - c`:
///
/// ```text
/// N = (-k^2 A + sqrt(4 u^2 k^4 (1 - u^2) + k^4 A^2)) / (2 u^2)
/// ```
///
/// with `u = 1 - c`, `A = 2u^2 - 4t + 4t^2` and `k` the standard-normal
/// quantile at `1 - z/2`. The real-valued solution is rounded up to an
/// integer (evidence counts are integral); values within 1e-9 of an integer
/// are treated as that integer so float noise cannot inflate `N` by one.
pub fn evidence_threshold(
    significance: f64,
    certainty_level: f64,
    t: f64,
) -> Result<u32, TrustError> {
    if !(0.0 < significance && significance < 1.0) {
        return Err(TrustError::OutOfRange {
            name: "significance",
            value: significance,
            range: "(0, 1)",
        });
    }
    if !(0.0 < certainty_level && certainty_level < 1.0) {
        return Err(TrustError::OutOfRange {
            name: "certainty_level",
            value: certainty_level,
            range: "(0, 1)",
        });
    }
    if !(0.0..=1.0).contains(&t) || t.is_nan() {
        return Err(TrustError::OutOfRange {
            name: "t",
            value: t,
            range: "[0, 1]",
        });
    }
    let u = 1.0 - certainty_level;
    let kappa = inverse_normal_cdf(1.0 - significance / 2.0)?;
    let k2 = kappa * kappa;
    let a = 2.0 * u * u - 4.0 * t + 4.0 * t * t;
    let discriminant = 4.0 * u * u * k2 * k2 * (1.0 - u * u) + k2 * k2 * a * a;
    let n_real = (-k2 * a + discriminant.sqrt()) / (2.0 * u * u);
    let snapped = if (n_real - n_real.round()).abs() < 1e-9 {
        n_real.round()
    } else {
        n_real.ceil()
    };
    Ok((snapped.max(1.0)) as u32)
}

/// Full score composition: resolves the evidence threshold, then combines the
/// point estimate, certainty and burn prior into the expectation.
pub fn score(
    evidence: &Evidence,
    burned: Tokens,
    config: &TrustConfig,
) -> Result<TrustScore, TrustError> {
    config.validate()?;
    let t = point_estimate(evidence);
    let threshold = match config.threshold {
        ThresholdMode::Fixed(n) => n,
        ThresholdMode::ConfidenceInterval {
            significance,
            certainty_level,
        } => evidence_threshold(significance, certainty_level, t)?,
    };
    let c_e = certainty(evidence.total(), threshold, config.weight);
    let prior = pob_prior(burned, config.burn_baseline)?;
    let e = expectation(t, c_e, prior)?;
    Ok(TrustScore {
        point_estimate: t,
        certainty: c_e,
        prior,
        expectation: e,
        threshold,
    })
}
