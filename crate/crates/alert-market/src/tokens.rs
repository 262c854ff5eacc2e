//! Exact token arithmetic as scaled integers.
//!
//! All ledger-facing quantities (prices, fees, deposits, per-round costs) are
//! carried in milli-tokens (1 token = 1000 milli) inside an `i64`. Costs can
//! legitimately go negative (a seller's disclosure cost minus the price
//! received), so the representation is signed. Analysis formulas that need
//! real arithmetic convert through [`Tokens::to_f64`]; everything that must
//! balance to zero stays in integers.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Milli-tokens per whole token.
pub const MILLI_PER_TOKEN: i64 = 1_000;

/// A signed token amount with milli-token resolution.
///
/// Serializes as the raw milli-token integer so JSON logs round-trip exactly;
/// `Display`/`FromStr` use the decimal form (`"1.5"`, `"-0.8"`, `"10"`).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Tokens(i64);

impl Tokens {
    pub const ZERO: Tokens = Tokens(0);

    /// Amount from a raw milli-token count.
    pub const fn from_milli(milli: i64) -> Self {
        Tokens(milli)
    }

    /// Amount from a whole number of tokens.
    pub const fn from_whole(tokens: i64) -> Self {
        Tokens(tokens * MILLI_PER_TOKEN)
    }

    /// Raw milli-token count.
    pub const fn milli(self) -> i64 {
        self.0
    }

    /// Value in tokens as a float (analysis use only).
    pub fn to_f64(self) -> f64 {
        self.0 as f64 / MILLI_PER_TOKEN as f64
    }

    /// Nearest-milli conversion from a float token amount.
    ///
    /// Used where an analytically computed price (an `f64`) has to enter the
    /// integer ledger, e.g. resolving a `--price opt` flag.
    pub fn from_f64_rounded(tokens: f64) -> Self {
        Tokens((tokens * MILLI_PER_TOKEN as f64).round() as i64)
    }

    pub const fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub const fn is_positive(self) -> bool {
        self.0 > 0
    }

    /// Saturating multiply by a small integer factor (used for bound checks).
    pub const fn scaled(self, factor: i64) -> Self {
        Tokens(self.0.saturating_mul(factor))
    }
}

impl Add for Tokens {
    type Output = Tokens;
    fn add(self, rhs: Tokens) -> Tokens {
        Tokens(self.0.checked_add(rhs.0).expect("token amount overflow"))
    }
}

impl Sub for Tokens {
    type Output = Tokens;
    fn sub(self, rhs: Tokens) -> Tokens {
        Tokens(self.0.checked_sub(rhs.0).expect("token amount overflow"))
    }
}

impl Neg for Tokens {
    type Output = Tokens;
    fn neg(self) -> Tokens {
        Tokens(-self.0)
    }
}

impl AddAssign for Tokens {
    fn add_assign(&mut self, rhs: Tokens) {
        *self = *self + rhs;
    }
}

impl SubAssign for Tokens {
    fn sub_assign(&mut self, rhs: Tokens) {
        *self = *self - rhs;
    }
}

impl Sum for Tokens {
    fn sum<I: Iterator<Item = Tokens>>(iter: I) -> Tokens {
        iter.fold(Tokens::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Tokens {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = abs / MILLI_PER_TOKEN as u64;
        let frac = abs % MILLI_PER_TOKEN as u64;
        if frac == 0 {
            write!(f, "{sign}{whole}")
        } else {
            let s = format!("{frac:03}");
            write!(f, "{sign}{whole}.{}", s.trim_end_matches('0'))
        }
    }
}

/// Failure to parse a decimal token amount.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenParseError {
    #[error("empty token amount")]
    Empty,
    #[error("invalid token amount {0:?}")]
    Malformed(String),
    #[error("token amount {0:?} has more than 3 decimal places")]
    TooPrecise(String),
    #[error("token amount {0:?} out of range")]
    OutOfRange(String),
}

impl std::str::FromStr for Tokens {
    type Err = TokenParseError;

    /// Parses decimal token amounts with up to three fractional digits:
    /// `"10"`, `"0.2"`, `"-1.505"`.
    fn from_str(s: &str) -> Result<Self, TokenParseError> {
        let s = s.trim();
        if s.is_empty() {
            return Err(TokenParseError::Empty);
        }
        let (sign, body) = match s.strip_prefix('-') {
            Some(rest) => (-1i64, rest),
            None => (1i64, s.strip_prefix('+').unwrap_or(s)),
        };
        let (whole_str, frac_str) = match body.split_once('.') {
            Some((w, f)) => (w, f),
            None => (body, ""),
        };
        if whole_str.is_empty() && frac_str.is_empty() {
            return Err(TokenParseError::Malformed(s.to_string()));
        }
        if !whole_str.chars().all(|c| c.is_ascii_digit())
            || !frac_str.chars().all(|c| c.is_ascii_digit())
        {
            return Err(TokenParseError::Malformed(s.to_string()));
        }
        if frac_str.len() > 3 {
            return Err(TokenParseError::TooPrecise(s.to_string()));
        }
        let whole: i64 = if whole_str.is_empty() {
            0
        } else {
            whole_str
                .parse()
                .map_err(|_| TokenParseError::OutOfRange(s.to_string()))?
        };
        let mut frac: i64 = if frac_str.is_empty() {
            0
        } else {
            frac_str
                .parse()
                .map_err(|_| TokenParseError::OutOfRange(s.to_string()))?
        };
        for _ in frac_str.len()..3 {
            frac *= 10;
        }
        whole
            .checked_mul(MILLI_PER_TOKEN)
            .and_then(|w| w.checked_add(frac))
            .and_then(|m| m.checked_mul(sign))
            .map(Tokens)
            .ok_or_else(|| TokenParseError::OutOfRange(s.to_string()))
    }
}
