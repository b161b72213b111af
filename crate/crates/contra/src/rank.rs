//! Path ranks: vectors of extended non-negative rationals ordered
//! lexicographically, with infinity dominating every finite value.

use std::cmp::Ordering;
use std::fmt;

use num_rational::Ratio;
use num_traits::{Signed, Zero};

/// Exact rational used for all rank arithmetic. Utilizations coming from the
/// simulator are quantized to a multiple of 1/UTIL_QUANTUM before entering here, so
/// denominators stay small and comparisons are bit-exact across runs.
pub type Rat = Ratio<i64>;

/// Quantization unit for measured utilizations.
pub const UTIL_QUANTUM: i64 = 8;

/// Quantize a measured utilization in [0,1] to an exact rational.
pub fn quantize_util(u: f64) -> Rat {
    let clamped = u.clamp(0.0, 1.0);
    let num = (clamped * UTIL_QUANTUM as f64).round() as i64;
    Rat::new(num.min(UTIL_QUANTUM), UTIL_QUANTUM)
}

/// A single rank component: a non-negative rational or infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ext {
    Finite(Rat),
    Inf,
}

impl Ext {
    pub fn zero() -> Self {
        Ext::Finite(Rat::zero())
    }

    pub fn from_int(n: i64) -> Self {
        Ext::Finite(Rat::from_integer(n))
    }

    pub fn is_inf(&self) -> bool {
        matches!(self, Ext::Inf)
    }
}

impl PartialOrd for Ext {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ext {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Ext::Inf, Ext::Inf) => Ordering::Equal,
            (Ext::Inf, Ext::Finite(_)) => Ordering::Greater,
            (Ext::Finite(_), Ext::Inf) => Ordering::Less,
            (Ext::Finite(a), Ext::Finite(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for Ext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ext::Inf => write!(f, "inf"),
            Ext::Finite(r) => {
                if r.is_integer() {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
        }
    }
}

/// Errors raised by saturating rank arithmetic.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RankArithError {
    #[error("cannot subtract infinity from a finite rank")]
    SubtractInf,
}

impl Ext {
    /// Saturating addition: inf absorbs.
    pub fn add(self, other: Ext) -> Ext {
        match (self, other) {
            (Ext::Finite(a), Ext::Finite(b)) => Ext::Finite(a + b),
            _ => Ext::Inf,
        }
    }

    /// Saturating multiplication: inf absorbs.
    pub fn mul(self, other: Ext) -> Ext {
        match (self, other) {
            (Ext::Finite(a), Ext::Finite(b)) => Ext::Finite(a * b),
            _ => Ext::Inf,
        }
    }

    /// Subtraction clamped at zero. `x - inf` is an error; `inf - x` stays
    /// inf. Returns the result and whether clamping occurred.
    pub fn sub(self, other: Ext) -> Result<(Ext, bool), RankArithError> {
        match (self, other) {
            (_, Ext::Inf) => match self {
                Ext::Inf => Ok((Ext::Inf, false)),
                Ext::Finite(_) => Err(RankArithError::SubtractInf),
            },
            (Ext::Inf, Ext::Finite(_)) => Ok((Ext::Inf, false)),
            (Ext::Finite(a), Ext::Finite(b)) => {
                let d = a - b;
                if d.is_negative() {
                    Ok((Ext::zero(), true))
                } else {
                    Ok((Ext::Finite(d), false))
                }
            }
        }
    }
}

/// A rank: fixed-arity vector compared lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RankValue(pub Vec<Ext>);

impl RankValue {
    pub fn scalar(e: Ext) -> Self {
        RankValue(vec![e])
    }

    pub fn inf(arity: usize) -> Self {
        let mut v = vec![Ext::zero(); arity];
        if arity > 0 {
            v[0] = Ext::Inf;
        }
        RankValue(v)
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn is_inf(&self) -> bool {
        self.0.first().map(|e| e.is_inf()).unwrap_or(false)
    }

    /// Pad with trailing zeros to the given arity.
    pub fn pad_to(mut self, arity: usize) -> Self {
        while self.0.len() < arity {
            self.0.push(Ext::zero());
        }
        self
    }

    /// Lexicographic comparison. Arity mismatch is a compile-time bug.
    pub fn compare(&self, other: &RankValue) -> Ordering {
        assert_eq!(
            self.arity(),
            other.arity(),
            "rank arity mismatch: {} vs {}",
            self.arity(),
            other.arity()
        );
        self.0.cmp(&other.0)
    }
}

impl PartialOrd for RankValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.compare(other))
    }
}

impl Ord for RankValue {
    fn cmp(&self, other: &Self) -> Ordering {
        self.compare(other)
    }
}

impl fmt::Display for RankValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}
