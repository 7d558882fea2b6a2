//! Exact integer and rational primitives: harmonic numbers, binomial
//! coefficients and Stirling numbers of the second kind.

use std::sync::{OnceLock, RwLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type ExactInteger = BigInt;
pub type ExactRatio = BigRational;

/// Largest `r` whose Stirling row is kept in the shared memo table.
pub const STIRLING_MEMO_LIMIT: usize = 256;

/// Nearest double to an exact ratio.
pub fn to_f64(value: &ExactRatio) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

pub fn ratio(numer: impl Into<BigInt>, denom: impl Into<BigInt>) -> ExactRatio {
    BigRational::new(numer.into(), denom.into())
}

/// `H_n = 1 + 1/2 + ... + 1/n`.
pub fn harmonic(n: u64) -> Result<ExactRatio> {
    if n == 0 {
        return Err(Error::domain("harmonic number needs n >= 1"));
    }
    Ok((1..=n).fold(ExactRatio::zero(), |acc, i| {
        acc + ratio(1, i)
    }))
}

/// `C(n, k)`, zero when `k > n`.
pub fn binomial(n: u64, k: u64) -> ExactInteger {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        // Exact at every step: acc * (n - i) is divisible by (i + 1).
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

pub fn factorial(n: u64) -> ExactInteger {
    (1..=n).fold(BigInt::one(), |acc, i| acc * i)
}

fn stirling_table() -> &'static RwLock<Vec<Vec<BigInt>>> {
    static TABLE: OnceLock<RwLock<Vec<Vec<BigInt>>>> = OnceLock::new();
    TABLE.get_or_init(|| RwLock::new(vec![vec![BigInt::one()]]))
}

fn next_row(prev: &[BigInt]) -> Vec<BigInt> {
    let r = prev.len();
    let mut row = vec![BigInt::zero(); r + 1];
    for m in 1..=r {
        let carry = if m < prev.len() {
            &prev[m] * m
        } else {
            BigInt::zero()
        };
        row[m] = carry + &prev[m - 1];
    }
    row
}

/// Stirling number of the second kind `S(r, m)`: partitions of an `r`-set
/// into `m` nonempty blocks.
pub fn stirling2(r: usize, m: usize) -> ExactInteger {
    if m > r {
        return BigInt::zero();
    }
    if r > STIRLING_MEMO_LIMIT {
        let mut row = vec![BigInt::one()];
        for _ in 0..r {
            row = next_row(&row);
        }
        return row.swap_remove(m);
    }
    {
        let table = stirling_table().read().expect("stirling memo poisoned");
        if let Some(row) = table.get(r) {
            return row[m].clone();
        }
    }
    let mut table = stirling_table().write().expect("stirling memo poisoned");
    while table.len() <= r {
        let row = next_row(table.last().expect("row 0 is seeded"));
        table.push(row);
    }
    table[r][m].clone()
}

/// Number of surjections from an `r`-set onto `m` labelled bins, times the
/// ways to choose those bins among `bins`: `C(bins, m) * m! * S(r, m)`.
pub fn occupancy_count(bins: u64, r: usize, m: usize) -> ExactInteger {
    binomial(bins, m as u64) * factorial(m as u64) * stirling2(r, m)
}
