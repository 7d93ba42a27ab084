//! Test-only oracles shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.scenario"))
}

/// Fixed-point reals with `BITS` fractional bits.
const BITS: u32 = 320;

fn one() -> BigInt {
    BigInt::one() << BITS
}

fn mul(a: &BigInt, b: &BigInt) -> BigInt {
    (a * b) >> BITS
}

fn div(a: &BigInt, b: &BigInt) -> BigInt {
    (a << BITS) / b
}

/// `2 atanh(y) = ln((1 + y) / (1 - y))` by its power series; needs |y| < 1/2.
fn two_atanh(y: &BigInt) -> BigInt {
    let y2 = mul(y, y);
    let mut term = y.clone();
    let mut sum = BigInt::zero();
    let mut n = 1u32;
    while !term.is_zero() {
        sum += &term / BigInt::from(n);
        term = mul(&term, &y2);
        n += 2;
    }
    sum * 2
}

/// Natural log of a positive fixed-point number.
fn ln(x: &BigInt) -> BigInt {
    // Bring x into [1, 2) by powers of two, then use atanh on the rest.
    let ln2 = two_atanh(&div(&one(), &(one() * 3)));
    let mut shift: i64 = 0;
    let mut m = x.clone();
    while m >= one() * 2 {
        m >>= 1;
        shift += 1;
    }
    while m < one() {
        m <<= 1;
        shift -= 1;
    }
    let y = div(&(&m - one()), &(&m + one()));
    two_atanh(&y) + ln2 * shift
}

fn exp(z: &BigInt) -> BigInt {
    assert!(!z.is_negative());
    // Halve until small, sum the series, then square back.
    let mut halvings = 0;
    let mut r = z.clone();
    while r > one() / 4 {
        r >>= 1;
        halvings += 1;
    }
    let mut term = one();
    let mut sum = BigInt::zero();
    let mut n = 1u32;
    while !term.is_zero() {
        sum += &term;
        term = mul(&term, &r) / BigInt::from(n);
        n += 1;
    }
    for _ in 0..halvings {
        sum = mul(&sum, &sum);
    }
    sum
}

/// The f64 as an exact fixed-point value (f64 is a dyadic rational).
fn from_f64(x: f64) -> BigInt {
    assert!(x.is_finite() && x > 0.0);
    let bits = x.to_bits();
    let exponent = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = if exponent == 0 {
        (bits & ((1 << 52) - 1)) << 1
    } else {
        (bits & ((1 << 52) - 1)) | (1 << 52)
    };
    let e = exponent - 1075 + i64::from(BITS);
    let m = BigInt::from(mantissa);
    if e >= 0 {
        m << e as u32
    } else {
        m >> (-e) as u32
    }
}

/// `max(floor(s * 10^(ln k)), floor(f / k))` evaluated with 320-bit
/// fixed-point arithmetic.
pub fn deposit_oracle(share_price: u128, k: f64, balance: u128) -> u128 {
    let kf = from_f64(k);
    let ln10 = ln(&(one() * 10));
    let multiplier = exp(&mul(&ln10, &ln(&kf)));
    let price_term = (BigInt::from(share_price) * multiplier) >> BITS;
    let balance_term = (BigInt::from(balance) << BITS) / kf;
    let d = price_term.max(balance_term);
    BigUint::try_from(d).unwrap().to_u128().unwrap()
}

#[test]
fn oracle_sanity() {
    // 10^(ln 1.5) = 2.5436954204871...
    assert_eq!(deposit_oracle(1_000_000_000_000, 1.5, 0), 2_543_695_420_487);
    assert_eq!(deposit_oracle(1, 1.0, 7), 7);
    assert_eq!(deposit_oracle(0, 1.5, 3_000), 2_000);
}
