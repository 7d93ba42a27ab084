//! Deposit sizing: `floor(max(s · 10^(ln k), f / k))`.
//!
//! Only the transcendental factor `10^(ln k)` is evaluated in `f64`. Both
//! products are then formed exactly by treating each `f64` as the dyadic
//! rational it represents, and the result is floored once.

use num_bigint::BigUint;

use super::LotteryError;
use crate::chain::Money;

/// Splits a finite positive float into `(mantissa, exponent)` with
/// `x = mantissa · 2^exponent` exactly.
fn dyadic(x: f64) -> (u64, i32) {
    let bits = x.to_bits();
    let exp_field = ((bits >> 52) & 0x7ff) as i32;
    let fraction = bits & ((1u64 << 52) - 1);
    if exp_field == 0 {
        (fraction, -1074)
    } else {
        (fraction | (1u64 << 52), exp_field - 1075)
    }
}

/// `floor(value · x)` for a finite positive float `x`.
fn floor_mul(value: Money, x: f64) -> BigUint {
    let (mantissa, exp) = dyadic(x);
    let product = BigUint::from(value) * BigUint::from(mantissa);
    if exp >= 0 {
        product << exp as usize
    } else {
        product >> (-exp) as usize
    }
}

/// `floor(value / x)` for a finite positive float `x`.
fn floor_div(value: Money, x: f64) -> BigUint {
    let (mantissa, exp) = dyadic(x);
    if exp >= 0 {
        BigUint::from(value) / (BigUint::from(mantissa) << exp as usize)
    } else {
        (BigUint::from(value) << (-exp) as usize) / BigUint::from(mantissa)
    }
}

/// The share-price scaling factor `10^(ln k)`.
pub fn price_multiplier(security_factor: f64) -> f64 {
    10f64.powf(security_factor.ln())
}

/// Deposit a player must escrow with their key.
///
/// The config layer enforces `1 < k < 2`; this function only needs `k > 0`,
/// which lets `k = 1` be probed directly.
pub fn compute_deposit(share_price: Money, security_factor: f64, player_balance: Money) -> Result<Money, LotteryError> {
    if !(security_factor.is_finite() && security_factor > 0.0) {
        return Err(LotteryError::InvalidSecurityFactor(security_factor));
    }
    let price_term = floor_mul(share_price, price_multiplier(security_factor));
    let balance_term = floor_div(player_balance, security_factor);
    let deposit = price_term.max(balance_term);
    Money::try_from(deposit).map_err(|_| LotteryError::Overflow)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_factor_is_identity() {
        assert_eq!(price_multiplier(1.0), 1.0);
        assert_eq!(compute_deposit(5, 1.0, 3).unwrap(), 5);
        assert_eq!(compute_deposit(3, 1.0, 5).unwrap(), 5);
    }

    #[test]
    fn price_term_dominates_for_empty_balance() {
        // 10^(ln 1.5) = 2.543695420487..., frozen from a 60-digit evaluation.
        assert_eq!(compute_deposit(1_000_000, 1.5, 0).unwrap(), 2_543_695);
    }

    #[test]
    fn balance_term_dominates_for_rich_player() {
        assert_eq!(compute_deposit(1_000_000, 1.5, 1_000_000_000).unwrap(), 666_666_666);
    }

    #[test]
    fn dyadic_is_exact() {
        for x in [1.5, 0.1, 2.5437, 1e-310, 123456.789] {
            let (m, e) = dyadic(x);
            assert_eq!(m as f64 * 2f64.powi(e), x);
        }
    }

    #[test]
    fn rejects_nonpositive_factor() {
        assert!(compute_deposit(1, 0.0, 1).is_err());
        assert!(compute_deposit(1, f64::NAN, 1).is_err());
    }
}
