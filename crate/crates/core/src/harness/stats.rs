//! Pearson chi-square uniformity test and proportion standard errors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper 1% points of the chi-square distribution for df = 1..=64.
///
/// Generated with `scipy.stats.chi2.ppf(0.99, df)` and printed with
/// Python's shortest round-trip float repr.
pub const CHI2_CRITICAL_01: [f64; 64] = [
    6.6348966010212145, 9.21034037197618, 11.344866730144373, 13.276704135987622,
    15.08627246938899, 16.811893829770927, 18.475306906582357, 20.090235029663233,
    21.665994333461924, 23.209251158954356, 24.724970311318277, 26.216967305535853,
    27.68824961045705, 29.141237740672796, 30.57791416689249, 31.999926908815176,
    33.40866360500461, 34.805305734705065, 36.19086912927004, 37.56623478662507,
    38.93217268351607, 40.289360437593864, 41.638398118858476, 42.97982013935165,
    44.31410489621915, 45.64168266628317, 46.962942124751436, 48.27823577031548,
    49.58788447289881, 50.89218131151707, 52.19139483319193, 53.48577183623535,
    54.77553976011035, 56.06090874778906, 57.3420734338592, 58.61921450168706,
    59.89250004508689, 61.1620867636897, 62.4281210161849, 63.690739751564465,
    64.9500713352112, 66.20623628399322, 67.45934792232582, 68.7095129693454,
    69.95683206583814, 71.20140024831149, 72.44330737654823, 73.68263852010573,
    74.91947430847816, 76.1538912490127, 77.38596201613736, 78.6157557150025,
    79.84333812225145, 81.0687719062971, 82.29211682919967, 83.51342993198946,
    84.73276570506393, 85.95017624510335, 87.16571139978757, 88.37941890144937,
    89.59134449068712, 90.80153203083871, 92.01002361413214, 93.21685966023843,
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("need at least 2 categories, got {0}")]
    TooFewCategories(usize),
    #[error("{0} categories exceed the tabulated range")]
    TooManyCategories(usize),
    #[error("total count is zero")]
    EmptyCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    #[serde(serialize_with = "super::report::float17")]
    pub statistic: f64,
    pub df: usize,
    #[serde(serialize_with = "super::report::float17")]
    pub critical: f64,
    pub pass: bool,
}

/// Critical value at alpha = 0.01, if tabulated.
pub fn critical_value_01(df: usize) -> Option<f64> {
    CHI2_CRITICAL_01.get(df.checked_sub(1)?).copied()
}

/// Tests `counts` against equal expected frequencies.
pub fn chi_square_uniform(counts: &[u64]) -> Result<ChiSquare, StatsError> {
    if counts.len() < 2 {
        return Err(StatsError::TooFewCategories(counts.len()));
    }
    let df = counts.len() - 1;
    let critical = critical_value_01(df).ok_or(StatsError::TooManyCategories(counts.len()))?;
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(StatsError::EmptyCounts);
    }
    let expected = total as f64 / counts.len() as f64;
    let statistic = counts
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum::<f64>();
    Ok(ChiSquare {
        statistic,
        df,
        critical,
        pass: statistic < critical,
    })
}

/// Binomial standard error of `successes / trials`.
pub fn proportion_se(successes: u64, trials: u64) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let p = successes as f64 / trials as f64;
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// Standard error of the difference of two independent proportions.
pub fn difference_se(a: (u64, u64), b: (u64, u64)) -> f64 {
    proportion_se(a.0, a.1).hypot(proportion_se(b.0, b.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_counts_give_zero() {
        let r = chi_square_uniform(&[50; 10]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.df, 9);
        assert!(r.pass);
    }

    #[test]
    fn concentrated_counts_fail() {
        let r = chi_square_uniform(&[100, 0, 0, 0]).unwrap();
        assert_eq!(r.statistic, 300.0);
        assert!(!r.pass);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert_eq!(chi_square_uniform(&[]), Err(StatsError::TooFewCategories(0)));
        assert_eq!(chi_square_uniform(&[5]), Err(StatsError::TooFewCategories(1)));
        assert_eq!(chi_square_uniform(&[0, 0]), Err(StatsError::EmptyCounts));
        assert_eq!(chi_square_uniform(&[1; 66]), Err(StatsError::TooManyCategories(66)));
    }

    #[test]
    fn table_lookups() {
        assert_eq!(critical_value_01(0), None);
        assert!((critical_value_01(9).unwrap() - 21.666).abs() < 1e-3);
        assert_eq!(critical_value_01(65), None);
    }

    #[test]
    fn proportion_errors() {
        assert_eq!(proportion_se(0, 0), 0.0);
        assert!((proportion_se(50, 100) - 0.05).abs() < 1e-15);
        assert!((difference_se((50, 100), (50, 100)) - 0.05 * 2f64.sqrt()).abs() < 1e-15);
    }
}
