use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used by the numeric core.
///
/// Adds the log-gamma function, which `num_traits::Float` lacks.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    fn lgamma(self) -> Self;

    /// Lossy conversion from `f64`; constants and counts only.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 converts to every Scalar")
    }

    #[inline]
    fn of_count(n: u64) -> Self {
        <Self as FromPrimitive>::from_u64(n).expect("u64 converts to every Scalar")
    }
}

impl Scalar for f64 {
    #[inline]
    fn lgamma(self) -> Self {
        libm::lgamma(self)
    }
}

impl Scalar for f32 {
    #[inline]
    fn lgamma(self) -> Self {
        libm::lgammaf(self)
    }
}

/// `log(Σ exp(x_i))` with max-shifting. Empty or all `-inf` input gives `-inf`.
///
/// Summation runs in iteration order, so the result is deterministic.
pub fn log_sum_exp<T: Scalar>(values: impl IntoIterator<Item = T> + Clone) -> T {
    let max = values
        .clone()
        .into_iter()
        .fold(T::neg_infinity(), |m, v| if v > m { v } else { m });
    if max == T::neg_infinity() || !max.is_finite() {
        return max;
    }
    let sum = values
        .into_iter()
        .fold(T::zero(), |acc, v| acc + (v - max).exp());
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_naive_on_moderate_values() {
        let xs = [-1.0_f64, -2.0, -3.0];
        let naive: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(xs) - naive).abs() < 1e-15);
    }

    #[test]
    fn lse_survives_large_magnitudes() {
        let xs = [-1.0e5_f64, -1.0e5 - 2.0_f64.ln()];
        let got = log_sum_exp(xs);
        assert!((got - (-1.0e5 + 1.5_f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn lse_empty_and_all_neg_inf() {
        assert_eq!(log_sum_exp(Vec::<f64>::new()), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp([f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
    }

    #[test]
    fn lgamma_known_values() {
        assert!((5.0_f64.lgamma() - 24.0_f64.ln()).abs() < 1e-14);
        assert!((0.5_f64.lgamma() - std::f64::consts::PI.sqrt().ln()).abs() < 1e-14);
        assert!((5.0_f32.lgamma() - 24.0_f32.ln()).abs() < 1e-5);
    }
}
