//! Dirichlet–multinomial conjugate computations.
//!
//! A run-length hypothesis keeps a Dirichlet posterior over the class
//! probabilities of its segment. Each step delivers a [`CountVector`] of `S`
//! class draws. Its marginal probability under the Dirichlet (the predictive
//! term) decides how well the hypothesis explains the step.
//!
//! Two evaluations of the predictive are provided:
//!
//! * [`log_predictive_stable`] expands the Gamma ratios into a telescoping
//!   product over each class's draws,
//!
//!   ```text
//!   Ψ = Π_k Π_{j<c_k} (α_k + j) / (A + C_k + j) · (C_k + j + 1) / (j + 1)
//!   ```
//!
//!   where `A = Σ α` and `C_k = Σ_{l<k} c_l`. Every factor is of order one, so
//!   summing their logs never overflows however large `A` grows.
//! * [`log_predictive_binomial`] evaluates the Gamma-ratio form directly with
//!   log-gamma. It is the cross-check for the product form and loses
//!   precision once `A` is large.

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar};

/// Smallest accepted concentration. Anything below is rejected, never clamped.
pub const ALPHA_FLOOR: f64 = 1e-12;

/// Concentration vector `α` of a Dirichlet over `K ≥ 2` classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DirichletParams<T> {
    alpha: Vec<T>,
}

impl<T: Scalar> DirichletParams<T> {
    pub fn new(alpha: Vec<T>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::invalid(format!(
                "a Dirichlet needs at least 2 classes, got {}",
                alpha.len()
            )));
        }
        let floor = T::of(ALPHA_FLOOR);
        if let Some((k, a)) = alpha
            .iter()
            .enumerate()
            .find(|(_, a)| !a.is_finite() || **a < floor)
        {
            return Err(Error::invalid(format!(
                "concentration alpha_{} = {a} must be finite and >= {ALPHA_FLOOR:e}",
                k + 1
            )));
        }
        Ok(Self { alpha })
    }

    /// Every component equal to `value`.
    pub fn symmetric(classes: usize, value: T) -> Result<Self> {
        Self::new(vec![value; classes])
    }

    pub fn classes(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    /// `S_α = Σ_k α_k`, recomputed on every call.
    pub fn total(&self) -> T {
        self.alpha.iter().fold(T::zero(), |acc, &a| acc + a)
    }

    /// Conjugate update `α' = α + c`, returning a new value.
    pub fn updated(&self, counts: &CountVector) -> Result<Self> {
        let mut next = self.clone();
        next.absorb(counts)?;
        Ok(next)
    }

    /// In-place conjugate update.
    pub fn absorb(&mut self, counts: &CountVector) -> Result<()> {
        check_dims(self.classes(), counts)?;
        for (a, &c) in self.alpha.iter_mut().zip(counts.counts()) {
            *a = *a + T::of_count(c.into());
        }
        Ok(())
    }
}

/// Per-class tallies of `S ≥ 1` categorical draws.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct CountVector {
    counts: Vec<u32>,
    sample_size: u32,
}

impl CountVector {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::invalid(format!(
                "a count vector needs at least 2 classes, got {}",
                counts.len()
            )));
        }
        let sample_size = counts
            .iter()
            .try_fold(0u32, |acc, &c| acc.checked_add(c))
            .ok_or_else(|| Error::invalid("count vector total overflows u32"))?;
        if sample_size == 0 {
            return Err(Error::invalid("count vector must hold at least one draw"));
        }
        Ok(Self {
            counts,
            sample_size,
        })
    }

    /// A single draw of class `class` (0-based) out of `classes`.
    pub fn one_hot(classes: usize, class: usize) -> Result<Self> {
        if class >= classes {
            return Err(Error::invalid(format!(
                "class {} out of range 1..={classes}",
                class + 1
            )));
        }
        let mut counts = vec![0; classes];
        counts[class] = 1;
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    /// `S`, the number of draws.
    pub fn sample_size(&self) -> u32 {
        self.sample_size
    }
}

impl TryFrom<Vec<u32>> for CountVector {
    type Error = Error;

    fn try_from(counts: Vec<u32>) -> Result<Self> {
        Self::new(counts)
    }
}

impl From<CountVector> for Vec<u32> {
    fn from(c: CountVector) -> Self {
        c.counts
    }
}

fn check_dims(classes: usize, counts: &CountVector) -> Result<()> {
    if counts.classes() != classes {
        return Err(Error::DimensionMismatch {
            expected: classes,
            found: counts.classes(),
        });
    }
    Ok(())
}

/// `α + c` as a fresh parameter vector.
pub fn posterior_update<T: Scalar>(
    alpha: &DirichletParams<T>,
    counts: &CountVector,
) -> Result<DirichletParams<T>> {
    alpha.updated(counts)
}

/// Log of the multinomial coefficient `S! / Π_k c_k!`, accumulated as
/// `Σ_k Σ_{j<c_k} log((C_k + j + 1) / (j + 1))`.
///
/// This part of the predictive does not depend on `α`, so callers scoring one
/// count vector against many hypotheses can compute it once.
pub fn log_count_coefficient<T: Scalar>(counts: &CountVector) -> T {
    let mut acc = T::zero();
    let mut before = 0u64;
    for &c in counts.counts() {
        for j in 0..u64::from(c) {
            acc = acc + (T::of_count(before + j + 1) / T::of_count(j + 1)).ln();
        }
        before += u64::from(c);
    }
    acc
}

/// The `α`-dependent part of the stable predictive,
/// `Σ_k Σ_{j<c_k} log((α_k + j) / (S_α + C_k + j))`.
pub fn log_rising_ratio<T: Scalar>(alpha: &DirichletParams<T>, counts: &CountVector) -> Result<T> {
    check_dims(alpha.classes(), counts)?;
    let total = alpha.total();
    let mut acc = T::zero();
    let mut before = 0u64;
    for (k, (&a, &c)) in alpha.alpha().iter().zip(counts.counts()).enumerate() {
        for j in 0..u64::from(c) {
            let jj = T::of_count(j);
            let factor = ((a + jj) / (total + T::of_count(before) + jj)).ln();
            if !factor.is_finite() {
                return Err(Error::numerical(format!(
                    "predictive factor not finite at class {}, draw {j}",
                    k + 1
                )));
            }
            acc = acc + factor;
        }
        before += u64::from(c);
    }
    Ok(acc)
}

/// Log predictive `log Ψ` from the telescoping product form, summed in log space.
pub fn log_predictive_stable<T: Scalar>(
    alpha: &DirichletParams<T>,
    counts: &CountVector,
) -> Result<T> {
    let ratio = log_rising_ratio(alpha, counts)?;
    Ok(ratio + log_count_coefficient(counts))
}

/// Log predictive from the Gamma-ratio form
/// `Γ(S+1) Γ(S_α) Π Γ(c_k+α_k) / (Π Γ(c_k+1) Π Γ(α_k) Γ(S+S_α))`.
pub fn log_predictive_binomial<T: Scalar>(
    alpha: &DirichletParams<T>,
    counts: &CountVector,
) -> Result<T> {
    check_dims(alpha.classes(), counts)?;
    let s = T::of_count(counts.sample_size().into());
    let total = alpha.total();
    let mut acc = (s + T::one()).lgamma() + total.lgamma() - (s + total).lgamma();
    for (&a, &c) in alpha.alpha().iter().zip(counts.counts()) {
        let c = T::of_count(c.into());
        acc = acc + (c + a).lgamma() - (c + T::one()).lgamma() - a.lgamma();
    }
    if !acc.is_finite() {
        return Err(Error::numerical(format!(
            "log-gamma predictive overflowed (S = {}, S_alpha = {total})",
            counts.sample_size()
        )));
    }
    Ok(acc)
}

/// Predictive of a single observed class (0-based): `log(α_k / S_α)`.
pub fn log_predictive_categorical<T: Scalar>(alpha: &DirichletParams<T>, class: usize) -> Result<T> {
    let a = alpha.alpha().get(class).ok_or_else(|| {
        Error::invalid(format!(
            "class {} out of range 1..={}",
            class + 1,
            alpha.classes()
        ))
    })?;
    Ok((*a / alpha.total()).ln())
}

/// The product-form predictive evaluated in an arbitrary number field, without
/// logarithms. With an exact rational type this gives `Ψ` exactly.
///
/// Panics if the slices differ in length.
pub fn predictive_in_field<F>(alpha: &[F], counts: &[u32]) -> F
where
    F: Num + Clone + FromPrimitive,
{
    assert_eq!(alpha.len(), counts.len(), "alpha and counts must align");
    let of = |n: u64| F::from_u64(n).expect("count representable in field");
    let total = alpha.iter().cloned().fold(F::zero(), |acc, a| acc + a);
    let mut acc = F::one();
    let mut before = 0u64;
    for (a, &c) in alpha.iter().zip(counts) {
        for j in 0..u64::from(c) {
            acc = acc * (a.clone() + of(j)) / (total.clone() + of(before + j));
            acc = acc * of(before + j + 1) / of(j + 1);
        }
        before += u64::from(c);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha(v: &[f64]) -> DirichletParams<f64> {
        DirichletParams::new(v.to_vec()).unwrap()
    }

    fn counts(v: &[u32]) -> CountVector {
        CountVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn update_adds_componentwise() {
        let a = alpha(&[1.0, 2.0, 3.0]);
        let next = posterior_update(&a, &counts(&[0, 1, 4])).unwrap();
        assert_eq!(next.alpha(), &[1.0, 3.0, 7.0]);
        assert_eq!(a.alpha(), &[1.0, 2.0, 3.0]);

        let next = posterior_update(&alpha(&[0.5, 0.5]), &counts(&[1, 0])).unwrap();
        assert_eq!(next.alpha(), &[1.5, 0.5]);

        let next = posterior_update(&alpha(&[2.0; 3]), &counts(&[3, 3, 3])).unwrap();
        assert_eq!(next.alpha(), &[5.0; 3]);
    }

    #[test]
    fn update_rejects_dimension_mismatch() {
        let err = posterior_update(&alpha(&[1.0, 1.0]), &counts(&[1, 0, 0])).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                found: 3
            }
        ));
    }

    #[test]
    fn empty_count_vector_is_rejected() {
        assert!(CountVector::new(vec![0, 0]).is_err());
        assert!(CountVector::new(vec![3]).is_err());
    }

    #[test]
    fn alpha_validation() {
        assert!(DirichletParams::new(vec![1.0_f64]).is_err());
        assert!(DirichletParams::new(vec![1.0, 0.0]).is_err());
        assert!(DirichletParams::new(vec![1.0, 1e-13]).is_err());
        assert!(DirichletParams::new(vec![1.0, f64::NAN]).is_err());
        assert!(DirichletParams::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(DirichletParams::new(vec![1.0, 1e-12]).is_ok());
    }

    #[test]
    fn stable_single_draw_uniform_prior() {
        let got = log_predictive_stable(&alpha(&[1.0, 1.0]), &counts(&[1, 0])).unwrap();
        assert!((got - 0.5_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn stable_matches_exact_rational_value() {
        // 3/35 from the Gamma-ratio form over integers.
        let got = log_predictive_stable(&alpha(&[2.0, 1.0, 1.0]), &counts(&[2, 1, 1])).unwrap();
        assert!((got - (3.0_f64 / 35.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn binomial_small_cases() {
        let got = log_predictive_binomial(&alpha(&[1.0, 1.0]), &counts(&[0, 1])).unwrap();
        assert!((got - 0.5_f64.ln()).abs() < 1e-14);
        let got = log_predictive_binomial(&alpha(&[3.0, 1.0]), &counts(&[1, 0])).unwrap();
        assert!((got - 0.75_f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn binomial_reports_overflow() {
        let a = alpha(&[1e307, 1e307]);
        let err = log_predictive_binomial(&a, &counts(&[1, 1])).unwrap_err();
        assert!(err.is_numerical());
        // The product form is unaffected.
        let stable = log_predictive_stable(&a, &counts(&[1, 1])).unwrap();
        assert!((stable - 0.5_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn categorical_predictive() {
        let got = log_predictive_categorical(&alpha(&[1.0; 4]), 1).unwrap();
        assert!((got - 0.25_f64.ln()).abs() < 1e-15);
        let got = log_predictive_categorical(&alpha(&[2.0, 6.0]), 1).unwrap();
        assert!((got - 0.75_f64.ln()).abs() < 1e-15);
        assert!(log_predictive_categorical(&alpha(&[2.0, 6.0]), 2).is_err());
    }

    #[test]
    fn large_total_keeps_stable_form_finite() {
        let a = alpha(&[1e9, 3e9, 6e9]);
        let got = log_predictive_stable(&a, &counts(&[100, 300, 600])).unwrap();
        assert!(got.is_finite() && got <= 0.0);
    }

    #[test]
    fn single_precision_agrees_with_double() {
        let a64 = alpha(&[0.7, 2.5, 1.1]);
        let a32 = DirichletParams::new(vec![0.7_f32, 2.5, 1.1]).unwrap();
        let c = counts(&[4, 0, 6]);
        let lp64 = log_predictive_stable(&a64, &c).unwrap();
        let lp32 = log_predictive_stable(&a32, &c).unwrap();
        assert!((f64::from(lp32) - lp64).abs() < 1e-4);
    }

    #[test]
    fn field_evaluation_matches_log_form() {
        let a = [0.5_f64, 1.5, 2.0];
        let c = [2, 0, 3];
        let direct = predictive_in_field(&a, &c).ln();
        let logged = log_predictive_stable(&alpha(&a), &counts(&c)).unwrap();
        assert!((direct - logged).abs() < 1e-13);
    }
}
