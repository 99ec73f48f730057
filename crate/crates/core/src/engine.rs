//! Online run-length recursion.
//!
//! After `t` steps the state holds one hypothesis per run length
//! `r ∈ {0, ..., t}`. Run length `r` means the current segment began `r`
//! steps ago, so `r = 0` says the step just observed opened a new segment and
//! `r = t` says no change has happened yet. Each hypothesis carries the
//! Dirichlet posterior of its segment and its log posterior weight. The joint
//! `log p(r_t, c_{1:t})` is that weight plus the accumulated log evidence.
//!
//! One step with count vector `c`:
//!
//! ```text
//! growth  r+1 : log w_r + log(1-h) + log Ψ(α_r, c)
//! change  0   : logsumexp_r(log w_r) + log h + log Ψ(α_0, c)
//! ```
//!
//! followed by normalisation and `α ← α + c` for every hypothesis. A new
//! segment starts from the prior `α_0`, so the change branch scores `c` under
//! the prior and the fresh hypothesis holds `α_0 + c`.

use std::collections::BTreeMap;
use std::f64::consts::LN_10;

use serde::{Deserialize, Serialize};

use crate::dirichlet::{
    log_count_coefficient, log_predictive_categorical, log_rising_ratio, CountVector,
    DirichletParams,
};
use crate::{log_sum_exp, Error, Result, Scalar};

/// Constant hazard `h = 1/λ`, held in log space so that `λ = 10^300` and
/// beyond stay representable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "HazardRepr",
    into = "HazardRepr",
    bound(serialize = "T: Copy", deserialize = "T: Scalar")
)]
pub struct Hazard<T> {
    log10_lambda: f64,
    log_change: T,
    log_growth: T,
}

#[derive(Serialize, Deserialize)]
struct HazardRepr {
    log10_lambda: f64,
}

impl<T: Scalar> Hazard<T> {
    /// `λ = 10^exponent`; requires `exponent > 0`.
    pub fn from_log10_lambda(exponent: f64) -> Result<Self> {
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::invalid(format!(
                "hazard needs lambda > 1, got 10^{exponent}"
            )));
        }
        let log_change = -exponent * LN_10;
        // log(1 - h) without cancellation for tiny h.
        let log_growth = (-log_change.exp()).ln_1p();
        Ok(Self {
            log10_lambda: exponent,
            log_change: T::of(log_change),
            log_growth: T::of(log_growth),
        })
    }

    pub fn from_lambda(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 1.0) {
            return Err(Error::invalid(format!("hazard needs lambda > 1, got {lambda}")));
        }
        Self::from_log10_lambda(lambda.log10())
    }

    pub fn log10_lambda(&self) -> f64 {
        self.log10_lambda
    }

    /// `log h`.
    pub fn log_change(&self) -> T {
        self.log_change
    }

    /// `log(1 - h)`.
    pub fn log_growth(&self) -> T {
        self.log_growth
    }
}

impl<T: Scalar> TryFrom<HazardRepr> for Hazard<T> {
    type Error = Error;

    fn try_from(r: HazardRepr) -> Result<Self> {
        Self::from_log10_lambda(r.log10_lambda)
    }
}

impl<T> From<Hazard<T>> for HazardRepr {
    fn from(h: Hazard<T>) -> Self {
        Self {
            log10_lambda: h.log10_lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis<T> {
    pub run_length: usize,
    /// Normalised `log p(r_t | c_{1:t})`.
    pub log_posterior: T,
    pub alpha: DirichletParams<T>,
}

/// Normalised run-length posterior at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunLengthPosterior<T> {
    pub t: usize,
    pub probs: BTreeMap<usize, T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct RunLengthState<T> {
    t: usize,
    hazard: Hazard<T>,
    alpha0: DirichletParams<T>,
    hypotheses: Vec<Hypothesis<T>>,
    log_evidence: T,
    last_log_increment: T,
    /// Set once pruning has discarded mass; the evidence is then a lower bound.
    approximate: bool,
}

impl<T: Scalar> RunLengthState<T> {
    pub fn new(alpha0: DirichletParams<T>, hazard: Hazard<T>) -> Self {
        Self {
            t: 0,
            hazard,
            hypotheses: vec![Hypothesis {
                run_length: 0,
                log_posterior: T::zero(),
                alpha: alpha0.clone(),
            }],
            alpha0,
            log_evidence: T::zero(),
            last_log_increment: T::zero(),
            approximate: false,
        }
    }

    /// Checks `alpha0` against the declared class count before building.
    pub fn init(classes: usize, alpha0: DirichletParams<T>, hazard: Hazard<T>) -> Result<Self> {
        if alpha0.classes() != classes {
            return Err(Error::DimensionMismatch {
                expected: classes,
                found: alpha0.classes(),
            });
        }
        Ok(Self::new(alpha0, hazard))
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn classes(&self) -> usize {
        self.alpha0.classes()
    }

    pub fn hazard(&self) -> &Hazard<T> {
        &self.hazard
    }

    pub fn alpha0(&self) -> &DirichletParams<T> {
        &self.alpha0
    }

    /// Hypotheses in increasing run-length order.
    pub fn hypotheses(&self) -> &[Hypothesis<T>] {
        &self.hypotheses
    }

    /// `log p(c_{1:t})`, or a lower bound once pruned.
    pub fn log_evidence(&self) -> T {
        self.log_evidence
    }

    /// `log p(c_t | c_{1:t-1})` from the latest step.
    pub fn last_log_increment(&self) -> T {
        self.last_log_increment
    }

    pub fn is_approximate(&self) -> bool {
        self.approximate
    }

    /// `log p(r_t = r, c_{1:t})` for every live hypothesis.
    pub fn log_joint(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.hypotheses
            .iter()
            .map(move |h| (h.run_length, h.log_posterior + self.log_evidence))
    }

    /// Absorbs one count vector and returns the updated posterior.
    pub fn step(&mut self, counts: &CountVector) -> Result<RunLengthPosterior<T>> {
        if counts.classes() != self.classes() {
            return Err(Error::DimensionMismatch {
                expected: self.classes(),
                found: counts.classes(),
            });
        }
        let coefficient: T = log_count_coefficient(counts);
        let scores = self
            .hypotheses
            .iter()
            .map(|h| log_rising_ratio(&h.alpha, counts).map(|r| r + coefficient))
            .collect::<Result<Vec<_>>>()?;
        let prior_score = log_rising_ratio(&self.alpha0, counts)? + coefficient;
        self.advance(counts, &scores, prior_score)?;
        Ok(self.posterior())
    }

    /// Hierarchical baseline step: a single observed class (0-based), scored
    /// with the categorical predictive `α_k / S_α`.
    pub fn step_class(&mut self, class: usize) -> Result<RunLengthPosterior<T>> {
        let counts = CountVector::one_hot(self.classes(), class)?;
        let scores = self
            .hypotheses
            .iter()
            .map(|h| log_predictive_categorical(&h.alpha, class))
            .collect::<Result<Vec<_>>>()?;
        let prior_score = log_predictive_categorical(&self.alpha0, class)?;
        self.advance(&counts, &scores, prior_score)?;
        Ok(self.posterior())
    }

    fn advance(&mut self, counts: &CountVector, scores: &[T], prior_score: T) -> Result<()> {
        let log_h = self.hazard.log_change();
        let log_g = self.hazard.log_growth();

        let prior_mass = log_sum_exp(self.hypotheses.iter().map(|h| h.log_posterior));
        let change = prior_mass + log_h + prior_score;
        let growth: Vec<T> = self
            .hypotheses
            .iter()
            .zip(scores)
            .map(|(h, &s)| h.log_posterior + log_g + s)
            .collect();

        let norm = log_sum_exp(std::iter::once(change).chain(growth.iter().copied()));
        if !norm.is_finite() {
            return Err(Error::numerical(format!(
                "every run-length branch underflowed at t = {}",
                self.t + 1
            )));
        }

        for (h, g) in self.hypotheses.iter_mut().zip(growth) {
            h.run_length += 1;
            h.log_posterior = g - norm;
            h.alpha.absorb(counts)?;
        }
        self.hypotheses.insert(
            0,
            Hypothesis {
                run_length: 0,
                log_posterior: change - norm,
                alpha: self.alpha0.updated(counts)?,
            },
        );
        self.t += 1;
        self.log_evidence = self.log_evidence + norm;
        self.last_log_increment = norm;
        Ok(())
    }

    pub fn posterior(&self) -> RunLengthPosterior<T> {
        RunLengthPosterior {
            t: self.t,
            probs: self
                .hypotheses
                .iter()
                .map(|h| (h.run_length, h.log_posterior.exp()))
                .collect(),
        }
    }

    /// MAP run length; ties go to the longer run.
    pub fn map_runlength(&self) -> usize {
        let mut best = &self.hypotheses[0];
        for h in &self.hypotheses[1..] {
            if h.log_posterior > best.log_posterior
                || (h.log_posterior == best.log_posterior && h.run_length > best.run_length)
            {
                best = h;
            }
        }
        best.run_length
    }

    /// Drops hypotheses whose posterior is below `exp(log_threshold)`, then keeps
    /// at most `cap` of the heaviest. Survivors are renormalised and the
    /// discarded mass is charged against the evidence.
    pub fn prune(&mut self, log_threshold: T, cap: usize) -> Result<()> {
        if log_threshold.is_nan() || log_threshold > T::zero() {
            return Err(Error::invalid(format!(
                "prune threshold must be a log-probability <= 0, got {log_threshold}"
            )));
        }
        if cap == 0 {
            return Err(Error::invalid("prune cap must keep at least one hypothesis"));
        }
        let before = self.hypotheses.len();
        let mut kept: Vec<Hypothesis<T>> = self
            .hypotheses
            .iter()
            .filter(|h| h.log_posterior >= log_threshold)
            .cloned()
            .collect();
        if kept.is_empty() {
            return Err(Error::invalid(format!(
                "prune threshold {log_threshold} would remove every hypothesis"
            )));
        }
        if kept.len() > cap {
            kept.sort_by(|a, b| {
                b.log_posterior
                    .partial_cmp(&a.log_posterior)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.run_length.cmp(&a.run_length))
            });
            kept.truncate(cap);
            kept.sort_by_key(|h| h.run_length);
        }
        if kept.len() == before {
            return Ok(());
        }
        let retained = log_sum_exp(kept.iter().map(|h| h.log_posterior));
        for h in &mut kept {
            h.log_posterior = h.log_posterior - retained;
        }
        self.hypotheses = kept;
        self.log_evidence = self.log_evidence + retained;
        self.approximate = true;
        Ok(())
    }
}

impl<T> RunLengthState<T>
where
    T: Scalar + Serialize + for<'de> Deserialize<'de>,
{
    /// Checkpoint as JSON. Floats are written in shortest round-trip form, so
    /// [`Self::from_json`] restores the state bit for bit.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let state: Self = serde_json::from_str(text)?;
        state.validate()?;
        Ok(state)
    }

    fn validate(&self) -> Result<()> {
        if self.hypotheses.is_empty() {
            return Err(Error::invalid("snapshot has no hypotheses"));
        }
        DirichletParams::new(self.alpha0.alpha().to_vec())?;
        let mut prev = None;
        for h in &self.hypotheses {
            DirichletParams::new(h.alpha.alpha().to_vec())?;
            if h.alpha.classes() != self.classes() {
                return Err(Error::DimensionMismatch {
                    expected: self.classes(),
                    found: h.alpha.classes(),
                });
            }
            if h.run_length > self.t || prev.is_some_and(|p| p >= h.run_length) {
                return Err(Error::invalid(format!(
                    "snapshot run lengths must be increasing and <= t = {}",
                    self.t
                )));
            }
            prev = Some(h.run_length);
        }
        let mass = log_sum_exp(self.hypotheses.iter().map(|h| h.log_posterior));
        if !mass.is_finite() {
            return Err(Error::numerical("snapshot posterior mass is not finite"));
        }
        Ok(())
    }
}
