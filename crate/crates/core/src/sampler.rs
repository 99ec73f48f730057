//! Pseudo-observations from a per-step latent posterior.
//!
//! The hierarchical baseline keeps only the MAP class. The multinomial variant
//! draws `S` classes and keeps their counts.

use log::warn;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dirichlet::CountVector;
use crate::{Error, Result, Scalar};

/// Normalisation drift accepted as is.
pub const NORM_TOLERANCE: f64 = 1e-9;
/// Drift up to this is renormalised with a warning; beyond it is rejected.
pub const RENORM_LIMIT: f64 = 1e-6;

/// A probability vector `p(z_t | x_t)` over `K ≥ 2` classes.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct CategoricalPosterior<T> {
    probs: Vec<T>,
}

impl<T: Scalar> CategoricalPosterior<T> {
    pub fn new(mut probs: Vec<T>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::invalid(format!(
                "a posterior needs at least 2 classes, got {}",
                probs.len()
            )));
        }
        if let Some((k, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < T::zero())
        {
            return Err(Error::invalid(format!(
                "probability p_{} = {p} is negative or not finite",
                k + 1
            )));
        }
        let total = probs.iter().fold(T::zero(), |acc, &p| acc + p);
        let drift = (total - T::one()).abs();
        if drift > T::of(RENORM_LIMIT) {
            return Err(Error::invalid(format!(
                "posterior sums to {total}, off by more than {RENORM_LIMIT:e}"
            )));
        }
        if drift > T::of(NORM_TOLERANCE) {
            warn!("renormalising posterior that sums to {total}");
            probs.iter_mut().for_each(|p| *p = *p / total);
        }
        Ok(Self { probs })
    }

    /// Uniform over `classes`.
    pub fn uniform(classes: usize) -> Result<Self> {
        let p = T::one() / T::of_count(classes as u64);
        Self::new(vec![p; classes])
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }

    /// Most probable class (0-based); ties go to the lowest index.
    pub fn map_class(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> T {
        self.probs
            .iter()
            .filter(|p| **p > T::zero())
            .fold(T::zero(), |acc, &p| acc - p * p.ln())
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for CategoricalPosterior<T> {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let probs = Vec::<T>::deserialize(de)?;
        Self::new(probs).map_err(serde::de::Error::custom)
    }
}

/// Draws `S` classes from `posterior` and tallies them.
///
/// Each draw inverts the cumulative distribution by binary search.
pub fn sample_counts<T: Scalar, R: Rng + ?Sized>(
    posterior: &CategoricalPosterior<T>,
    samples: u32,
    rng: &mut R,
) -> Result<CountVector> {
    if samples == 0 {
        return Err(Error::invalid("sample size S must be at least 1"));
    }
    let cumulative: Vec<f64> = posterior
        .probs()
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p.to_f64().unwrap_or(0.0);
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().expect("posterior has classes");
    let last = cumulative.len() - 1;
    let mut counts = vec![0u32; posterior.classes()];
    for _ in 0..samples {
        let u = rng.random::<f64>() * total;
        let k = cumulative.partition_point(|&c| c <= u).min(last);
        counts[k] += 1;
    }
    CountVector::new(counts)
}

/// Deterministic generator seeded from a single `u64`.
///
/// Backed by ChaCha8, so streams are stable across platforms and releases of
/// this crate.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Generator for a sub-task identified by `tags`, e.g. a benchmark cell
    /// and replicate index. Independent of how many values the parent has
    /// produced.
    pub fn derive(&self, tags: &[u64]) -> Self {
        Self::new(derive_seed(self.seed, tags))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Mixes a root seed with a tag path (SplitMix64 finaliser per element).
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    tags.iter().fold(mix(root), |acc, &t| mix(acc ^ mix(t)))
}
