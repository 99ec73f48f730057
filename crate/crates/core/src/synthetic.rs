//! Piecewise-stationary benchmark streams of simulated latent posteriors.
//!
//! Partition `ρ` draws a concentration vector `β_ρ` with i.i.d.
//! `Uniform(0, η)` components. Every step in the partition emits a fresh
//! `θ ~ Dirichlet(β_ρ)` as its posterior. Small `η` gives small
//! concentrations, hence flat, noisy posteriors.

use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::sampler::{CategoricalPosterior, SeededRng};
use crate::{Error, Result};

/// Concentrations below this are redrawn.
const BETA_FLOOR: f64 = 1e-12;
/// Bail out if a Dirichlet draw keeps collapsing to all zeros.
const MAX_REDRAWS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub segment_length: usize,
    pub num_partitions: usize,
    pub eta: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 20,
            segment_length: 100,
            num_partitions: 6,
            eta: 3.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn horizon(&self) -> usize {
        self.segment_length * self.num_partitions
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid(format!("need K >= 2 classes, got {}", self.classes)));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::invalid(format!("flatness eta must be > 0, got {}", self.eta)));
        }
        if self.segment_length == 0 || self.num_partitions == 0 {
            return Err(Error::invalid("segment length and partition count must be positive"));
        }
        Ok(())
    }
}

/// Known segmentation of a generated stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// 0-based index of the first step of every partition after the first.
    pub cp_times: Vec<usize>,
    pub segment_length: usize,
    pub horizon: usize,
    /// Per-partition concentration vectors `β_ρ`; empty when unknown.
    #[serde(default)]
    pub beta: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<SyntheticConfig>,
}

impl GroundTruth {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<(Vec<CategoricalPosterior<f64>>, GroundTruth)> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let mut sequence = Vec::with_capacity(cfg.horizon());
    let mut betas = Vec::with_capacity(cfg.num_partitions);

    for _ in 0..cfg.num_partitions {
        let beta: Vec<f64> = (0..cfg.classes)
            .map(|_| draw_concentration(cfg.eta, &mut rng))
            .collect();
        let gammas = beta
            .iter()
            .map(|&b| Gamma::new(b, 1.0).map_err(|e| Error::invalid(format!("gamma({b}): {e}"))))
            .collect::<Result<Vec<_>>>()?;
        for _ in 0..cfg.segment_length {
            sequence.push(dirichlet_draw(&gammas, &mut rng)?);
        }
        betas.push(beta);
    }

    let truth = GroundTruth {
        cp_times: (1..cfg.num_partitions).map(|p| p * cfg.segment_length).collect(),
        segment_length: cfg.segment_length,
        horizon: cfg.horizon(),
        beta: betas,
        config: Some(cfg.clone()),
    };
    Ok((sequence, truth))
}

fn draw_concentration(eta: f64, rng: &mut SeededRng) -> f64 {
    loop {
        let b = rng.random::<f64>() * eta;
        if b >= BETA_FLOOR {
            return b;
        }
    }
}

/// Normalised independent Gamma draws. A draw that underflows to zero in every
/// component is repeated.
fn dirichlet_draw(gammas: &[Gamma<f64>], rng: &mut SeededRng) -> Result<CategoricalPosterior<f64>> {
    for attempt in 0..MAX_REDRAWS {
        let draws: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            if attempt > 0 {
                warn!("dirichlet draw redrawn {attempt} time(s) after underflow");
            }
            return CategoricalPosterior::new(draws.iter().map(|d| d / total).collect());
        }
    }
    Err(Error::numerical(format!(
        "dirichlet draw underflowed {MAX_REDRAWS} times in a row"
    )))
}

/// Mean entropy (nats) of the posteriors in each consecutive block of
/// `segment_length` steps. A trailing partial block gets its own entry.
pub fn flatness_stats(
    sequence: &[CategoricalPosterior<f64>],
    segment_length: usize,
) -> Result<Vec<f64>> {
    if sequence.is_empty() {
        return Err(Error::invalid("flatness of an empty sequence"));
    }
    if segment_length == 0 {
        return Err(Error::invalid("segment length must be positive"));
    }
    Ok(sequence
        .chunks(segment_length)
        .map(|block| block.iter().map(|p| p.entropy()).sum::<f64>() / block.len() as f64)
        .collect())
}

/// CSV with header `t,p_1,...,p_K` and one row per step.
pub fn write_posteriors_csv<W: Write>(writer: W, sequence: &[CategoricalPosterior<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let classes = sequence.first().map_or(0, |p| p.classes());
    let mut header = vec!["t".to_string()];
    header.extend((1..=classes).map(|k| format!("p_{k}")));
    out.write_record(&header)?;
    for (t, p) in sequence.iter().enumerate() {
        if p.classes() != classes {
            return Err(Error::DimensionMismatch {
                expected: classes,
                found: p.classes(),
            });
        }
        let mut row = vec![t.to_string()];
        row.extend(p.probs().iter().map(|x| x.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the format written by [`write_posteriors_csv`]. `origin` only labels
/// error messages.
pub fn read_posteriors_csv<R: Read>(reader: R, origin: &Path) -> Result<Vec<CategoricalPosterior<f64>>> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("t") || header.len() < 3 {
        return Err(parse_err(1, "expected header t,p_1,...,p_K with K >= 2".into()));
    }
    let mut sequence = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let probs = record
            .iter()
            .skip(1)
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(line, format!("bad probability: {e}")))?;
        let p = CategoricalPosterior::new(probs).map_err(|e| parse_err(line, e.to_string()))?;
        sequence.push(p);
    }
    Ok(sequence)
}
