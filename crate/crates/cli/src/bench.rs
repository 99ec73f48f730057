//! Benchmark grid: flatness levels × detector modes × replicates on the
//! synthetic protocol, summarised in a detection-rate / delay table.

use std::fmt::Write as _;

use mcpd::detector::{self, DetectorConfig, Mode};
use mcpd::metrics::{evaluate, CellSummary, EvalReport, MatchRule};
use mcpd::sampler::derive_seed;
use mcpd::synthetic::{generate, SyntheticConfig};
use mcpd::SeededRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Hypothesis cap applied automatically to long benchmark streams.
pub const AUTO_PRUNE_CAP: usize = 512;
/// Streams longer than this get [`AUTO_PRUNE_CAP`] unless a cap is given.
pub const AUTO_PRUNE_HORIZON: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub etas: Vec<f64>,
    pub modes: Vec<Mode>,
    pub replicates: usize,
    pub root_seed: u64,
    pub classes: usize,
    pub segment_length: usize,
    pub num_partitions: usize,
    pub drop: usize,
    /// Overrides the per-mode default `log10 λ`.
    pub log10_lambda: Option<f64>,
    pub prune_cap: Option<usize>,
    pub match_rule: MatchRule,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            etas: vec![2.0, 3.0, 4.0, 10.0],
            modes: vec![
                Mode::Multinomial { samples: 10 },
                Mode::Multinomial { samples: 50 },
                Mode::Multinomial { samples: 100 },
                Mode::Hierarchical,
            ],
            replicates: 5,
            root_seed: 0,
            classes: 20,
            segment_length: 100,
            num_partitions: 6,
            drop: mcpd::metrics::DEFAULT_DROP,
            log10_lambda: None,
            prune_cap: None,
            match_rule: MatchRule::default(),
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> mcpd::Result<()> {
        if self.replicates == 0 {
            return Err(mcpd::Error::InvalidParameter("replicates must be at least 1".into()));
        }
        if self.etas.is_empty() || self.modes.is_empty() {
            return Err(mcpd::Error::InvalidParameter(
                "benchmark grid needs at least one eta and one mode".into(),
            ));
        }
        Ok(())
    }

    fn effective_prune_cap(&self) -> Option<usize> {
        self.prune_cap.or_else(|| {
            (self.segment_length * self.num_partitions > AUTO_PRUNE_HORIZON).then_some(AUTO_PRUNE_CAP)
        })
    }

    /// Seed of the synthetic stream for `(eta, replicate)`; shared by all
    /// modes so that cells in one row are paired.
    pub fn data_seed(&self, eta: f64, replicate: usize) -> u64 {
        derive_seed(self.root_seed, &[eta.to_bits(), replicate as u64])
    }

    pub fn sampler_seed(&self, eta: f64, replicate: usize, mode: Mode) -> u64 {
        let tag = match mode {
            Mode::Multinomial { samples } => u64::from(samples),
            Mode::Hierarchical => u64::MAX,
        };
        derive_seed(self.root_seed, &[eta.to_bits(), replicate as u64, tag])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub eta: f64,
    pub mode: Mode,
    pub summary: CellSummary,
    pub replicates: Vec<EvalReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub config: BenchConfig,
    pub cells: Vec<BenchCell>,
}

impl BenchResult {
    pub fn cell(&self, eta: f64, mode: Mode) -> Option<&BenchCell> {
        self.cells.iter().find(|c| c.eta == eta && c.mode == mode)
    }
}

/// Runs every (eta, mode, replicate) combination in parallel. Output order is
/// fixed by the grid, not by scheduling.
pub fn run_grid(cfg: &BenchConfig) -> mcpd::Result<BenchResult> {
    cfg.validate()?;
    let jobs: Vec<(f64, Mode, usize)> = cfg
        .etas
        .iter()
        .flat_map(|&eta| {
            cfg.modes
                .iter()
                .flat_map(move |&mode| (0..cfg.replicates).map(move |r| (eta, mode, r)))
        })
        .collect();

    let reports = jobs
        .par_iter()
        .map(|&(eta, mode, rep)| run_replicate(cfg, eta, mode, rep))
        .collect::<mcpd::Result<Vec<_>>>()?;

    let cells = reports
        .chunks(cfg.replicates)
        .zip(jobs.chunks(cfg.replicates))
        .map(|(reps, job)| BenchCell {
            eta: job[0].0,
            mode: job[0].1,
            summary: CellSummary::from_reports(reps),
            replicates: reps.to_vec(),
        })
        .collect();
    Ok(BenchResult {
        config: cfg.clone(),
        cells,
    })
}

fn run_replicate(cfg: &BenchConfig, eta: f64, mode: Mode, rep: usize) -> mcpd::Result<EvalReport> {
    let synth = SyntheticConfig {
        classes: cfg.classes,
        segment_length: cfg.segment_length,
        num_partitions: cfg.num_partitions,
        eta,
        seed: cfg.data_seed(eta, rep),
    };
    let (sequence, truth) = generate(&synth)?;
    let det = DetectorConfig {
        log10_lambda: cfg.log10_lambda,
        drop: cfg.drop,
        prune_cap: cfg.effective_prune_cap(),
        ..DetectorConfig::new(mode)
    };
    let mut rng = SeededRng::new(cfg.sampler_seed(eta, rep, mode));
    let run = detector::run(&det, &sequence, &mut rng)?;
    Ok(evaluate(&run.events, &truth, truth.horizon, cfg.match_rule).0)
}

/// Detection-rate / delay table, one row per eta. Zero rates print as `-`,
/// missing delays as `inf`. Delays are divided by ten here and only here.
pub fn table_csv(result: &BenchResult) -> String {
    let modes = &result.config.modes;
    let mut out = String::from("eta");
    for m in modes {
        let _ = write!(out, ",rate_{}", m.label());
    }
    for m in modes {
        let _ = write!(out, ",delay_x10_{}", m.label());
    }
    out.push('\n');
    for &eta in &result.config.etas {
        let _ = write!(out, "{eta:.1}");
        let row: Vec<&CellSummary> = modes
            .iter()
            .map(|&m| &result.cell(eta, m).expect("grid is complete").summary)
            .collect();
        for s in &row {
            if s.detection_rate == 0.0 {
                out.push_str(",-");
            } else {
                let _ = write!(out, ",{:.2}", s.detection_rate);
            }
        }
        for s in &row {
            if s.delay_mean.is_finite() {
                let _ = write!(out, ",{:.2} ± {:.2}", s.delay_mean / 10.0, s.delay_std / 10.0);
            } else {
                out.push_str(",inf");
            }
        }
        out.push('\n');
    }
    out
}
