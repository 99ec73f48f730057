//! End-to-end detection over a posterior sequence: pseudo-observations,
//! run-length recursion, MAP path and detection events.

use serde::{Deserialize, Serialize};

use crate::dirichlet::{CountVector, DirichletParams};
use crate::engine::{Hazard, RunLengthState};
use crate::metrics::{detect, DetectionEvent, DEFAULT_DROP};
use crate::sampler::{sample_counts, CategoricalPosterior, SeededRng};
use crate::{Error, Result};

/// `λ` exponent for the hierarchical baseline.
pub const HIERARCHICAL_LOG10_LAMBDA: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    /// `S` draws per step, scored with the Dirichlet–multinomial predictive.
    Multinomial { samples: u32 },
    /// The MAP class per step, scored with the categorical predictive.
    Hierarchical,
}

impl Mode {
    /// Default `log10 λ`: `S` for multinomial runs, 20 for the baseline.
    pub fn default_log10_lambda(&self) -> f64 {
        match self {
            Self::Multinomial { samples } => f64::from(*samples),
            Self::Hierarchical => HIERARCHICAL_LOG10_LAMBDA,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Multinomial { samples } => format!("S{samples}"),
            Self::Hierarchical => "HCPD".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub mode: Mode,
    /// Overrides the mode's default `log10 λ`.
    pub log10_lambda: Option<f64>,
    /// Symmetric prior concentration for every class.
    pub alpha0: f64,
    pub drop: usize,
    /// Keep at most this many hypotheses after every step.
    pub prune_cap: Option<usize>,
}

impl DetectorConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            log10_lambda: None,
            alpha0: 1.0,
            drop: DEFAULT_DROP,
            prune_cap: None,
        }
    }

    pub fn effective_log10_lambda(&self) -> f64 {
        self.log10_lambda
            .unwrap_or_else(|| self.mode.default_log10_lambda())
    }

    pub fn validate(&self) -> Result<()> {
        if let Mode::Multinomial { samples: 0 } = self.mode {
            return Err(Error::invalid("sample size S must be at least 1"));
        }
        if self.prune_cap == Some(0) {
            return Err(Error::invalid("prune cap must keep at least one hypothesis"));
        }
        Hazard::<f64>::from_log10_lambda(self.effective_log10_lambda())?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRun {
    /// MAP run length after each step; index `i` is step `i`.
    pub runlength_path: Vec<usize>,
    pub events: Vec<DetectionEvent>,
    pub log_evidence: f64,
    pub approximate: bool,
}

/// Runs the detector over `sequence`. Sampling draws from `rng`, so repeated
/// runs with equal seeds give equal results.
pub fn run(
    cfg: &DetectorConfig,
    sequence: &[CategoricalPosterior<f64>],
    rng: &mut SeededRng,
) -> Result<DetectionRun> {
    cfg.validate()?;
    let classes = sequence
        .first()
        .ok_or_else(|| Error::invalid("empty posterior sequence"))?
        .classes();
    let alpha0 = DirichletParams::symmetric(classes, cfg.alpha0)?;
    let hazard = Hazard::from_log10_lambda(cfg.effective_log10_lambda())?;
    let mut state = RunLengthState::init(classes, alpha0, hazard)?;
    let mut path = Vec::with_capacity(sequence.len());

    for p in sequence {
        if p.classes() != classes {
            return Err(Error::DimensionMismatch {
                expected: classes,
                found: p.classes(),
            });
        }
        match cfg.mode {
            Mode::Multinomial { samples } => {
                let counts: CountVector = sample_counts(p, samples, rng)?;
                state.step(&counts)?;
            }
            Mode::Hierarchical => {
                state.step_class(p.map_class())?;
            }
        }
        if let Some(cap) = cfg.prune_cap {
            state.prune(f64::NEG_INFINITY, cap)?;
        }
        path.push(state.map_runlength());
    }

    Ok(DetectionRun {
        events: detect(&path, cfg.drop),
        runlength_path: path,
        log_evidence: state.log_evidence(),
        approximate: state.is_approximate(),
    })
}
