use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use mcpd::detector::{self, DetectionRun, DetectorConfig, Mode};
use mcpd::metrics::{evaluate, EvalReport, MatchRule};
use mcpd::provider::{self, EmConfig, PlantedStreamConfig};
use mcpd::sampler::derive_seed;
use mcpd::synthetic::{self, SyntheticConfig};
use mcpd::{CategoricalPosterior, DetectionEvent, GroundTruth, SeededRng};
use serde::Serialize;

use crate::bench::{self, BenchConfig};
use crate::svg;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "mcpd", version, about = "Changepoint detection over streams of class posteriors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic posterior stream and its ground truth.
    Simulate(SimulateArgs),
    /// Run the detector over a posterior CSV.
    Detect(DetectArgs),
    /// Run the flatness × detector grid and write the summary table.
    Bench(BenchArgs),
    /// Fit a mixture to raw observations and detect changes in its posteriors.
    Pipeline(PipelineArgs),
    /// Draw a heterogeneous observation stream with planted regimes.
    Plant(PlantArgs),
}

impl Command {
    pub fn run(&self) -> Result<(), CliError> {
        match self {
            Self::Simulate(a) => simulate(a),
            Self::Detect(a) => detect(a).map(drop),
            Self::Bench(a) => bench(a).map(drop),
            Self::Pipeline(a) => pipeline(a).map(drop),
            Self::Plant(a) => plant(a),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Mcpd,
    Hcpd,
}

#[derive(Clone, Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 3.0)]
    pub eta: f64,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub segment_length: usize,
    #[arg(long, default_value_t = 6)]
    pub partitions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct DetectorArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Mcpd)]
    pub mode: ModeArg,
    /// Sample size S drawn from each posterior.
    #[arg(long, default_value_t = 100)]
    pub samples: u32,
    /// Hazard parameter λ, e.g. `1e100` or `10^400`. Defaults to 10^S, or 10^20 for HCPD.
    #[arg(long, value_parser = parse_lambda)]
    pub lambda: Option<f64>,
    /// Minimum run-length drop that counts as a detection; `inf` disables detection.
    #[arg(long, default_value = "20", value_parser = parse_drop)]
    pub drop: usize,
    #[arg(long)]
    pub prune_cap: Option<usize>,
}

impl DetectorArgs {
    fn mode(&self) -> Mode {
        match self.mode {
            ModeArg::Mcpd => Mode::Multinomial {
                samples: self.samples,
            },
            ModeArg::Hcpd => Mode::Hierarchical,
        }
    }

    fn config(&self, mode: Mode) -> DetectorConfig {
        DetectorConfig {
            log10_lambda: self.lambda,
            drop: self.drop,
            prune_cap: self.prune_cap,
            ..DetectorConfig::new(mode)
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct DetectArgs {
    /// Posterior CSV with columns `t,p_1..p_K`.
    #[arg(long)]
    pub input: PathBuf,
    /// Ground-truth JSON; enables the evaluation report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Also write an SVG of the run-length path.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Clone, Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [2.0, 3.0, 4.0, 10.0])]
    pub eta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 50, 100])]
    pub samples: Vec<u32>,
    /// Leave the categorical baseline out of the grid.
    #[arg(long)]
    pub no_hcpd: bool,
    #[arg(long, default_value_t = 5)]
    pub replicates: usize,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub segment_length: usize,
    #[arg(long, default_value_t = 6)]
    pub partitions: usize,
    #[arg(long, value_parser = parse_lambda)]
    pub lambda: Option<f64>,
    #[arg(long, default_value = "20", value_parser = parse_drop)]
    pub drop: usize,
    #[arg(long)]
    pub prune_cap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

impl BenchArgs {
    pub fn config(&self) -> BenchConfig {
        let mut modes: Vec<Mode> = self
            .samples
            .iter()
            .map(|&samples| Mode::Multinomial { samples })
            .collect();
        if !self.no_hcpd {
            modes.push(Mode::Hierarchical);
        }
        BenchConfig {
            etas: self.eta.clone(),
            modes,
            replicates: self.replicates,
            root_seed: self.seed,
            classes: self.classes,
            segment_length: self.segment_length,
            num_partitions: self.partitions,
            drop: self.drop,
            log10_lambda: self.lambda,
            prune_cap: self.prune_cap,
            match_rule: MatchRule::default(),
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct PipelineArgs {
    /// Observation CSV with `index:`, `real:` and `binary:` columns.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Mixture components, which become the classes seen by the detector.
    #[arg(long, default_value_t = 20)]
    pub components: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 100])]
    pub samples: Vec<u32>,
    #[arg(long, value_parser = parse_lambda)]
    pub lambda: Option<f64>,
    #[arg(long, default_value = "20", value_parser = parse_drop)]
    pub drop: usize,
    #[arg(long)]
    pub prune_cap: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: bool,
}

#[derive(Clone, Debug, Args)]
pub struct PlantArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [75, 75, 75, 75])]
    pub regimes: Vec<usize>,
    /// Latent profiles per regime.
    #[arg(long, default_value_t = 1)]
    pub profiles: usize,
    #[arg(long, default_value_t = 6)]
    pub real_dim: usize,
    #[arg(long, default_value_t = 12)]
    pub binary_dim: usize,
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Parses λ and returns `log10 λ`, so values far beyond `f64` range such as
/// `10^400` or `1e400` stay usable.
pub fn parse_lambda(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let log10 = if let Some(exp) = s.strip_prefix("10^") {
        exp.parse::<f64>().map_err(|e| format!("bad exponent in {s:?}: {e}"))?
    } else if let Some((mant, exp)) = s.split_once(['e', 'E']) {
        let m: f64 = mant.parse().map_err(|e| format!("bad mantissa in {s:?}: {e}"))?;
        let e: f64 = exp.parse().map_err(|e| format!("bad exponent in {s:?}: {e}"))?;
        if m <= 0.0 {
            return Err(format!("lambda must be > 1, got {s}"));
        }
        m.log10() + e
    } else {
        let v: f64 = s.parse().map_err(|e| format!("bad lambda {s:?}: {e}"))?;
        if v <= 0.0 {
            return Err(format!("lambda must be > 1, got {s}"));
        }
        v.log10()
    };
    if !(log10.is_finite() && log10 > 0.0) {
        return Err(format!("lambda must be a finite value > 1, got {s}"));
    }
    Ok(log10)
}

pub fn parse_drop(s: &str) -> Result<usize, String> {
    match s.trim() {
        "inf" | "∞" => Ok(usize::MAX),
        v => v.parse().map_err(|e| format!("bad drop {v:?}: {e}")),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(mcpd::Error::from)?;
    write_text(path, &(text + "\n"))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn read_truth(path: &Path) -> Result<GroundTruth, CliError> {
    GroundTruth::from_json(&read_text(path)?)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn read_posteriors(path: &Path) -> Result<Vec<CategoricalPosterior>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(synthetic::read_posteriors_csv(file, path)?)
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = SyntheticConfig {
        classes: args.classes,
        segment_length: args.segment_length,
        num_partitions: args.partitions,
        eta: args.eta,
        seed: args.seed,
    };
    let (sequence, truth) = synthetic::generate(&cfg)?;
    ensure_dir(&args.out)?;
    let mut w = create(&args.out.join("posteriors.csv"))?;
    synthetic::write_posteriors_csv(&mut w, &sequence)?;
    w.flush()?;
    write_text(&args.out.join("truth.json"), &(truth.to_json()? + "\n"))?;
    info!(
        "wrote {} posteriors with {} changes to {}",
        sequence.len(),
        truth.cp_times.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Clone, Debug)]
pub struct DetectOutcome {
    pub run: DetectionRun,
    pub report: Option<EvalReport>,
}

pub fn detect(args: &DetectArgs) -> Result<DetectOutcome, CliError> {
    let sequence = read_posteriors(&args.input)?;
    let truth = args.truth.as_deref().map(read_truth).transpose()?;
    let cfg = args.detector.config(args.detector.mode());
    let mut rng = SeededRng::new(args.seed);
    let mut run = detector::run(&cfg, &sequence, &mut rng)?;

    ensure_dir(&args.out)?;
    write_paths_csv(
        &args.out.join("runlength.csv"),
        &[(cfg.mode.label(), run.runlength_path.clone())],
    )?;
    let report = truth.as_ref().map(|truth| {
        let (report, events) = evaluate(&run.events, truth, sequence.len(), MatchRule::default());
        run.events = events;
        report
    });
    write_json(&args.out.join("events.json"), &run.events)?;
    if let Some(report) = &report {
        write_json(&args.out.join("report.json"), report)?;
    }
    if args.svg {
        let markers = truth.as_ref().map(|t| t.cp_times.clone()).unwrap_or_default();
        let chart = svg::runlength_chart(
            "MAP run length",
            &[(cfg.mode.label(), run.runlength_path.clone())],
            &markers,
        );
        write_text(&args.out.join("runlength.svg"), &chart)?;
    }
    info!("{} detections over {} steps", run.events.len(), sequence.len());
    Ok(DetectOutcome { run, report })
}

pub fn bench(args: &BenchArgs) -> Result<bench::BenchResult, CliError> {
    let cfg = args.config();
    let result = bench::run_grid(&cfg)?;
    ensure_dir(&args.out)?;
    write_text(&args.out.join("table1.csv"), &bench::table_csv(&result))?;
    write_json(&args.out.join("bench.json"), &result)?;
    info!("wrote {} benchmark cells to {}", result.cells.len(), args.out.display());
    Ok(result)
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub labels: Vec<String>,
    pub runs: Vec<DetectionRun>,
    pub reports: Vec<EvalReport>,
}

pub fn pipeline(args: &PipelineArgs) -> Result<PipelineOutcome, CliError> {
    if args.samples.is_empty() {
        return Err(CliError::Config("pipeline needs at least one sample size".into()));
    }
    let records = provider::ingest_csv(&args.input)?;
    let truth = args.truth.as_deref().map(read_truth).transpose()?;
    let em = EmConfig {
        components: args.components,
        max_iters: args.max_iters,
        seed: derive_seed(args.seed, &[0]),
        ..EmConfig::default()
    };
    let fit = provider::fit_em(&records, &em)?;
    info!(
        "EM converged after {} steps, log-likelihood {:.3}",
        fit.log_likelihood.len() - 1,
        fit.log_likelihood.last().copied().unwrap_or(f64::NAN)
    );
    let posteriors = records
        .iter()
        .map(|x| provider::posterior(&fit.model, x))
        .collect::<mcpd::Result<Vec<_>>>()?;

    let mut labels = Vec::new();
    let mut runs = Vec::new();
    let mut reports = Vec::new();
    for &samples in &args.samples {
        let mode = Mode::Multinomial { samples };
        let cfg = DetectorConfig {
            log10_lambda: args.lambda,
            drop: args.drop,
            prune_cap: args.prune_cap,
            ..DetectorConfig::new(mode)
        };
        let mut rng = SeededRng::new(derive_seed(args.seed, &[1, u64::from(samples)]));
        let mut run = detector::run(&cfg, &posteriors, &mut rng)?;
        if let Some(truth) = &truth {
            let (report, events) = evaluate(&run.events, truth, posteriors.len(), MatchRule::default());
            run.events = events;
            reports.push(report);
        }
        labels.push(mode.label());
        runs.push(run);
    }

    ensure_dir(&args.out)?;
    write_text(&args.out.join("model.json"), &(fit.model.to_json()? + "\n"))?;
    let mut w = create(&args.out.join("posteriors.csv"))?;
    synthetic::write_posteriors_csv(&mut w, &posteriors)?;
    w.flush()?;
    let series: Vec<(String, Vec<usize>)> = labels
        .iter()
        .cloned()
        .zip(runs.iter().map(|r| r.runlength_path.clone()))
        .collect();
    write_paths_csv(&args.out.join("runlength.csv"), &series)?;
    let events: BTreeMap<&str, &[DetectionEvent]> = labels
        .iter()
        .map(String::as_str)
        .zip(runs.iter().map(|r| r.events.as_slice()))
        .collect();
    write_json(&args.out.join("events.json"), &events)?;
    if !reports.is_empty() {
        let by_label: BTreeMap<&str, &EvalReport> =
            labels.iter().map(String::as_str).zip(&reports).collect();
        write_json(&args.out.join("report.json"), &by_label)?;
    }
    if args.svg {
        let markers = truth.as_ref().map(|t| t.cp_times.clone()).unwrap_or_default();
        let chart = svg::runlength_chart("MAP run length by sample size", &series, &markers);
        write_text(&args.out.join("runlength.svg"), &chart)?;
    }
    Ok(PipelineOutcome {
        labels,
        runs,
        reports,
    })
}

pub fn plant(args: &PlantArgs) -> Result<(), CliError> {
    let cfg = PlantedStreamConfig {
        regime_lengths: args.regimes.clone(),
        profiles_per_regime: args.profiles,
        real_dim: args.real_dim,
        binary_dim: args.binary_dim,
        separation: args.separation,
        seed: args.seed,
    };
    let (records, truth) = provider::planted_stream(&cfg)?;
    ensure_dir(&args.out)?;
    let mut w = create(&args.out.join("observations.csv"))?;
    provider::write_observations_csv(&mut w, &records)?;
    w.flush()?;
    write_text(&args.out.join("truth.json"), &(truth.to_json()? + "\n"))?;
    Ok(())
}

/// Writes `t` followed by one MAP run-length column per series.
fn write_paths_csv(path: &Path, series: &[(String, Vec<usize>)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["t".to_string()];
    header.extend(series.iter().map(|(label, _)| format!("r_{label}")));
    w.write_record(&header).map_err(mcpd::Error::from)?;
    let steps = series.iter().map(|(_, p)| p.len()).max().unwrap_or(0);
    for t in 0..steps {
        let mut row = vec![t.to_string()];
        row.extend(
            series
                .iter()
                .map(|(_, p)| p.get(t).map(usize::to_string).unwrap_or_default()),
        );
        w.write_record(&row).map_err(mcpd::Error::from)?;
    }
    w.flush()?;
    Ok(())
}
