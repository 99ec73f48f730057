//! Latent-class posteriors from raw heterogeneous observations.
//!
//! Each record has real-valued features, modelled per component as
//! independent Gaussians, and binary features, modelled as independent
//! Bernoullis. A single latent class explains the whole record. The mixture is
//! fitted by batch EM, and [`posterior`] then turns each record into
//! `p(z_t | x_t)`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::sampler::{CategoricalPosterior, SeededRng};
use crate::synthetic::GroundTruth;
use crate::{log_sum_exp, Error, Result};

/// Components with less responsibility mass than this are reseeded.
const EMPTY_COMPONENT_MASS: f64 = 1e-8;
/// Bernoulli clamp applied at initialisation.
const INIT_BERNOULLI_CLAMP: f64 = 0.01;
/// Bernoulli clamp inside the M-step; keeps log-densities finite.
const BERNOULLI_CLAMP: f64 = 1e-6;
/// Variance floor as a fraction of each feature's overall variance.
const RELATIVE_VARIANCE_FLOOR: f64 = 1e-3;
const ABSOLUTE_VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub t: usize,
    pub real: Vec<f64>,
    pub binary: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub bernoulli: Vec<Vec<f64>>,
}

impl MixtureModel {
    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn real_dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn binary_dim(&self) -> usize {
        self.bernoulli.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.components();
        if k < 2 {
            return Err(Error::invalid(format!("mixture needs >= 2 components, got {k}")));
        }
        if self.means.len() != k || self.variances.len() != k || self.bernoulli.len() != k {
            return Err(Error::invalid("mixture parameter arrays disagree on component count"));
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("mixture weights are not on the simplex"));
        }
        let (dr, db) = (self.real_dim(), self.binary_dim());
        for c in 0..k {
            if self.means[c].len() != dr || self.variances[c].len() != dr {
                return Err(Error::invalid(format!("component {} has wrong real dimension", c + 1)));
            }
            if self.bernoulli[c].len() != db {
                return Err(Error::invalid(format!("component {} has wrong binary dimension", c + 1)));
            }
            if self.variances[c].iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::invalid(format!("component {} has a non-positive variance", c + 1)));
            }
            if self.bernoulli[c].iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
                return Err(Error::invalid(format!(
                    "component {} has a Bernoulli parameter outside (0, 1)",
                    c + 1
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    /// `log w_c + log p(x | c)` for every component.
    fn log_joint(&self, x: &ObservationRecord) -> Vec<f64> {
        (0..self.components())
            .map(|c| {
                let gauss: f64 = x
                    .real
                    .iter()
                    .zip(&self.means[c])
                    .zip(&self.variances[c])
                    .map(|((&v, &m), &var)| -0.5 * ((2.0 * PI * var).ln() + (v - m).powi(2) / var))
                    .sum();
                let bern: f64 = x
                    .binary
                    .iter()
                    .zip(&self.bernoulli[c])
                    .map(|(&b, &p)| if b == 1 { p.ln() } else { (1.0 - p).ln() })
                    .sum();
                self.weights[c].ln() + gauss + bern
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub components: usize,
    pub max_iters: usize,
    /// Stop once the relative log-likelihood improvement falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            components: 20,
            max_iters: 200,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmFit {
    pub model: MixtureModel,
    /// Data log-likelihood at initialisation and after every M-step.
    pub log_likelihood: Vec<f64>,
    /// M-step indices (1-based, aligned with `log_likelihood`) in which an
    /// empty component was reseeded.
    pub reseeded_at: Vec<usize>,
}

fn stream_dims(stream: &[ObservationRecord]) -> Result<(usize, usize)> {
    let first = stream.first().ok_or_else(|| Error::invalid("empty observation stream"))?;
    let (dr, db) = (first.real.len(), first.binary.len());
    if dr + db == 0 {
        return Err(Error::invalid("observations carry no features"));
    }
    for x in stream {
        if x.real.len() != dr || x.binary.len() != db {
            return Err(Error::invalid(format!(
                "record t = {} has {} real / {} binary features, expected {dr} / {db}",
                x.t,
                x.real.len(),
                x.binary.len()
            )));
        }
        if x.binary.iter().any(|&b| b > 1) {
            return Err(Error::invalid(format!("record t = {} has a non-binary value", x.t)));
        }
        if x.real.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("record t = {} has a non-finite value", x.t)));
        }
    }
    Ok((dr, db))
}

/// Batch EM with k-means++ style seeding.
pub fn fit_em(stream: &[ObservationRecord], cfg: &EmConfig) -> Result<EmFit> {
    let k = cfg.components;
    if k < 2 {
        return Err(Error::invalid(format!("mixture needs >= 2 components, got {k}")));
    }
    if stream.len() < k {
        return Err(Error::invalid(format!(
            "{} records cannot support {k} components",
            stream.len()
        )));
    }
    if cfg.max_iters == 0 || !(cfg.tol >= 0.0) {
        return Err(Error::invalid("EM needs max_iters >= 1 and tol >= 0"));
    }
    let (dr, _) = stream_dims(stream)?;
    let mut rng = SeededRng::new(cfg.seed);
    let n = stream.len() as f64;

    let global_mean: Vec<f64> = (0..dr)
        .map(|d| stream.iter().map(|x| x.real[d]).sum::<f64>() / n)
        .collect();
    let global_var: Vec<f64> = (0..dr)
        .map(|d| stream.iter().map(|x| (x.real[d] - global_mean[d]).powi(2)).sum::<f64>() / n)
        .collect();
    let var_floor: Vec<f64> = global_var
        .iter()
        .map(|v| (v * RELATIVE_VARIANCE_FLOOR).max(ABSOLUTE_VARIANCE_FLOOR))
        .collect();

    let mut model = seed_model(stream, k, &global_var, &var_floor, &mut rng);
    let mut resp = vec![vec![0.0; k]; stream.len()];
    let mut trace = vec![e_step(&model, stream, &mut resp)?];
    let mut reseeded_at = Vec::new();

    for iter in 1..=cfg.max_iters {
        let reseeded = m_step(&mut model, stream, &resp, &var_floor, &global_var, &mut rng);
        if reseeded {
            reseeded_at.push(iter);
        }
        let ll = e_step(&model, stream, &mut resp)?;
        let prev = *trace.last().expect("trace seeded");
        trace.push(ll);
        if !reseeded && (ll - prev) <= cfg.tol * prev.abs() {
            break;
        }
    }
    Ok(EmFit {
        model,
        log_likelihood: trace,
        reseeded_at,
    })
}

fn feature_vector(x: &ObservationRecord) -> Vec<f64> {
    if x.real.is_empty() {
        x.binary.iter().map(|&b| f64::from(b)).collect()
    } else {
        x.real.clone()
    }
}

fn seed_model(
    stream: &[ObservationRecord],
    k: usize,
    global_var: &[f64],
    var_floor: &[f64],
    rng: &mut SeededRng,
) -> MixtureModel {
    let points: Vec<Vec<f64>> = stream.iter().map(feature_vector).collect();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();

    // k-means++ centres.
    let mut centres = vec![points[rng.random_range(0..points.len())].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(p, &centres[0])).collect();
    while centres.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            nearest
                .iter()
                .position(|&d| {
                    acc += d;
                    acc > u
                })
                .unwrap_or(points.len() - 1)
        } else {
            rng.random_range(0..points.len())
        };
        centres.push(points[pick].clone());
        let c = centres.last().expect("just pushed");
        for (d, p) in nearest.iter_mut().zip(&points) {
            *d = d.min(dist2(p, c));
        }
    }

    let assign: Vec<usize> = points
        .iter()
        .map(|p| {
            (0..k)
                .min_by(|&a, &b| dist2(p, &centres[a]).total_cmp(&dist2(p, &centres[b])))
                .expect("k >= 2")
        })
        .collect();

    let dr = stream[0].real.len();
    let db = stream[0].binary.len();
    let n = stream.len() as f64;
    let global_freq: Vec<f64> = (0..db)
        .map(|d| stream.iter().map(|x| f64::from(x.binary[d])).sum::<f64>() / n)
        .collect();
    let clamp = |p: f64| p.clamp(INIT_BERNOULLI_CLAMP, 1.0 - INIT_BERNOULLI_CLAMP);

    let mut model = MixtureModel {
        weights: Vec::with_capacity(k),
        means: Vec::with_capacity(k),
        variances: Vec::with_capacity(k),
        bernoulli: Vec::with_capacity(k),
    };
    for c in 0..k {
        let members: Vec<&ObservationRecord> = stream
            .iter()
            .zip(&assign)
            .filter(|(_, &a)| a == c)
            .map(|(x, _)| x)
            .collect();
        let m = members.len() as f64;
        model.weights.push(m.max(1.0));
        if members.is_empty() {
            model.means.push(stream[rng.random_range(0..stream.len())].real.clone());
            model.variances.push(global_var.iter().zip(var_floor).map(|(v, f)| v.max(*f)).collect());
            model.bernoulli.push(global_freq.iter().map(|&p| clamp(p)).collect());
            continue;
        }
        let mean: Vec<f64> = (0..dr)
            .map(|d| members.iter().map(|x| x.real[d]).sum::<f64>() / m)
            .collect();
        let var: Vec<f64> = (0..dr)
            .map(|d| {
                if members.len() < 2 {
                    global_var[d].max(var_floor[d])
                } else {
                    let v = members.iter().map(|x| (x.real[d] - mean[d]).powi(2)).sum::<f64>() / m;
                    v.max(var_floor[d])
                }
            })
            .collect();
        let freq: Vec<f64> = (0..db)
            .map(|d| clamp(members.iter().map(|x| f64::from(x.binary[d])).sum::<f64>() / m))
            .collect();
        model.means.push(mean);
        model.variances.push(var);
        model.bernoulli.push(freq);
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
    model
}

/// Fills `resp` with responsibilities and returns the data log-likelihood.
fn e_step(model: &MixtureModel, stream: &[ObservationRecord], resp: &mut [Vec<f64>]) -> Result<f64> {
    let mut ll = 0.0;
    for (x, row) in stream.iter().zip(resp.iter_mut()) {
        let lj = model.log_joint(x);
        let norm = log_sum_exp(lj.iter().copied());
        if !norm.is_finite() {
            return Err(Error::numerical(format!("every component underflowed at t = {}", x.t)));
        }
        for (r, l) in row.iter_mut().zip(&lj) {
            *r = (l - norm).exp();
        }
        ll += norm;
    }
    Ok(ll)
}

/// Maximises the expected complete-data log-likelihood subject to the
/// variance floor and Bernoulli clamp. Returns whether any component had to
/// be reseeded.
fn m_step(
    model: &mut MixtureModel,
    stream: &[ObservationRecord],
    resp: &[Vec<f64>],
    var_floor: &[f64],
    global_var: &[f64],
    rng: &mut SeededRng,
) -> bool {
    let n = stream.len() as f64;
    let (dr, db) = (model.real_dim(), model.binary_dim());
    let mut reseeded = false;
    for c in 0..model.components() {
        let mass: f64 = resp.iter().map(|r| r[c]).sum();
        if mass < EMPTY_COMPONENT_MASS {
            let datum = &stream[rng.random_range(0..stream.len())];
            warn!("mixture component {} lost its mass; reseeding at t = {}", c + 1, datum.t);
            model.weights[c] = 1.0 / n;
            model.means[c] = datum.real.clone();
            model.variances[c] = global_var.iter().zip(var_floor).map(|(v, f)| v.max(*f)).collect();
            model.bernoulli[c] = datum
                .binary
                .iter()
                .map(|&b| (f64::from(b)).clamp(INIT_BERNOULLI_CLAMP, 1.0 - INIT_BERNOULLI_CLAMP))
                .collect();
            reseeded = true;
            continue;
        }
        model.weights[c] = mass / n;
        for d in 0..dr {
            let mean = stream.iter().zip(resp).map(|(x, r)| r[c] * x.real[d]).sum::<f64>() / mass;
            let var = stream
                .iter()
                .zip(resp)
                .map(|(x, r)| r[c] * (x.real[d] - mean).powi(2))
                .sum::<f64>()
                / mass;
            model.means[c][d] = mean;
            model.variances[c][d] = var.max(var_floor[d]);
        }
        for d in 0..db {
            let p = stream
                .iter()
                .zip(resp)
                .map(|(x, r)| r[c] * f64::from(x.binary[d]))
                .sum::<f64>()
                / mass;
            model.bernoulli[c][d] = p.clamp(BERNOULLI_CLAMP, 1.0 - BERNOULLI_CLAMP);
        }
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
    reseeded
}

/// Responsibilities `p(z | x)` of one record.
pub fn posterior(model: &MixtureModel, x: &ObservationRecord) -> Result<CategoricalPosterior<f64>> {
    if x.real.len() != model.real_dim() || x.binary.len() != model.binary_dim() {
        return Err(Error::invalid(format!(
            "record t = {} does not match the model's feature dimensions",
            x.t
        )));
    }
    let lj = model.log_joint(x);
    let norm = log_sum_exp(lj.iter().copied());
    if !norm.is_finite() {
        return Err(Error::numerical(format!("every component underflowed at t = {}", x.t)));
    }
    CategoricalPosterior::new(lj.iter().map(|l| (l - norm).exp()).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Index,
    Real,
    Binary,
}

/// Reads an observation CSV.
///
/// Every header cell is `role:name` with role `index`, `real` or `binary`. At
/// most one index column may appear. Without one, records are numbered from 0.
pub fn ingest_csv(path: &Path) -> Result<Vec<ObservationRecord>> {
    let file = std::fs::File::open(path)?;
    read_observations_csv(file, path)
}

pub fn read_observations_csv<R: Read>(reader: R, origin: &Path) -> Result<Vec<ObservationRecord>> {
    let err = |line: u64, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Ok(Vec::new());
    }
    let mut roles = Vec::with_capacity(header.len());
    for cell in header.iter() {
        let (role, name) = cell
            .split_once(':')
            .ok_or_else(|| err(1, format!("header cell {cell:?} is not role:name")))?;
        let role = match role.trim() {
            "index" => Role::Index,
            "real" => Role::Real,
            "binary" => Role::Binary,
            other => return Err(err(1, format!("unknown column role {other:?}"))),
        };
        roles.push((role, name.trim().to_string()));
    }
    if roles.iter().filter(|(r, _)| *r == Role::Index).count() > 1 {
        return Err(err(1, "more than one index column".into()));
    }

    let mut records = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let record = result?;
        let line = record.position().map_or(row as u64 + 2, |p| p.line());
        if record.len() != roles.len() {
            return Err(err(
                line,
                format!("expected {} fields, found {}", roles.len(), record.len()),
            ));
        }
        let mut obs = ObservationRecord {
            t: row,
            real: Vec::new(),
            binary: Vec::new(),
        };
        for ((role, name), field) in roles.iter().zip(record.iter()) {
            let field = field.trim();
            match role {
                Role::Index => {
                    obs.t = field
                        .parse()
                        .map_err(|_| err(line, format!("index {name:?} = {field:?} is not a step number")))?;
                }
                Role::Real => {
                    let v: f64 = field
                        .parse()
                        .map_err(|_| err(line, format!("real column {name:?} = {field:?} is not a number")))?;
                    if !v.is_finite() {
                        return Err(err(line, format!("real column {name:?} is not finite")));
                    }
                    obs.real.push(v);
                }
                Role::Binary => obs.binary.push(match field {
                    "0" => 0,
                    "1" => 1,
                    _ => {
                        return Err(err(
                            line,
                            format!("binary column {name:?} holds {field:?}, expected 0 or 1"),
                        ))
                    }
                }),
            }
        }
        records.push(obs);
    }
    Ok(records)
}

/// Writes records with an `index:t` column followed by `real:x<i>` and
/// `binary:b<i>` columns.
pub fn write_observations_csv<W: Write>(writer: W, records: &[ObservationRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let (dr, db) = match records.first() {
        Some(x) => (x.real.len(), x.binary.len()),
        None => {
            out.flush()?;
            return Ok(());
        }
    };
    let mut header = vec!["index:t".to_string()];
    header.extend((1..=dr).map(|d| format!("real:x{d}")));
    header.extend((1..=db).map(|d| format!("binary:b{d}")));
    out.write_record(&header)?;
    for x in records {
        let mut row = vec![x.t.to_string()];
        row.extend(x.real.iter().map(|v| v.to_string()));
        row.extend(x.binary.iter().map(|b| b.to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// A heterogeneous stream with planted regimes, for exercising the pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedStreamConfig {
    pub regime_lengths: Vec<usize>,
    /// Latent profiles owned by each regime; every record picks one uniformly.
    pub profiles_per_regime: usize,
    pub real_dim: usize,
    pub binary_dim: usize,
    /// Standard deviation of profile means around zero, in noise units.
    pub separation: f64,
    pub seed: u64,
}

impl Default for PlantedStreamConfig {
    fn default() -> Self {
        Self {
            regime_lengths: vec![75; 4],
            profiles_per_regime: 1,
            real_dim: 6,
            binary_dim: 12,
            separation: 2.0,
            seed: 0,
        }
    }
}

/// Draws a planted stream. Each regime owns `profiles_per_regime` profiles,
/// each with Gaussian means of spread `separation` and Bernoulli rates uniform
/// on `(0.05, 0.95)`. A record picks one of its regime's profiles at random and
/// adds unit Gaussian noise. Returns the records and the regime boundaries.
pub fn planted_stream(cfg: &PlantedStreamConfig) -> Result<(Vec<ObservationRecord>, GroundTruth)> {
    if cfg.regime_lengths.is_empty() || cfg.regime_lengths.contains(&0) {
        return Err(Error::invalid("every planted regime needs a positive length"));
    }
    if cfg.real_dim + cfg.binary_dim == 0 {
        return Err(Error::invalid("planted stream needs at least one feature"));
    }
    if cfg.profiles_per_regime == 0 {
        return Err(Error::invalid("every planted regime needs at least one profile"));
    }
    if !(cfg.separation.is_finite() && cfg.separation >= 0.0) {
        return Err(Error::invalid("separation must be finite and >= 0"));
    }
    let mut rng = SeededRng::new(cfg.seed);
    let spread = Normal::new(0.0, cfg.separation).map_err(|e| Error::invalid(e.to_string()))?;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut records = Vec::new();
    let mut cp_times = Vec::new();
    for (i, &len) in cfg.regime_lengths.iter().enumerate() {
        if i > 0 {
            cp_times.push(records.len());
        }
        let profiles: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.profiles_per_regime)
            .map(|_| {
                let means = (0..cfg.real_dim).map(|_| spread.sample(&mut rng)).collect();
                let rates = (0..cfg.binary_dim)
                    .map(|_| rng.random_range(0.05..0.95))
                    .collect();
                (means, rates)
            })
            .collect();
        for _ in 0..len {
            let t = records.len();
            let (means, rates) = &profiles[rng.random_range(0..profiles.len())];
            records.push(ObservationRecord {
                t,
                real: means.iter().map(|m| m + noise.sample(&mut rng)).collect(),
                binary: rates.iter().map(|&p| u8::from(rng.random::<f64>() < p)).collect(),
            });
        }
    }
    let truth = GroundTruth {
        cp_times,
        segment_length: *cfg.regime_lengths.iter().min().expect("non-empty"),
        horizon: records.len(),
        beta: Vec::new(),
        config: None,
    };
    Ok((records, truth))
}
