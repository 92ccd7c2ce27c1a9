//! Vector autoregression over correlated innovations: joint simulation,
//! particle filtering of all series through the observation channel, and
//! missing-value imputation.
//!
//! Innovations are cross-sectionally independent with a shared Hurst
//! exponent, so one conditional-law recursion serves every dimension, scaled
//! by the per-dimension variance. Missing observations simply contribute no
//! likelihood factor at their step.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::Error;
use crate::fgn::{FgnConditional, FgnSpec};
use crate::numerics::{log_sum_exp, pairwise_sum};
use crate::report::{FilterReport, RunMetadata};
use crate::smc::{paper_replacement_plan, substream, systematic_indices, FilterConfig, ResamplingScheme};

/// VAR(k) model: one weight matrix per lag plus a per-dimension innovation
/// law with a shared Hurst exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct VarModel {
    weights: Vec<DMatrix<f64>>,
    innovations: Vec<FgnSpec>,
}

impl VarModel {
    pub fn new(weights: Vec<DMatrix<f64>>, innovations: Vec<FgnSpec>) -> Result<Self, Error> {
        if weights.is_empty() {
            return Err(Error::InvalidModel("VAR order must be at least 1".into()));
        }
        let n = innovations.len();
        if n == 0 {
            return Err(Error::InvalidModel(
                "VAR dimension must be at least 1".into(),
            ));
        }
        for (lag, w) in weights.iter().enumerate() {
            if w.nrows() != n || w.ncols() != n {
                return Err(Error::InvalidModel(format!(
                    "weight matrix for lag {} is {}x{}, expected {n}x{n}",
                    lag + 1,
                    w.nrows(),
                    w.ncols()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput {
                    what: "VAR weight",
                });
            }
        }
        let h0 = innovations[0].hurst().value();
        if innovations.iter().any(|s| s.hurst().value() != h0) {
            return Err(Error::InvalidModel(
                "innovation laws must share the Hurst exponent".into(),
            ));
        }
        Ok(Self {
            weights,
            innovations,
        })
    }

    pub fn order(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.innovations.len()
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn innovations(&self) -> &[FgnSpec] {
        &self.innovations
    }

    pub fn describe(&self) -> String {
        format!(
            "VAR({}) n={} H={} sigma2={:?}",
            self.order(),
            self.dim(),
            self.innovations[0].hurst().value(),
            self.innovations
                .iter()
                .map(|s| s.sigma2())
                .collect::<Vec<_>>(),
        )
    }

    /// One recursion step: `x_t = sum_i W_i x_{t-i} + u_t` over the flat
    /// step-major state history, with zero initial conditions.
    fn step_into(&self, states: &[f64], u_new: &[f64], out: &mut Vec<f64>) {
        let n = self.dim();
        let t = states.len() / n;
        for (d, &u) in u_new.iter().enumerate() {
            let mut x = u;
            for (lag, w) in self.weights.iter().enumerate() {
                if lag < t {
                    let past = &states[(t - 1 - lag) * n..(t - lag) * n];
                    for (e, &xe) in past.iter().enumerate() {
                        x += w[(d, e)] * xe;
                    }
                }
            }
            out.push(x);
        }
    }
}

/// Multivariate observation panel with a missing-value mask.
///
/// Observation values ingested for filtering must be non-negative (the
/// channel's support); that is enforced at the CSV boundary and when a
/// dataset enters the filter. Imputed outputs reuse this container for
/// latent-scale estimates, which may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: DMatrix<f64>, // n x T
    missing: Vec<bool>,   // row-major n x T, true = missing
    labels: Vec<String>,
}

impl Dataset {
    /// Validates shapes; entries must be finite where observed.
    pub fn new(values: DMatrix<f64>, missing: Vec<bool>, labels: Vec<String>) -> Result<Self, Error> {
        let n = values.nrows();
        let horizon = values.ncols();
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                what: "dataset labels",
                expected: n,
                actual: labels.len(),
            });
        }
        if missing.len() != n * horizon {
            return Err(Error::DimensionMismatch {
                what: "missing mask",
                expected: n * horizon,
                actual: missing.len(),
            });
        }
        for d in 0..n {
            for t in 0..horizon {
                let v = values[(d, t)];
                if !missing[d * horizon + t] && !v.is_finite() {
                    return Err(Error::NonFiniteInput {
                        what: "dataset value",
                    });
                }
            }
        }
        Ok(Self {
            values,
            missing,
            labels,
        })
    }

    pub fn n_series(&self) -> usize {
        self.values.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.values.ncols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn is_missing(&self, series: usize, t: usize) -> bool {
        self.missing[series * self.horizon() + t]
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    /// Parses the dataset interchange format: a header row of labels, one
    /// row per time step, an empty cell marking a missing value. Errors cite
    /// the offending 1-based line.
    pub fn from_csv(text: &str) -> Result<Self, Error> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::DataFormat {
            line: 1,
            message: "empty dataset".into(),
        })?;
        let labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        if labels.iter().any(|l| l.is_empty()) {
            return Err(Error::DataFormat {
                line: 1,
                message: "empty label in header".into(),
            });
        }
        let n = labels.len();
        let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != n {
                return Err(Error::DataFormat {
                    line: lineno,
                    message: format!("expected {n} cells, found {}", fields.len()),
                });
            }
            let mut row = Vec::with_capacity(n);
            for cell in fields {
                let cell = cell.trim();
                if cell.is_empty() {
                    row.push(None);
                } else {
                    let v: f64 = cell.parse().map_err(|_| Error::DataFormat {
                        line: lineno,
                        message: format!("invalid number `{cell}`"),
                    })?;
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::DataFormat {
                            line: lineno,
                            message: format!("negative observation {v}"),
                        });
                    }
                    row.push(Some(v));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::DataFormat {
                line: 1,
                message: "dataset has no data rows".into(),
            });
        }
        let horizon = rows.len();
        let mut values = DMatrix::zeros(n, horizon);
        let mut missing = vec![false; n * horizon];
        for (t, row) in rows.iter().enumerate() {
            for (d, cell) in row.iter().enumerate() {
                match cell {
                    Some(v) => values[(d, t)] = *v,
                    None => missing[d * horizon + t] = true,
                }
            }
        }
        Dataset::new(values, missing, labels)
    }

    /// Renders the same interchange format, leaving missing cells empty.
    pub fn to_csv(&self) -> String {
        let mut out = self.labels.join(",");
        out.push('\n');
        for t in 0..self.horizon() {
            let row: Vec<String> = (0..self.n_series())
                .map(|d| {
                    if self.is_missing(d, t) {
                        String::new()
                    } else {
                        format!("{}", self.values[(d, t)])
                    }
                })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Simulates `t` steps of the VAR recursion; returns the n x T latent matrix.
pub fn simulate_var<R: Rng + ?Sized>(
    model: &VarModel,
    t: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>, Error> {
    if t == 0 {
        return Err(Error::EmptyHorizon);
    }
    let n = model.dim();
    // Per-dimension joint innovation draws; the conditional recursion in the
    // filter realizes the same law, which the tests pin down.
    let mut innovations = DMatrix::zeros(n, t);
    for d in 0..n {
        let draw = crate::fgn::sample_fgn(t, &model.innovations()[d], rng)?;
        for (step, v) in draw.into_iter().enumerate() {
            innovations[(d, step)] = v;
        }
    }
    let mut states: Vec<f64> = Vec::with_capacity(n * t);
    let mut u = vec![0.0; n];
    for step in 0..t {
        for d in 0..n {
            u[d] = innovations[(d, step)];
        }
        let prior_len = states.len();
        let (past, _) = states.split_at(prior_len);
        let mut next = Vec::with_capacity(n);
        model.step_into(past, &u, &mut next);
        states.extend_from_slice(&next);
    }
    let mut out = DMatrix::zeros(n, t);
    for step in 0..t {
        for d in 0..n {
            out[(d, step)] = states[step * n + d];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct VarParticle {
    states: Vec<f64>,             // flat step-major: states[t * n + d]
    innovations: Vec<Vec<f64>>,   // per-dimension histories
    weight: f64,
}

/// Filters the dataset jointly over all series; returns one report per
/// series. Masked cells contribute no likelihood factor; estimates cover
/// every (series, step) pair. When the true latent matrix is given,
/// per-series RMSE traces are included.
pub fn filter_dataset(
    model: &VarModel,
    data: &Dataset,
    config: &FilterConfig,
    truth: Option<&DMatrix<f64>>,
) -> Result<Vec<FilterReport>, Error> {
    config.validate()?;
    let n = model.dim();
    let horizon = data.horizon();
    if data.n_series() != n {
        return Err(Error::DimensionMismatch {
            what: "dataset series",
            expected: n,
            actual: data.n_series(),
        });
    }
    for d in 0..n {
        for t in 0..horizon {
            if !data.is_missing(d, t) && data.values()[(d, t)] < 0.0 {
                return Err(Error::NegativeObservation {
                    value: data.values()[(d, t)],
                });
            }
        }
    }
    if let Some(xs) = truth {
        if xs.nrows() != n || xs.ncols() != horizon {
            return Err(Error::DimensionMismatch {
                what: "truth matrix",
                expected: n * horizon,
                actual: xs.nrows() * xs.ncols(),
            });
        }
    }

    let n_particles = config.n_particles;
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let weight = 1.0 / n_particles as f64;
    let sigmas: Vec<f64> = model
        .innovations()
        .iter()
        .map(|s| s.sigma2().sqrt())
        .collect();

    // Step 1: the first state equals the first innovation.
    // x_1 = u_1 under zero initial conditions.
    let mut particles: Vec<VarParticle> = (0..n_particles)
        .map(|_| {
            let mut states = Vec::with_capacity(n * horizon);
            let mut innovations = Vec::with_capacity(n);
            for sigma in &sigmas {
                let u1 = sigma * master.sample::<f64, _>(StandardNormal);
                states.push(u1);
                innovations.push(vec![u1]);
            }
            VarParticle {
                states,
                innovations,
                weight,
            }
        })
        .collect();

    // Shared conditional recursion: one per model since H is shared; the
    // variance scales per dimension.
    let mut conditional = FgnConditional::new(model.innovations()[0]);

    let mut estimates = DMatrix::zeros(n, horizon);
    let mut ess_trace = Vec::with_capacity(horizon);
    let mut resample_counts = Vec::with_capacity(horizon);

    for t in 0..horizon {
        if t > 0 {
            while conditional.history_len() < t {
                conditional.extend();
            }
            let ratio = conditional.variance_ratio();
            let sds: Vec<f64> = model
                .innovations()
                .iter()
                .map(|s| (s.sigma2() * ratio).sqrt())
                .collect();
            let cond = &conditional;
            let seed = config.seed;
            particles.par_iter_mut().enumerate().for_each(|(index, p)| {
                let mut rng = substream(seed, t, index);
                let mut u = Vec::with_capacity(n);
                for (history, sd) in p.innovations.iter().zip(&sds) {
                    let mean = cond.mean(history).expect("history length tracks the step");
                    let z: f64 = rng.sample(StandardNormal);
                    u.push(mean + sd * z);
                }
                let mut next = Vec::with_capacity(n);
                model.step_into(&p.states, &u, &mut next);
                p.states.extend_from_slice(&next);
                for (history, draw) in p.innovations.iter_mut().zip(&u) {
                    history.push(*draw);
                }
            });
        }

        // Reweight on the observed series only.
        let observed: Vec<(usize, f64)> = (0..n)
            .filter(|&d| !data.is_missing(d, t))
            .map(|d| (d, data.values()[(d, t)]))
            .collect();
        if !observed.is_empty() {
            let channel = &config.channel;
            let log_liks: Result<Vec<f64>, Error> = particles
                .par_iter()
                .map(|p| {
                    let mut acc = 0.0;
                    for &(d, z) in &observed {
                        acc += channel.log_likelihood(z, p.states[t * n + d])?;
                    }
                    Ok(acc)
                })
                .collect();
            let log_liks = log_liks?;
            let log_weights: Vec<f64> = particles
                .iter()
                .zip(&log_liks)
                .map(|(p, ll)| p.weight.ln() + ll)
                .collect();
            let norm = log_sum_exp(&log_weights);
            if norm == f64::NEG_INFINITY || norm.is_nan() {
                return Err(Error::WeightUnderflow { step: t + 1 });
            }
            for (p, lw) in particles.iter_mut().zip(&log_weights) {
                p.weight = (lw - norm).exp();
            }
            let total = pairwise_sum(&particles.iter().map(|p| p.weight).collect::<Vec<_>>());
            for p in &mut particles {
                p.weight /= total;
            }
        }

        let weights: Vec<f64> = particles.iter().map(|p| p.weight).collect();
        let ess =
            (1.0 / weights.iter().map(|w| w * w).sum::<f64>()).clamp(1.0, n_particles as f64);
        ess_trace.push(ess);

        // A fully masked step carries no new information: weights are
        // untouched and the step's estimate is the pure prediction, so
        // resampling is skipped as well.
        let due = !observed.is_empty()
            && match config.resample_threshold {
                None => true,
                Some(fraction) => ess < fraction * n_particles as f64,
            };
        let replaced = if due {
            match config.resampling {
                ResamplingScheme::PaperScheme => {
                    let plan = paper_replacement_plan(&weights, &mut master);
                    let old = std::mem::take(&mut particles);
                    let mut count = 0;
                    particles = plan
                        .iter()
                        .enumerate()
                        .map(|(i, decision)| match decision {
                            Some(src) => {
                                count += 1;
                                let mut p = old[*src].clone();
                                p.weight = (1.0 - weights[i]) / (n_particles - 1) as f64;
                                p
                            }
                            None => old[i].clone(),
                        })
                        .collect();
                    let total =
                        pairwise_sum(&particles.iter().map(|p| p.weight).collect::<Vec<_>>());
                    for p in &mut particles {
                        p.weight /= total;
                    }
                    count
                }
                ResamplingScheme::Systematic => {
                    let indices = systematic_indices(&weights, &mut master);
                    let old = std::mem::take(&mut particles);
                    let uniform = 1.0 / n_particles as f64;
                    let mut count = 0;
                    particles = indices
                        .iter()
                        .enumerate()
                        .map(|(slot, &src)| {
                            if src != slot {
                                count += 1;
                            }
                            let mut p = old[src].clone();
                            p.weight = uniform;
                            p
                        })
                        .collect();
                    count
                }
            }
        } else {
            0
        };
        resample_counts.push(replaced);

        for d in 0..n {
            let mut mean = 0.0;
            for p in &particles {
                mean += p.weight * p.states[t * n + d];
            }
            estimates[(d, t)] = mean;
        }
    }

    Ok((0..n)
        .map(|d| {
            let series_truth: Option<Vec<f64>> =
                truth.map(|xs| (0..horizon).map(|t| xs[(d, t)]).collect());
            let rmse_trace = series_truth.as_ref().map(|xs| {
                let mut acc = 0.0;
                (0..horizon)
                    .map(|t| {
                        let err = xs[t] - estimates[(d, t)];
                        acc += err * err;
                        (acc / (t + 1) as f64).sqrt()
                    })
                    .collect()
            });
            FilterReport {
                estimates: (0..horizon).map(|t| estimates[(d, t)]).collect(),
                truth: series_truth,
                rmse_trace,
                ess_trace: ess_trace.clone(),
                resample_counts: resample_counts.clone(),
                metadata: RunMetadata {
                    model: format!("{} series={}", model.describe(), data.labels()[d]),
                    alpha: config.channel.noise().alpha(),
                    beta: config.channel.noise().beta(),
                    n_particles,
                    resampling: config.resampling.name().to_string(),
                    seed: config.seed,
                    horizon,
                    jitter: None,
                    fitness: None,
                },
            }
        })
        .collect())
}

/// Fills every masked cell with the filter's estimate for that (series,
/// step); observed cells are copied bit-for-bit. The returned dataset has an
/// all-false mask. Estimates live on the latent scale, so filled cells may
/// be negative.
pub fn impute(reports: &[FilterReport], data: &Dataset) -> Result<Dataset, Error> {
    let n = data.n_series();
    let horizon = data.horizon();
    if reports.len() != n {
        return Err(Error::DimensionMismatch {
            what: "report collection",
            expected: n,
            actual: reports.len(),
        });
    }
    if reports.iter().any(|r| r.estimates.len() != horizon) {
        return Err(Error::DimensionMismatch {
            what: "report horizon",
            expected: horizon,
            actual: reports
                .iter()
                .map(|r| r.estimates.len())
                .find(|&l| l != horizon)
                .unwrap_or(horizon),
        });
    }
    let mut values = data.values().clone();
    for d in 0..n {
        for t in 0..horizon {
            if data.is_missing(d, t) {
                values[(d, t)] = reports[d].estimates[t];
            }
        }
    }
    Dataset::new(values, vec![false; n * horizon], data.labels().to_vec())
}
