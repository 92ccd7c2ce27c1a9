//! Variational machinery over latent trajectories: the unnormalized
//! variational log-posterior, the analytic gamma KL term, and a Monte Carlo
//! fitness estimate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::Error;
use crate::fgn::{cholesky_lower, CovarianceMatrix};
use crate::numerics::{mean_and_std_error, pairwise_sum};
use crate::obs::{GammaNoiseParams, ObservationChannel};

/// Sign applied to the residual term of the variational log-posterior.
///
/// `AsPrinted` keeps the residual contribution `+ sum (z - x)^2 E[v]`, the
/// form the posterior is stated in; `Negated` flips it so that larger
/// residuals are penalized, which is what the data-dominant limit requires.
/// The default is `AsPrinted`; the switch exists because the two conventions
/// disagree and downstream users may need either.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualSign {
    #[default]
    AsPrinted,
    Negated,
}

/// Variational posterior over a latent trajectory: a zero-mean Gaussian with
/// the model's state covariance, reweighted by per-step noise-mean residual
/// terms. The normalization constant is dropped throughout; downstream
/// consumers renormalize.
#[derive(Debug, Clone)]
pub struct VariationalPosterior {
    cov: CovarianceMatrix,
    chol: DMatrix<f64>,
    log_norm: f64,
    noise_law: GammaNoiseParams,
    noise_means: Vec<f64>,
    residual_sign: ResidualSign,
}

impl VariationalPosterior {
    /// Builds the posterior for a given state covariance and variational
    /// noise law. Every per-step noise mean defaults to the law's mean.
    pub fn new(cov: CovarianceMatrix, noise_law: GammaNoiseParams) -> Result<Self, Error> {
        let t = cov.dim();
        let chol = cholesky_lower(cov.entries())?;
        let log_det_half: f64 = (0..t).map(|i| chol[(i, i)].ln()).sum();
        let log_norm = -0.5 * t as f64 * (2.0 * std::f64::consts::PI).ln() - log_det_half;
        Ok(Self {
            cov,
            chol,
            log_norm,
            noise_law,
            noise_means: vec![noise_law.mean(); t],
            residual_sign: ResidualSign::AsPrinted,
        })
    }

    /// Overrides the per-step noise means. All entries must be positive.
    pub fn with_noise_means(mut self, means: Vec<f64>) -> Result<Self, Error> {
        if means.len() != self.horizon() {
            return Err(Error::DimensionMismatch {
                what: "noise means",
                expected: self.horizon(),
                actual: means.len(),
            });
        }
        if means.iter().any(|&m| !m.is_finite() || m <= 0.0) {
            return Err(Error::InvalidGammaParam {
                name: "noise mean",
                value: *means
                    .iter()
                    .find(|m| !m.is_finite() || **m <= 0.0)
                    .unwrap(),
            });
        }
        self.noise_means = means;
        Ok(self)
    }

    pub fn with_residual_sign(mut self, sign: ResidualSign) -> Self {
        self.residual_sign = sign;
        self
    }

    pub fn horizon(&self) -> usize {
        self.cov.dim()
    }

    pub fn noise_means(&self) -> &[f64] {
        &self.noise_means
    }

    pub fn noise_law(&self) -> &GammaNoiseParams {
        &self.noise_law
    }

    pub fn state_covariance(&self) -> &CovarianceMatrix {
        &self.cov
    }

    /// Zero-mean Gaussian log density of a trajectory under the state
    /// covariance.
    fn log_gaussian(&self, x: &[f64]) -> f64 {
        // Solve L y = x forward; the quadratic form is |y|^2.
        let t = x.len();
        let mut y = DVector::zeros(t);
        for i in 0..t {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.chol[(i, j)] * y[j];
            }
            y[i] = acc / self.chol[(i, i)];
        }
        self.log_norm - 0.5 * y.norm_squared()
    }

    /// One draw from the Gaussian part of the posterior.
    fn sample_gaussian<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let t = self.horizon();
        let z: Vec<f64> = (0..t).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        (0..t)
            .map(|i| (0..=i).map(|j| self.chol[(i, j)] * z[j]).sum())
            .collect()
    }
}

/// Unnormalized variational log-posterior of a trajectory `x` given
/// observations `z`:
///
/// ```text
/// log N(x; 0, C) + sign * sum_l (z_l - x_l)^2 E[v_l]
/// ```
pub fn log_q_unnormalized(
    x: &[f64],
    z: &[f64],
    vp: &VariationalPosterior,
) -> Result<f64, Error> {
    let t = vp.horizon();
    if x.len() != t {
        return Err(Error::DimensionMismatch {
            what: "trajectory",
            expected: t,
            actual: x.len(),
        });
    }
    if z.len() != t {
        return Err(Error::DimensionMismatch {
            what: "observations",
            expected: t,
            actual: z.len(),
        });
    }
    let sign = match vp.residual_sign {
        ResidualSign::AsPrinted => 1.0,
        ResidualSign::Negated => -1.0,
    };
    let residual: f64 = x
        .iter()
        .zip(z)
        .zip(vp.noise_means())
        .map(|((&xi, &zi), &ev)| (zi - xi) * (zi - xi) * ev)
        .sum();
    Ok(vp.log_gaussian(x) + sign * residual)
}

/// Analytic KL divergence between two gamma laws in shape-scale form.
/// Non-negative, and exactly zero when the parameters coincide.
pub fn kl_gamma(q: &GammaNoiseParams, p: &GammaNoiseParams) -> f64 {
    let (kq, tq) = (q.beta(), q.alpha());
    let (kp, tp) = (p.beta(), p.alpha());
    (kq - kp) * digamma(kq) - ln_gamma(kq) + ln_gamma(kp) + kp * (tp.ln() - tq.ln())
        + kq * (tq - tp) / tp
}

/// Monte Carlo fitness estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Estimates the fitness functional of the variational posterior against
/// observations: the mean observation log-likelihood over trajectories drawn
/// from the variational law, minus the KL divergence from the variational
/// noise law to the channel's. The noise expectation is available in closed
/// form, so only the trajectory average is sampled.
///
/// Aborts with a diagnostic if any sampled term is non-finite.
pub fn fitness_estimate<R: Rng + ?Sized>(
    vp: &VariationalPosterior,
    channel: &ObservationChannel,
    z: &[f64],
    mc_samples: usize,
    rng: &mut R,
) -> Result<FitnessEstimate, Error> {
    let t = vp.horizon();
    if z.len() != t {
        return Err(Error::DimensionMismatch {
            what: "observations",
            expected: t,
            actual: z.len(),
        });
    }
    if mc_samples == 0 {
        return Err(Error::EmptyHorizon);
    }
    let kl_term = t as f64 * kl_gamma(vp.noise_law(), channel.noise());
    let mut draws = Vec::with_capacity(mc_samples);
    for index in 0..mc_samples {
        let x = vp.sample_gaussian(rng);
        let terms: Result<Vec<f64>, Error> = z
            .iter()
            .zip(&x)
            .map(|(&zl, &xl)| channel.log_likelihood(zl, xl))
            .collect();
        let ll = pairwise_sum(&terms?);
        if !ll.is_finite() {
            return Err(Error::NonFiniteSample {
                index,
                detail: format!("log-likelihood term {ll}"),
            });
        }
        draws.push(ll);
    }
    let (mean, std_error) = mean_and_std_error(&draws);
    Ok(FitnessEstimate {
        estimate: mean - kl_term,
        std_error,
        samples: mc_samples,
    })
}
