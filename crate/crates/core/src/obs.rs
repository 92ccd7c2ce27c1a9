//! Gamma observation noise and the multiplicative log-volatility channel
//! `z = v * exp(x / 2)`, with exact likelihood evaluation.
//!
//! Gamma parameterization: shape `beta`, scale `alpha`, density
//! `v^(beta-1) exp(-v/alpha) / (alpha^beta Gamma(beta))`, so the mean is
//! `alpha * beta` and the variance `alpha^2 * beta`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::error::Error;

/// Observation-noise law: shape `beta`, scale `alpha` (both positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaNoiseParams {
    alpha: f64,
    beta: f64,
}

impl GammaNoiseParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, Error> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::InvalidGammaParam {
                name: "alpha",
                value: alpha,
            });
        }
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::InvalidGammaParam {
                name: "beta",
                value: beta,
            });
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `alpha * beta`.
    pub fn mean(&self) -> f64 {
        self.alpha * self.beta
    }

    /// `alpha^2 * beta`.
    pub fn variance(&self) -> f64 {
        self.alpha * self.alpha * self.beta
    }

    /// One noise draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Parameters are validated at construction; Gamma::new cannot fail.
        Gamma::new(self.beta, self.alpha)
            .expect("validated gamma parameters")
            .sample(rng)
    }
}

/// Mean of the noise law, `alpha * beta`.
pub fn noise_mean(params: &GammaNoiseParams) -> f64 {
    params.mean()
}

/// `count` IID noise draws.
pub fn sample_noise<R: Rng + ?Sized>(
    params: &GammaNoiseParams,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>, Error> {
    if count == 0 {
        return Err(Error::EmptyHorizon);
    }
    let dist = Gamma::new(params.beta(), params.alpha()).expect("validated gamma parameters");
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// One observation `z = v * exp(x / 2)` of a latent state.
pub fn observe<R: Rng + ?Sized>(x: f64, params: &GammaNoiseParams, rng: &mut R) -> f64 {
    params.sample(rng) * (0.5 * x).exp()
}

/// Log density of an observation given the latent state, by change of
/// variables `v = z * exp(-x/2)`:
///
/// ```text
/// log p(z | x) = (beta-1) log v - v/alpha - beta log alpha - log Gamma(beta) - x/2
/// ```
///
/// Finite for `z > 0`. At `z = 0` the analytic limit is returned: negative
/// infinity for `beta > 1`, the finite endpoint density for `beta = 1`, and
/// positive infinity for `beta < 1` (the density diverges at the origin).
pub fn log_likelihood(z: f64, x: f64, params: &GammaNoiseParams) -> Result<f64, Error> {
    if !z.is_finite() || z < 0.0 {
        return Err(Error::NegativeObservation { value: z });
    }
    let alpha = params.alpha();
    let beta = params.beta();
    let norm = -beta * alpha.ln() - ln_gamma(beta);
    if z == 0.0 {
        return Ok(if beta > 1.0 {
            f64::NEG_INFINITY
        } else if beta < 1.0 {
            f64::INFINITY
        } else {
            norm - 0.5 * x
        });
    }
    // ln v stays finite even where v itself over- or underflows.
    let ln_v = z.ln() - 0.5 * x;
    let v = ln_v.exp();
    Ok((beta - 1.0) * ln_v - v / alpha + norm - 0.5 * x)
}

/// Nonlinear observation channel. A single variant today; adding one means
/// supplying a sampler and a log-likelihood, and the filter stays
/// channel-agnostic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservationChannel {
    /// `z = v * exp(x / 2)` with gamma-distributed `v`.
    LogVolatility { noise: GammaNoiseParams },
}

impl ObservationChannel {
    pub fn log_volatility(noise: GammaNoiseParams) -> Self {
        Self::LogVolatility { noise }
    }

    pub fn noise(&self) -> &GammaNoiseParams {
        match self {
            Self::LogVolatility { noise } => noise,
        }
    }

    pub fn observe<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        match self {
            Self::LogVolatility { noise } => observe(x, noise, rng),
        }
    }

    pub fn log_likelihood(&self, z: f64, x: f64) -> Result<f64, Error> {
        match self {
            Self::LogVolatility { noise } => log_likelihood(z, x, noise),
        }
    }

    /// Conditional mean of an observation given the latent state,
    /// `E[z | x] = alpha beta exp(x/2)`. Used to map latent estimates back to
    /// the observation scale.
    pub fn predict(&self, x: f64) -> f64 {
        match self {
            Self::LogVolatility { noise } => noise.mean() * (0.5 * x).exp(),
        }
    }
}
