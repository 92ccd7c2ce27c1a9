//! Fractional Gaussian innovation processes and their exact second-order
//! statistics.
//!
//! The innovation process is zero-mean stationary Gaussian with lag
//! autocorrelation
//!
//! ```text
//! rho(tau) = ((|tau|+1)^(2H) - 2|tau|^(2H) + (|tau|-1)^(2H)) / 2
//! ```
//!
//! normalized so that `rho(0) = 1`. `H = 0.5` reduces to white noise;
//! `H > 0.5` gives long-range positive dependence. Joint draws go through a
//! dense lower-triangular factorization of the covariance; one-step
//! conditionals use the Levinson recursion on the Toeplitz correlation
//! structure so that filtering never materializes a dense factor.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Error;

/// Hurst exponent, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstExponent(f64);

impl HurstExponent {
    /// Rejects values outside the open interval (0, 1), including the
    /// boundary values themselves.
    pub fn new(value: f64) -> Result<Self, Error> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidHurst(value))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Innovation law: Hurst exponent plus innovation variance sigma_u^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FgnSpec {
    hurst: HurstExponent,
    sigma2: f64,
}

impl FgnSpec {
    pub fn new(hurst: HurstExponent, sigma2: f64) -> Result<Self, Error> {
        if !sigma2.is_finite() || sigma2 < 0.0 {
            return Err(Error::InvalidVariance(sigma2));
        }
        Ok(Self { hurst, sigma2 })
    }

    pub fn hurst(&self) -> HurstExponent {
        self.hurst
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

/// Symmetric positive semi-definite matrix, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Checks symmetry to within 1e-12 relative error and positive
    /// semi-definiteness (eigenvalues down to -1e-10 times the trace are
    /// tolerated as round-off).
    pub fn new(entries: DMatrix<f64>) -> Result<Self, Error> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "covariance matrix",
                expected: n.max(1),
                actual: entries.ncols(),
            });
        }
        let scale = entries
            .iter()
            .fold(0.0_f64, |a, &b| a.max(b.abs()))
            .max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in (i + 1)..n {
                if (entries[(i, j)] - entries[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Asymmetric { row: i, col: j });
                }
            }
        }
        let trace: f64 = (0..n).map(|i| entries[(i, i)]).sum();
        let eigs = entries.clone().symmetric_eigenvalues();
        let floor = -1e-10 * trace.abs().max(f64::MIN_POSITIVE);
        if eigs.iter().any(|&e| e < floor) {
            // A genuinely indefinite matrix fails at whichever pivot the
            // factorization first hits; report pivot 0 as "construction".
            return Err(Error::NotPositiveDefinite { pivot: 0 });
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }
}

/// Normalized autocorrelation of the innovation process at an integer lag.
///
/// Symmetric in `tau` and exactly 1 at `tau = 0`. Only integer lags are
/// defined for this process; the signature enforces that.
pub fn fgn_autocorrelation(tau: i64, hurst: HurstExponent) -> f64 {
    let h2 = 2.0 * hurst.value();
    let t = tau.unsigned_abs() as f64;
    0.5 * ((t + 1.0).powf(h2) - 2.0 * t.powf(h2) + (t - 1.0).abs().powf(h2))
}

/// Toeplitz covariance matrix of `t` consecutive innovations:
/// entry (i, j) is `sigma2 * rho(i - j)`.
pub fn fgn_covariance(t: usize, spec: &FgnSpec) -> Result<CovarianceMatrix, Error> {
    if t == 0 {
        return Err(Error::EmptyHorizon);
    }
    let rho: Vec<f64> = (0..t)
        .map(|lag| spec.sigma2() * fgn_autocorrelation(lag as i64, spec.hurst()))
        .collect();
    let m = DMatrix::from_fn(t, t, |i, j| rho[i.abs_diff(j)]);
    CovarianceMatrix::new(m)
}

/// Unpivoted Cholesky factorization into a lower-triangular factor.
///
/// On failure the offending pivot index (0-based) is reported.
pub(crate) fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>, Error> {
    let n = m.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let root = d.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / root;
        }
    }
    Ok(l)
}

/// Factors `m`, retrying once with `jitter` added to the diagonal when the
/// plain factorization fails. Returns the factor and the jitter applied, if
/// any, so callers can record it in run metadata.
pub(crate) fn factor_with_jitter(
    m: &DMatrix<f64>,
    jitter: f64,
) -> Result<(DMatrix<f64>, Option<f64>), Error> {
    match cholesky_lower(m) {
        Ok(l) => Ok((l, None)),
        Err(first) => {
            if jitter <= 0.0 {
                return Err(first);
            }
            let mut bumped = m.clone();
            for i in 0..m.nrows() {
                bumped[(i, i)] += jitter;
            }
            let l = cholesky_lower(&bumped)?;
            Ok((l, Some(jitter)))
        }
    }
}

/// Reusable joint sampler: factors the covariance once, then each draw is a
/// matrix-vector product against fresh standard normals.
#[derive(Debug, Clone)]
pub struct FgnSampler {
    factor: Option<DMatrix<f64>>, // None when sigma2 = 0
    jitter: Option<f64>,
    horizon: usize,
}

impl FgnSampler {
    pub fn new(t: usize, spec: &FgnSpec) -> Result<Self, Error> {
        if t == 0 {
            return Err(Error::EmptyHorizon);
        }
        if spec.sigma2() == 0.0 {
            return Ok(Self {
                factor: None,
                jitter: None,
                horizon: t,
            });
        }
        let cov = fgn_covariance(t, spec)?;
        // The covariance is PSD in exact arithmetic; jitter only papers over
        // round-off, and its magnitude is recorded for run metadata.
        let (factor, jitter) = factor_with_jitter(cov.entries(), 1e-10 * spec.sigma2())?;
        Ok(Self {
            factor: Some(factor),
            jitter,
            horizon: t,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Diagonal jitter applied to rescue the factorization, if any.
    pub fn jitter(&self) -> Option<f64> {
        self.jitter
    }

    /// One joint draw of `horizon` innovations. Consumes exactly `horizon`
    /// standard-normal variates, in time order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.factor {
            None => vec![0.0; self.horizon],
            Some(l) => {
                let z: Vec<f64> = (0..self.horizon)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let mut u = vec![0.0; self.horizon];
                for i in 0..self.horizon {
                    let mut acc = 0.0;
                    for (j, zj) in z.iter().enumerate().take(i + 1) {
                        acc += l[(i, j)] * zj;
                    }
                    u[i] = acc;
                }
                u
            }
        }
    }
}

/// One joint draw from `N(0, fgn_covariance(t, spec))`. Deterministic given
/// the random stream.
pub fn sample_fgn<R: Rng + ?Sized>(t: usize, spec: &FgnSpec, rng: &mut R) -> Result<Vec<f64>, Error> {
    Ok(FgnSampler::new(t, spec)?.sample(rng))
}

/// Incremental one-step conditional law of the innovation process.
///
/// Maintains the best-linear-predictor coefficients and prediction variance
/// via the Levinson recursion on the Toeplitz correlation structure, which is
/// the triangular factorization of that structure built one order at a time.
/// Extending by one step costs O(t); evaluating a conditional mean is a dot
/// product against the caller's history. The coefficients depend only on `H`
/// and the history length, so one value serves any number of histories.
#[derive(Debug, Clone)]
pub struct FgnConditional {
    spec: FgnSpec,
    // coeffs[k] multiplies history[len - 1 - k]: newest sample first.
    coeffs: Vec<f64>,
    // Prediction variance in units of sigma2.
    variance_ratio: f64,
    // rho(1..=coeffs.len()) cache.
    rho: Vec<f64>,
}

impl FgnConditional {
    pub fn new(spec: FgnSpec) -> Self {
        Self {
            spec,
            coeffs: Vec::new(),
            variance_ratio: 1.0,
            rho: Vec::new(),
        }
    }

    pub fn spec(&self) -> &FgnSpec {
        &self.spec
    }

    /// Length of the history the current coefficients condition on.
    pub fn history_len(&self) -> usize {
        self.coeffs.len()
    }

    /// Conditions on one more history sample.
    pub fn extend(&mut self) {
        let n = self.coeffs.len();
        self.rho
            .push(fgn_autocorrelation((n + 1) as i64, self.spec.hurst()));
        let mut acc = self.rho[n];
        for (k, c) in self.coeffs.iter().enumerate() {
            // coeffs[k] pairs with rho(n - k): the newest history sample sits
            // at lag n from the one being predicted... lag (k + 1) from the
            // end, hence rho(n - k).
            acc -= c * self.rho[n - 1 - k];
        }
        let reflection = if self.variance_ratio > 0.0 {
            acc / self.variance_ratio
        } else {
            0.0
        };
        let prev = self.coeffs.clone();
        for (k, c) in self.coeffs.iter_mut().enumerate() {
            *c = prev[k] - reflection * prev[n - 1 - k];
        }
        self.coeffs.push(reflection);
        self.variance_ratio *= 1.0 - reflection * reflection;
    }

    /// Conditional mean of the next innovation given `history` (oldest
    /// first). The history length must match the conditioning order.
    pub fn mean(&self, history: &[f64]) -> Result<f64, Error> {
        let n = self.coeffs.len();
        if history.len() != n {
            return Err(Error::DimensionMismatch {
                what: "innovation history",
                expected: n,
                actual: history.len(),
            });
        }
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            acc += c * history[n - 1 - k];
        }
        Ok(acc)
    }

    /// Conditional variance of the next innovation (independent of the
    /// history values).
    pub fn variance(&self) -> f64 {
        self.spec.sigma2() * self.variance_ratio.max(0.0)
    }

    /// Prediction variance in units of the innovation variance. Depends only
    /// on the Hurst exponent and the conditioning order, so it can scale
    /// other variances under the same correlation structure.
    pub fn variance_ratio(&self) -> f64 {
        self.variance_ratio.max(0.0)
    }
}

/// Gaussian conditional law of the `next_index`-th innovation given the
/// first `next_index - 1`: returns `(mean, variance)`.
pub fn fgn_conditional(
    next_index: usize,
    history: &[f64],
    spec: &FgnSpec,
) -> Result<(f64, f64), Error> {
    if next_index == 0 {
        return Err(Error::EmptyHorizon);
    }
    if history.len() != next_index - 1 {
        return Err(Error::DimensionMismatch {
            what: "innovation history",
            expected: next_index - 1,
            actual: history.len(),
        });
    }
    let mut cond = FgnConditional::new(*spec);
    for _ in 0..history.len() {
        cond.extend();
    }
    Ok((cond.mean(history)?, cond.variance()))
}
