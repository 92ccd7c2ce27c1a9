//! ARMA(m, n) models over correlated innovations: simulation, the banded
//! triangular transition matrices, and the dense transfer form.
//!
//! Conventions: states are ordered oldest-first, so both transition matrices
//! are unit lower triangular with their coefficient bands below the diagonal.
//! Initial conditions are zero (`x_l = u_l = 0` for `l <= 0`), which is
//! exactly what the matrix identity `Phi x = Psi u` encodes at small `t`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::Error;
use crate::fgn::{fgn_covariance, factor_with_jitter, CovarianceMatrix, FgnSampler, FgnSpec};

/// ARMA model: feedback coefficients, feedforward coefficients, and the
/// innovation law driving it. Both orders may be zero, in which case the
/// states equal the innovations.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmaModel {
    ar: Vec<f64>,
    ma: Vec<f64>,
    innovations: FgnSpec,
}

impl ArmaModel {
    pub fn new(ar: Vec<f64>, ma: Vec<f64>, innovations: FgnSpec) -> Result<Self, Error> {
        if ar.iter().chain(ma.iter()).any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteInput {
                what: "model coefficient",
            });
        }
        Ok(Self {
            ar,
            ma,
            innovations,
        })
    }

    pub fn ar(&self) -> &[f64] {
        &self.ar
    }

    pub fn ma(&self) -> &[f64] {
        &self.ma
    }

    pub fn innovations(&self) -> &FgnSpec {
        &self.innovations
    }

    /// Compact description used in run metadata and report grouping.
    pub fn describe(&self) -> String {
        format!(
            "ARMA({},{}) ar={:?} ma={:?} H={} sigma2={}",
            self.ar.len(),
            self.ma.len(),
            self.ar,
            self.ma,
            self.innovations.hurst().value(),
            self.innovations.sigma2(),
        )
    }

    /// One recursion step: the state following `states`, given the matching
    /// innovation history and the innovation entering at this step.
    pub(crate) fn step(&self, states: &[f64], innovations: &[f64], u_new: f64) -> f64 {
        debug_assert_eq!(states.len(), innovations.len());
        let t = states.len();
        let mut x = u_new;
        for (i, phi) in self.ar.iter().enumerate() {
            if i < t {
                x += phi * states[t - 1 - i];
            }
        }
        for (j, varphi) in self.ma.iter().enumerate() {
            if j < t {
                x += varphi * innovations[t - 1 - j];
            }
        }
        x
    }
}

/// Ordering convention for the state vector backing the matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateOrdering {
    /// `x_1` first; coefficient bands sit below the diagonal.
    OldestFirst,
}

/// The pair of unit-triangular banded transition matrices for a horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrices {
    phi: DMatrix<f64>,
    psi: DMatrix<f64>,
    ordering: StateOrdering,
}

impl TransitionMatrices {
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn ordering(&self) -> StateOrdering {
        self.ordering
    }

    pub fn horizon(&self) -> usize {
        self.phi.nrows()
    }
}

/// Builds the banded triangular matrices satisfying `Phi x = Psi u` for the
/// recursion under zero initial conditions: unit diagonals, `-ar[k-1]` on the
/// k-th sub-diagonal of `Phi` and `ma[k-1]` on the k-th sub-diagonal of `Psi`.
pub fn build_transition_matrices(model: &ArmaModel, t: usize) -> Result<TransitionMatrices, Error> {
    if t == 0 {
        return Err(Error::EmptyHorizon);
    }
    let mut phi = DMatrix::identity(t, t);
    let mut psi = DMatrix::identity(t, t);
    for i in 0..t {
        for (k, c) in model.ar().iter().enumerate() {
            if i > k {
                phi[(i, i - 1 - k)] = -c;
            }
        }
        for (k, c) in model.ma().iter().enumerate() {
            if i > k {
                psi[(i, i - 1 - k)] = *c;
            }
        }
    }
    Ok(TransitionMatrices {
        phi,
        psi,
        ordering: StateOrdering::OldestFirst,
    })
}

/// Transfer matrix `Theta = Phi^-1 Psi`, computed by a banded forward solve
/// rather than an explicit inverse. Unit lower triangular; row `i` of
/// `Theta` maps the innovations to the state at step `i + 1`.
pub fn transfer_matrix(tm: &TransitionMatrices) -> DMatrix<f64> {
    let t = tm.horizon();
    let phi = tm.phi();
    let mut theta = tm.psi().clone();
    for i in 0..t {
        // Theta[i, :] = Psi[i, :] - sum_k Phi[i, i-k] * Theta[i-k, :]
        for k in 1..=i {
            let band = phi[(i, i - k)];
            if band != 0.0 {
                for j in 0..=i {
                    let prev = theta[(i - k, j)];
                    theta[(i, j)] -= band * prev;
                }
            }
        }
    }
    theta
}

/// One simulated trajectory: states, the innovations that produced them, and
/// any diagonal jitter the innovation sampler had to apply.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub states: Vec<f64>,
    pub innovations: Vec<f64>,
    pub jitter: Option<f64>,
}

/// Simulates `t` steps of the recursion from a fresh joint innovation draw.
pub fn simulate_recursive<R: Rng + ?Sized>(
    model: &ArmaModel,
    t: usize,
    rng: &mut R,
) -> Result<LatentTrajectory, Error> {
    let sampler = FgnSampler::new(t, model.innovations())?;
    let innovations = sampler.sample(rng);
    let mut states = Vec::with_capacity(t);
    for step in 0..t {
        let x = model.step(&states, &innovations[..step], innovations[step]);
        states.push(x);
    }
    Ok(LatentTrajectory {
        states,
        innovations,
        jitter: sampler.jitter(),
    })
}

/// State covariance `Theta C_u Theta^T`, formed as `A A^T` with
/// `A = Theta L_u` so the result is symmetric by construction.
pub fn state_covariance(model: &ArmaModel, t: usize) -> Result<CovarianceMatrix, Error> {
    let tm = build_transition_matrices(model, t)?;
    let theta = transfer_matrix(&tm);
    let sigma2 = model.innovations().sigma2();
    if sigma2 == 0.0 {
        return CovarianceMatrix::new(DMatrix::zeros(t, t));
    }
    let cov_u = fgn_covariance(t, model.innovations())?;
    let (l, _jitter) = factor_with_jitter(cov_u.entries(), 1e-10 * sigma2)?;
    let a = theta * l;
    CovarianceMatrix::new(&a * a.transpose())
}
