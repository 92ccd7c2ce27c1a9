//! Run configuration: the JSON schema accepted by every subcommand, with
//! field-level validation mapped onto the core types.
//!
//! ```json
//! {
//!   "model": { "kind": "arma", "ar": [0.85], "ma": [0.8], "hurst": 0.7, "sigma2": 1.0 },
//!   "channel": { "alpha": 0.5, "beta": 1.0 },
//!   "filter": { "n_particles": 1000, "resampling": "paper" },
//!   "horizon": 100,
//!   "seed": 42
//! }
//! ```
//!
//! VAR models use `"kind": "var"` with `weights` (one n-by-n matrix per lag,
//! row-major), shared `hurst`/`sigma2`, and series `labels`.

use nalgebra::DMatrix;
use serde::Deserialize;

use sisr_core::{
    ArmaModel, FgnSpec, FilterConfig, GammaNoiseParams, HurstExponent, ObservationChannel,
    ResamplingScheme, VarModel,
};

use crate::commands::CmdError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub filter: FilterSection,
    pub horizon: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Arma {
        #[serde(default)]
        ar: Vec<f64>,
        #[serde(default)]
        ma: Vec<f64>,
        hurst: f64,
        #[serde(default = "default_sigma2")]
        sigma2: f64,
    },
    Var {
        weights: Vec<Vec<Vec<f64>>>,
        hurst: f64,
        #[serde(default = "default_sigma2")]
        sigma2: f64,
        labels: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    #[serde(default = "default_particles")]
    pub n_particles: usize,
    #[serde(default)]
    pub resampling: ResamplingName,
    #[serde(default)]
    pub resample_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingName {
    #[default]
    Paper,
    Systematic,
}

fn default_sigma2() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    0.5
}

fn default_beta() -> f64 {
    1.0
}

fn default_particles() -> usize {
    1000
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta: default_beta(),
        }
    }
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            n_particles: default_particles(),
            resampling: ResamplingName::default(),
            resample_threshold: None,
        }
    }
}

impl RunConfig {
    /// Parses and fully validates a configuration. No file is touched after
    /// this returns an error.
    pub fn from_json(text: &str) -> Result<Self, CmdError> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| CmdError::Config(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CmdError> {
        if self.horizon == 0 {
            return Err(CmdError::Config("horizon: must be at least 1".into()));
        }
        self.channel()?;
        match &self.model {
            ModelConfig::Arma { .. } => {
                self.arma_model()?;
            }
            ModelConfig::Var { .. } => {
                self.var_model()?;
            }
        }
        // Exercises the particle-count and threshold checks.
        self.filter_config(self.seed)?;
        Ok(())
    }

    pub fn channel(&self) -> Result<ObservationChannel, CmdError> {
        let noise = GammaNoiseParams::new(self.channel.alpha, self.channel.beta)
            .map_err(|e| CmdError::Config(format!("channel: {e}")))?;
        Ok(ObservationChannel::log_volatility(noise))
    }

    pub fn filter_config(&self, seed: u64) -> Result<FilterConfig, CmdError> {
        let config = FilterConfig {
            n_particles: self.filter.n_particles,
            resampling: match self.filter.resampling {
                ResamplingName::Paper => ResamplingScheme::PaperScheme,
                ResamplingName::Systematic => ResamplingScheme::Systematic,
            },
            seed,
            channel: self.channel()?,
            resample_threshold: self.filter.resample_threshold,
        };
        config
            .validate()
            .map_err(|e| CmdError::Config(format!("filter: {e}")))?;
        Ok(config)
    }

    fn innovation_spec(&self, hurst: f64, sigma2: f64) -> Result<FgnSpec, CmdError> {
        let hurst = HurstExponent::new(hurst)
            .map_err(|e| CmdError::Config(format!("model.hurst: {e}")))?;
        FgnSpec::new(hurst, sigma2).map_err(|e| CmdError::Config(format!("model.sigma2: {e}")))
    }

    /// The ARMA model, for subcommands that require one.
    pub fn arma_model(&self) -> Result<ArmaModel, CmdError> {
        match &self.model {
            ModelConfig::Arma {
                ar,
                ma,
                hurst,
                sigma2,
            } => {
                let spec = self.innovation_spec(*hurst, *sigma2)?;
                ArmaModel::new(ar.clone(), ma.clone(), spec)
                    .map_err(|e| CmdError::Config(format!("model: {e}")))
            }
            ModelConfig::Var { .. } => Err(CmdError::Config(
                "model.kind: this subcommand needs an ARMA model; \
                 use the impute subcommand for VAR datasets"
                    .into(),
            )),
        }
    }

    /// The VAR model plus its series labels, for the imputation path.
    pub fn var_model(&self) -> Result<(VarModel, Vec<String>), CmdError> {
        match &self.model {
            ModelConfig::Var {
                weights,
                hurst,
                sigma2,
                labels,
            } => {
                let n = labels.len();
                if n == 0 {
                    return Err(CmdError::Config(
                        "model.labels: at least one series label required".into(),
                    ));
                }
                let mut matrices = Vec::with_capacity(weights.len());
                for (lag, rows) in weights.iter().enumerate() {
                    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                        return Err(CmdError::Config(format!(
                            "model.weights[{lag}]: expected an {n}x{n} matrix"
                        )));
                    }
                    matrices.push(DMatrix::from_fn(n, n, |i, j| rows[i][j]));
                }
                let spec = self.innovation_spec(*hurst, *sigma2)?;
                let model = VarModel::new(matrices, vec![spec; n])
                    .map_err(|e| CmdError::Config(format!("model: {e}")))?;
                Ok((model, labels.clone()))
            }
            ModelConfig::Arma { .. } => Err(CmdError::Config(
                "model.kind: this subcommand needs a VAR model".into(),
            )),
        }
    }

    pub fn is_var(&self) -> bool {
        matches!(self.model, ModelConfig::Var { .. })
    }
}
