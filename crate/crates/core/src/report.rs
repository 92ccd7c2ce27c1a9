//! Filter run reports: per-step traces plus run metadata, with fixed CSV and
//! JSON renderings.
//!
//! CSV column order is fixed. With truth available the header is
//! `t,estimate,truth,rmse,ess,resampled`; without it, `t,estimate,ess,resampled`.
//! Floats render with Rust's shortest round-trip formatting, so identical
//! runs produce identical bytes.

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Metadata echoed into the JSON sidecar of every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub model: String,
    pub alpha: f64,
    pub beta: f64,
    pub n_particles: usize,
    pub resampling: String,
    pub seed: u64,
    pub horizon: usize,
    /// Diagonal jitter the innovation sampler applied, when any.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub jitter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fitness: Option<FitnessMetadata>,
}

/// Fitness diagnostics attached on request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessMetadata {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Per-step output of a filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub estimates: Vec<f64>,
    pub truth: Option<Vec<f64>>,
    pub rmse_trace: Option<Vec<f64>>,
    pub ess_trace: Vec<f64>,
    pub resample_counts: Vec<usize>,
    pub metadata: RunMetadata,
}

impl FilterReport {
    /// RMSE over the whole run, when truth was available.
    pub fn final_rmse(&self) -> Option<f64> {
        self.rmse_trace.as_ref().and_then(|t| t.last().copied())
    }

    pub fn mean_ess(&self) -> f64 {
        self.ess_trace.iter().sum::<f64>() / self.ess_trace.len() as f64
    }

    pub fn total_resampled(&self) -> usize {
        self.resample_counts.iter().sum()
    }

    /// Renders the per-step table. Column order is part of the format.
    pub fn csv_string(&self) -> String {
        let mut out = String::new();
        if self.truth.is_some() {
            out.push_str("t,estimate,truth,rmse,ess,resampled\n");
        } else {
            out.push_str("t,estimate,ess,resampled\n");
        }
        for i in 0..self.estimates.len() {
            let t = i + 1;
            match (&self.truth, &self.rmse_trace) {
                (Some(truth), Some(rmse)) => {
                    out.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        t,
                        self.estimates[i],
                        truth[i],
                        rmse[i],
                        self.ess_trace[i],
                        self.resample_counts[i]
                    ));
                }
                _ => {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        t, self.estimates[i], self.ess_trace[i], self.resample_counts[i]
                    ));
                }
            }
        }
        out
    }

    /// JSON sidecar with the run metadata.
    pub fn metadata_json(&self) -> String {
        serde_json::to_string_pretty(&self.metadata).expect("metadata serializes")
    }
}

/// Summary of a report file, as consumed by the evaluation command.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub horizon: usize,
    pub final_rmse: Option<f64>,
    pub mean_ess: f64,
    pub total_resampled: usize,
    pub has_truth: bool,
}

impl ReportSummary {
    /// Parses a report CSV produced by [`FilterReport::csv_string`].
    /// Malformed content is reported with its 1-based line number.
    pub fn parse_csv(text: &str) -> Result<Self, Error> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::DataFormat {
            line: 1,
            message: "empty report".into(),
        })?;
        let has_truth = match header.trim() {
            "t,estimate,truth,rmse,ess,resampled" => true,
            "t,estimate,ess,resampled" => false,
            other => {
                return Err(Error::DataFormat {
                    line: 1,
                    message: format!("unrecognized report header `{other}`"),
                })
            }
        };
        let expected_fields = if has_truth { 6 } else { 4 };
        let mut rows = 0usize;
        let mut last_rmse = None;
        let mut ess_sum = 0.0;
        let mut resampled = 0usize;
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != expected_fields {
                return Err(Error::DataFormat {
                    line: lineno,
                    message: format!(
                        "expected {expected_fields} fields, found {}",
                        fields.len()
                    ),
                });
            }
            let parse = |s: &str, what: &str| -> Result<f64, Error> {
                s.trim().parse::<f64>().map_err(|_| Error::DataFormat {
                    line: lineno,
                    message: format!("invalid {what} `{s}`"),
                })
            };
            parse(fields[0], "step")?;
            parse(fields[1], "estimate")?;
            if has_truth {
                parse(fields[2], "truth")?;
                last_rmse = Some(parse(fields[3], "rmse")?);
                ess_sum += parse(fields[4], "ess")?;
                resampled += parse(fields[5], "resampled")? as usize;
            } else {
                ess_sum += parse(fields[2], "ess")?;
                resampled += parse(fields[3], "resampled")? as usize;
            }
            rows += 1;
        }
        if rows == 0 {
            return Err(Error::DataFormat {
                line: 1,
                message: "report has no data rows".into(),
            });
        }
        Ok(Self {
            horizon: rows,
            final_rmse: last_rmse,
            mean_ess: ess_sum / rows as f64,
            total_resampled: resampled,
            has_truth,
        })
    }
}
