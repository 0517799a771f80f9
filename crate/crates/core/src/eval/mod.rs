//! Error metrics, reports and the experiment harness.

mod experiments;
mod pipeline;
pub mod profiles;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chain::ChainError;
use crate::estimator::EstimatorError;
use crate::netsim::NetError;
use crate::synth::SynthError;

pub use experiments::*;
pub use pipeline::{run_ideal, CorrectionEvent, PipelineConfig, PipelineTrace};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty series")]
    Empty,
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Net(#[from] NetError),
}

pub fn rmse(series: &[f64]) -> Result<f64, EvalError> {
    if series.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok((series.iter().map(|v| v * v).sum::<f64>() / series.len() as f64).sqrt())
}

pub fn mae(series: &[f64]) -> Result<f64, EvalError> {
    if series.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(series.iter().map(|v| v.abs()).sum::<f64>() / series.len() as f64)
}

pub fn mean(series: &[f64]) -> Option<f64> {
    if series.is_empty() {
        None
    } else {
        Some(series.iter().sum::<f64>() / series.len() as f64)
    }
}

/// Scalar errors over time for one scenario/axis.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub scenario: String,
    pub label: String,
    pub values: Vec<f64>,
}

impl ErrorSeries {
    pub fn new(scenario: impl Into<String>, label: impl Into<String>) -> Self {
        ErrorSeries {
            scenario: scenario.into(),
            label: label.into(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, v: f64) {
        self.values.push(v);
    }

    pub fn rmse(&self) -> Result<f64, EvalError> {
        rmse(&self.values)
    }

    pub fn mae(&self) -> Result<f64, EvalError> {
        mae(&self.values)
    }

    pub fn report(&self, config_hash: &str, seed: u64) -> Result<ScenarioReport, EvalError> {
        Ok(ScenarioReport {
            scenario: format!("{}/{}", self.scenario, self.label),
            rmse: self.rmse()?,
            mae: self.mae()?,
            n: self.values.len(),
            config_hash: config_hash.to_string(),
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
    pub config_hash: String,
    pub seed: u64,
}

/// A named scalar that is not an RMSE/MAE pair (times, ratios, counts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub scenario: String,
    pub metric: String,
    pub value: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub scenarios: Vec<ScenarioReport>,
    pub metrics: Vec<Metric>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, seed: u64, config_hash: String) -> Self {
        ExperimentReport {
            experiment: experiment.to_string(),
            seed,
            config_hash,
            scenarios: Vec::new(),
            metrics: Vec::new(),
        }
    }

    pub fn metric(&mut self, scenario: &str, metric: &str, value: f64, n: usize) {
        self.metrics.push(Metric {
            scenario: scenario.to_string(),
            metric: metric.to_string(),
            value,
            n,
        });
    }

    pub fn scenario(&self, name: &str) -> Option<&ScenarioReport> {
        self.scenarios.iter().find(|s| s.scenario == name)
    }

    pub fn get(&self, scenario: &str, metric: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.scenario == scenario && m.metric == metric)
            .map(|m| m.value)
    }

    /// `scenario,metric,value,n,seed` rows, RMSE/MAE pairs first.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,metric,value,n,seed\n");
        for s in &self.scenarios {
            out += &format!("{},rmse,{},{},{}\n", s.scenario, s.rmse, s.n, self.seed);
            out += &format!("{},mae,{},{},{}\n", s.scenario, s.mae, s.n, self.seed);
        }
        for m in &self.metrics {
            out += &format!("{},{},{},{},{}\n", m.scenario, m.metric, m.value, m.n, self.seed);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// First 16 hex digits of the SHA-256 of the config's JSON form.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    hex::encode(&digest[..8])
}
