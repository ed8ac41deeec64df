//! Experiment reports: named metrics with uncertainties and pass rules.

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Pass rule attached to a metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Threshold {
    Below { value: f64 },
    Above { value: f64 },
    Within { lower: f64, upper: f64 },
    /// Set by a pass condition that is not a simple comparison.
    Flag,
}

impl Threshold {
    fn check(&self, estimate: f64) -> bool {
        match *self {
            Threshold::Below { value } => estimate < value,
            Threshold::Above { value } => estimate > value,
            Threshold::Within { lower, upper } => estimate >= lower && estimate <= upper,
            Threshold::Flag => estimate != 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub estimate: f64,
    pub uncertainty: Option<f64>,
    pub threshold: Option<Threshold>,
    /// `None` for metrics that are reported without a pass rule.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub parameters: serde_json::Value,
    pub metrics: Vec<Metric>,
    pub notes: Vec<String>,
    pub pass: bool,
}

impl Report {
    pub fn new<P: Serialize>(experiment: &str, seed: u64, parameters: &P) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            seed,
            parameters: serde_json::to_value(parameters)?,
            metrics: Vec::new(),
            notes: Vec::new(),
            pass: true,
        })
    }

    /// Adds a gating metric; a NaN estimate never passes.
    pub fn gate(&mut self, name: &str, estimate: f64, uncertainty: Option<f64>, threshold: Threshold) {
        let pass = !estimate.is_nan() && threshold.check(estimate);
        self.pass &= pass;
        self.metrics.push(Metric {
            name: name.to_string(),
            estimate,
            uncertainty,
            threshold: Some(threshold),
            pass: Some(pass),
        });
    }

    /// Adds a boolean gating condition.
    pub fn gate_flag(&mut self, name: &str, ok: bool) {
        self.gate(name, if ok { 1.0 } else { 0.0 }, None, Threshold::Flag);
    }

    pub fn info(&mut self, name: &str, estimate: f64, uncertainty: Option<f64>) {
        self.metrics.push(Metric {
            name: name.to_string(),
            estimate,
            uncertainty,
            threshold: None,
            pass: None,
        });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    /// One line per gating metric, for console summaries.
    pub fn summary_lines(&self) -> Vec<String> {
        self.metrics
            .iter()
            .filter_map(|m| {
                m.pass.map(|p| {
                    format!(
                        "{} {}/{}: estimate {:.6e}{}{}",
                        if p { "PASS" } else { "FAIL" },
                        self.experiment,
                        m.name,
                        m.estimate,
                        m.uncertainty.map(|u| format!(" +- {u:.3e}")).unwrap_or_default(),
                        match m.threshold {
                            Some(Threshold::Below { value }) => format!(", needs < {value:.6e}"),
                            Some(Threshold::Above { value }) => format!(", needs > {value:.6e}"),
                            Some(Threshold::Within { lower, upper }) => {
                                format!(", needs in [{lower:.6e}, {upper:.6e}]")
                            }
                            Some(Threshold::Flag) | None => String::new(),
                        }
                    )
                })
            })
            .collect()
    }
}

/// Several reports bundled together; passes when every report passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedReport {
    pub schema_version: u32,
    pub reports: Vec<Report>,
    pub pass: bool,
}

pub fn merge(reports: Vec<Report>) -> Result<MergedReport> {
    if reports.is_empty() {
        bail!("nothing to merge");
    }
    for r in &reports {
        if r.schema_version != SCHEMA_VERSION {
            bail!(
                "report {} has schema version {}, expected {SCHEMA_VERSION}",
                r.experiment,
                r.schema_version
            );
        }
    }
    let pass = reports.iter().all(|r| r.pass);
    Ok(MergedReport {
        schema_version: SCHEMA_VERSION,
        reports,
        pass,
    })
}
