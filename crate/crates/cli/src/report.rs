//! JSON run report. Field names and order are part of the public contract.

use cfdist::estimators::BaselineEstimate;
use cfdist::ReportDiagnostics;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub subcommand: String,
    pub input: String,
    pub design: Design,
    pub kernel: String,
    pub bandwidth: BandwidthReport,
    pub mc_points: usize,
    pub seed: u64,
    pub bootstrap: usize,
    pub alpha: f64,
    pub method: String,
    pub estimate: f64,
    pub ci: Interval,
    pub mc_stderr: f64,
    pub diagnostics: ReportDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<SiteReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nuisance: Option<NuisanceReport>,
    pub baselines: Vec<BaselineEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Design {
    pub n: usize,
    pub outcome_dim: usize,
    pub n_treated: usize,
    pub n_control: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_sites: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariate_dim: Option<usize>,
    /// Design probability used by Horvitz-Thompson.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub treat_prob: Option<f64>,
    /// `given` or `empirical`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub treat_prob_source: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandwidthReport {
    pub treated: f64,
    pub control: f64,
    /// `given`, `silverman`, or `mixed` when only one arm was given.
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteReport {
    pub label: String,
    pub n: usize,
    pub estimate: f64,
    pub mc_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuisanceReport {
    pub propensity: String,
    pub outcome: String,
    pub folds: usize,
    pub refit: bool,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
