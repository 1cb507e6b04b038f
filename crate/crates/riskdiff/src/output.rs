//! Result formatting: the operating-characteristics CSV, the run manifest
//! and single-dataset inference records.

use serde::Serialize;

use riskdiff_core::harness::OperatingCharacteristics;
use riskdiff_core::{RiskDiffInference, TrialDataset};

pub const OC_HEADER: &str = "scenario_id,n,delta,beta_cov,method,rejection_rate,bias,rmse,coverage,n_used,n_excluded,separation_rate,nonconvergence_rate,mc_se";

/// Six decimals; NaN becomes an empty cell and negative zero prints as zero.
pub fn fmt6(x: f64) -> String {
    if x.is_nan() {
        return String::new();
    }
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

/// One CSV line (without newline) per method.
pub fn oc_rows(oc: &OperatingCharacteristics) -> Vec<String> {
    let p = &oc.params;
    oc.methods
        .iter()
        .map(|m| {
            [
                oc.scenario_id.clone(),
                p.n.to_string(),
                fmt6(p.delta),
                fmt6(p.beta_cov),
                m.method.name().to_string(),
                fmt6(m.rejection_rate),
                fmt6(m.bias),
                fmt6(m.rmse),
                fmt6(m.coverage),
                m.n_used.to_string(),
                m.n_excluded.to_string(),
                fmt6(oc.separation_rate),
                fmt6(oc.nonconvergence_rate),
                fmt6(m.mc_se),
            ]
            .join(",")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ScenarioEntry {
    pub scenario_id: String,
    pub n: usize,
    pub delta: f64,
    pub beta_cov: f64,
    pub replicates: usize,
    /// `None` when the rate is undefined.
    pub separation_rate: Option<f64>,
    pub nonconvergence_rate: Option<f64>,
    pub mh_failure_rate: Option<f64>,
    pub wall_seconds: f64,
    pub resumed: bool,
}

impl ScenarioEntry {
    pub fn new(oc: &OperatingCharacteristics, wall_seconds: f64) -> Self {
        let opt = |x: f64| if x.is_nan() { None } else { Some(x) };
        ScenarioEntry {
            scenario_id: oc.scenario_id.clone(),
            n: oc.params.n,
            delta: oc.params.delta,
            beta_cov: oc.params.beta_cov,
            replicates: oc.replicates,
            separation_rate: opt(oc.separation_rate),
            nonconvergence_rate: opt(oc.nonconvergence_rate),
            mh_failure_rate: opt(oc.mh_failure_rate),
            wall_seconds,
            resumed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config_schema_version: u32,
    /// `running`, `complete` or `partial`.
    pub status: String,
    pub error: Option<String>,
    pub config: serde_json::Value,
    pub workers: usize,
    pub started_at_unix: u64,
    pub updated_at_unix: u64,
    pub scenarios: Vec<ScenarioEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FlagsRecord {
    pub separation: bool,
    pub nonconvergence: bool,
    pub bootstrap_failures: usize,
    pub ci_truncated: bool,
    pub flic_unbounded: bool,
    pub mantel_fleiss: Option<bool>,
    pub strata_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceRecord {
    pub method: String,
    pub estimand: String,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub p_value: f64,
    pub statistic: f64,
    pub flags: FlagsRecord,
}

impl From<&RiskDiffInference> for InferenceRecord {
    fn from(r: &RiskDiffInference) -> Self {
        let f = &r.flags;
        InferenceRecord {
            method: r.method.name().into(),
            estimand: r.estimand.label().into(),
            estimate: r.estimate,
            se: r.se,
            ci_lower: r.ci.map(|c| c.0),
            ci_upper: r.ci.map(|c| c.1),
            p_value: r.p_value,
            statistic: r.statistic,
            flags: FlagsRecord {
                separation: f.separation,
                nonconvergence: f.nonconvergence,
                bootstrap_failures: f.bootstrap_failures,
                ci_truncated: f.ci_truncated,
                flic_unbounded: f.flic_unbounded,
                mantel_fleiss: f.mantel_fleiss,
                strata_skipped: f.strata_skipped,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub n: usize,
    pub n1: usize,
    pub n0: usize,
    pub responders1: usize,
    pub responders0: usize,
    pub covariates: Vec<String>,
    pub alpha: f64,
    pub results: Vec<InferenceRecord>,
}

impl AnalysisReport {
    pub fn new(d: &TrialDataset, covariates: &[&str], alpha: f64, results: &[RiskDiffInference]) -> Self {
        let (n1, n0) = d.arm_sizes();
        let (k1, k0) = d.responders();
        AnalysisReport {
            n: d.n(),
            n1,
            n0,
            responders1: k1,
            responders0: k0,
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            alpha,
            results: results.iter().map(InferenceRecord::from).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map_or(String::new(), fmt6);
        let mut s = String::from("method,estimand,estimate,se,ci_lower,ci_upper,p_value,statistic,separation,ci_truncated\n");
        for r in &self.results {
            s.push_str(
                &[
                    r.method.clone(),
                    r.estimand.clone(),
                    opt(r.estimate),
                    opt(r.se),
                    opt(r.ci_lower),
                    opt(r.ci_upper),
                    fmt6(r.p_value),
                    fmt6(r.statistic),
                    r.flags.separation.to_string(),
                    r.flags.ci_truncated.to_string(),
                ]
                .join(","),
            );
            s.push('\n');
        }
        s
    }
}
