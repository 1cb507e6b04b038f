//! Monte Carlo harness: scenario grid, per-replicate analysis with
//! per-method exclusion, and operating-characteristic aggregation.
//!
//! Everything here is sequential; the `riskdiff` crate distributes
//! replicates over threads and feeds the outcomes back in replicate order.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::analysis::{Analysis, InferOptions, Method, RiskDiffInference};
use crate::error::{Error, Result};
use crate::exact::ExactSource;
use crate::mh::mh_test;
use crate::rng::{derive_key, CounterRng};
use crate::simgen::{gen_trial, solve_coefficients, ScenarioParams, SolvedCoefficients};

/// Stream tags below a replicate key.
const DATA_STREAM: u64 = 1;
const BOOT_STREAM: u64 = 2;

pub const COVARIATES: [&str; 2] = ["X1", "X2"];
pub const PAPER_N: [usize; 5] = [30, 60, 90, 120, 150];
pub const PAPER_DELTA: [f64; 3] = [0.0, 0.15, 0.30];

/// Covariate coefficients `log 1`, `log 1.5`, `log 3`.
pub fn paper_beta() -> [f64; 3] {
    [0.0, libm::log(1.5), libm::log(3.0)]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSpec {
    pub params: ScenarioParams,
}

impl ScenarioSpec {
    pub fn new(n: usize, delta: f64, beta_cov: f64) -> Self {
        ScenarioSpec { params: ScenarioParams::new(n, delta, beta_cov) }
    }

    /// Human-readable identifier, e.g. `n30_d0.15_b0.4055`.
    pub fn id(&self) -> String {
        let p = &self.params;
        let mut id = format!("n{}_d{}_b{:.4}", p.n, p.delta, p.beta_cov);
        if p.p0 != crate::simgen::DEFAULT_P0 {
            id.push_str(&format!("_p{}", p.p0));
        }
        id
    }

    /// Stream key component derived from the exact parameter bits.
    pub fn key(&self) -> u64 {
        let p = &self.params;
        [p.delta.to_bits(), p.beta_cov.to_bits(), p.p0.to_bits(), p.alloc.to_bits()]
            .iter()
            .fold(derive_key(0, p.n as u64), |k, &c| derive_key(k, c))
    }
}

/// The 45-scenario grid: δ × β × N, in that nesting order.
pub fn paper_grid() -> Vec<ScenarioSpec> {
    let mut v = Vec::with_capacity(45);
    for delta in PAPER_DELTA {
        for beta in paper_beta() {
            for n in PAPER_N {
                v.push(ScenarioSpec::new(n, delta, beta));
            }
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRecord {
    pub method: Method,
    /// `Err` marks an excluded run and carries the reason.
    pub result: Result<RiskDiffInference>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepOutcome {
    pub replicate: u64,
    pub records: Vec<MethodRecord>,
    /// ML working-model fit flagged separation.
    pub separated: bool,
    /// ML working-model fit converged.
    pub converged: bool,
    /// Every stratum of the MH test had zero variance.
    pub mh_degenerate: bool,
}

/// Generator for replicate `r` of a scenario.
pub fn replicate_rng(base_seed: u64, spec: &ScenarioSpec, r: u64) -> CounterRng {
    CounterRng::keyed(base_seed, &[spec.key(), r])
}

/// Generates replicate `r` and applies every method to it.
#[allow(clippy::too_many_arguments)]
pub fn simulate_replicate(
    spec: &ScenarioSpec,
    coefs: &SolvedCoefficients,
    methods: &[Method],
    r: u64,
    base_seed: u64,
    alpha: f64,
    opts: &InferOptions,
    exact: &dyn ExactSource,
) -> Result<RepOutcome> {
    let root = replicate_rng(base_seed, spec, r);
    let mut data_rng = root.split(DATA_STREAM);
    let d = gen_trial(&spec.params, coefs, &mut data_rng);
    let opts = InferOptions { seed: root.split(BOOT_STREAM).key(), ..*opts };

    let mut adjusted = Analysis::new(&d, &COVARIATES, alpha, opts)?;
    let mut unadjusted = Analysis::new(&d, &[], alpha, opts)?;
    let (separated, converged) = match adjusted.ml_fit() {
        Ok(f) => (f.separation, f.converged),
        Err(_) => (false, false),
    };
    let mh_degenerate = match adjusted.strata() {
        Ok(t) => matches!(mh_test(t), Err(Error::DegenerateTable)),
        Err(_) => false,
    };
    let records = methods
        .iter()
        .map(|&m| {
            let a = if m.accepts_covariates() { &mut adjusted } else { &mut unadjusted };
            MethodRecord { method: m, result: a.run(m, exact) }
        })
        .collect();
    Ok(RepOutcome { replicate: r, records, separated, converged, mh_degenerate })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodOc {
    pub method: Method,
    pub rejection_rate: f64,
    /// NaN for methods without a point estimate.
    pub bias: f64,
    pub rmse: f64,
    /// NaN for methods without an interval.
    pub coverage: f64,
    pub n_used: usize,
    pub n_excluded: usize,
    /// Monte Carlo standard error of the rejection rate.
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatingCharacteristics {
    pub scenario_id: String,
    pub params: ScenarioParams,
    pub replicates: usize,
    pub methods: Vec<MethodOc>,
    pub separation_rate: f64,
    pub nonconvergence_rate: f64,
    pub mh_failure_rate: f64,
}

impl OperatingCharacteristics {
    pub fn method(&self, m: Method) -> Option<&MethodOc> {
        self.methods.iter().find(|o| o.method == m)
    }
}

#[derive(Debug, Clone, Copy)]
struct MethodAcc {
    method: Method,
    used: usize,
    excluded: usize,
    rejections: usize,
    est_n: usize,
    est_sum: f64,
    sq_err_sum: f64,
    ci_n: usize,
    covered: usize,
}

/// Order-dependent (hence deterministic) reduction of replicate outcomes.
#[derive(Debug, Clone)]
pub struct Aggregator {
    truth: f64,
    alpha: f64,
    accs: Vec<MethodAcc>,
    replicates: usize,
    separated: usize,
    nonconverged: usize,
    mh_degenerate: usize,
}

impl Aggregator {
    pub fn new(methods: &[Method], truth: f64, alpha: f64) -> Self {
        let accs = methods
            .iter()
            .map(|&method| MethodAcc {
                method,
                used: 0,
                excluded: 0,
                rejections: 0,
                est_n: 0,
                est_sum: 0.0,
                sq_err_sum: 0.0,
                ci_n: 0,
                covered: 0,
            })
            .collect();
        Aggregator { truth, alpha, accs, replicates: 0, separated: 0, nonconverged: 0, mh_degenerate: 0 }
    }

    pub fn push(&mut self, o: &RepOutcome) {
        self.replicates += 1;
        self.separated += o.separated as usize;
        self.nonconverged += !o.converged as usize;
        self.mh_degenerate += o.mh_degenerate as usize;
        for rec in &o.records {
            let Some(acc) = self.accs.iter_mut().find(|a| a.method == rec.method) else { continue };
            let Ok(inf) = &rec.result else {
                acc.excluded += 1;
                continue;
            };
            acc.used += 1;
            acc.rejections += inf.rejects(self.alpha) as usize;
            if let Some(e) = inf.estimate {
                acc.est_n += 1;
                acc.est_sum += e;
                acc.sq_err_sum += (e - self.truth) * (e - self.truth);
            }
            if let Some((lo, hi)) = inf.ci {
                acc.ci_n += 1;
                acc.covered += (lo <= self.truth && self.truth <= hi) as usize;
            }
        }
    }

    /// Summary; methods with no usable replicate get NaN rates.
    pub fn finish(&self, spec: &ScenarioSpec) -> OperatingCharacteristics {
        let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
        let methods = self
            .accs
            .iter()
            .map(|a| {
                let r = ratio(a.rejections, a.used);
                let mean = if a.est_n == 0 { f64::NAN } else { a.est_sum / a.est_n as f64 };
                MethodOc {
                    method: a.method,
                    rejection_rate: r,
                    bias: mean - self.truth,
                    rmse: if a.est_n == 0 { f64::NAN } else { libm::sqrt(a.sq_err_sum / a.est_n as f64) },
                    coverage: ratio(a.covered, a.ci_n),
                    n_used: a.used,
                    n_excluded: a.excluded,
                    mc_se: libm::sqrt(r * (1.0 - r) / a.used as f64),
                }
            })
            .collect();
        OperatingCharacteristics {
            scenario_id: spec.id(),
            params: spec.params,
            replicates: self.replicates,
            methods,
            separation_rate: ratio(self.separated, self.replicates),
            nonconvergence_rate: ratio(self.nonconverged, self.replicates),
            mh_failure_rate: ratio(self.mh_degenerate, self.replicates),
        }
    }
}

/// Aggregates outcomes in the given order; every method needs at least one
/// usable replicate.
pub fn aggregate(
    spec: &ScenarioSpec,
    methods: &[Method],
    outcomes: &[RepOutcome],
    alpha: f64,
) -> Result<OperatingCharacteristics> {
    let mut agg = Aggregator::new(methods, spec.params.delta, alpha);
    outcomes.iter().for_each(|o| agg.push(o));
    let oc = agg.finish(spec);
    if let Some(m) = oc.methods.iter().find(|m| m.n_used == 0) {
        return Err(Error::Aggregation { method: String::from(m.method.name()) });
    }
    Ok(oc)
}

/// Single-threaded scenario run.
pub fn run_scenario(
    spec: &ScenarioSpec,
    methods: &[Method],
    replicates: u64,
    base_seed: u64,
    alpha: f64,
    opts: &InferOptions,
    exact: &dyn ExactSource,
) -> Result<(Vec<RepOutcome>, OperatingCharacteristics)> {
    if replicates == 0 || methods.is_empty() {
        return Err(Error::Invalid("need at least one replicate and one method".into()));
    }
    let coefs = solve_coefficients(&spec.params)?;
    let outcomes: Vec<RepOutcome> = (0..replicates)
        .map(|r| simulate_replicate(spec, &coefs, methods, r, base_seed, alpha, opts, exact))
        .collect::<Result<_>>()?;
    let mut agg = Aggregator::new(methods, spec.params.delta, alpha);
    outcomes.iter().for_each(|o| agg.push(o));
    let oc = agg.finish(spec);
    Ok((outcomes, oc))
}
