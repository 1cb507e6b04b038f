//! Method dispatch: one entry point producing a tagged inference record for
//! each of the ten procedures.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::exact::{DirectExact, ExactSource, Ordering, DEFAULT_GRID};
use crate::gcomp::{
    boot_replicate, standardize, var_boot_with, var_ge, var_liu, var_ye, zhang_ci, zhang_score,
    CounterfactualPredictions,
};
use crate::glm::{fit_firth_flic, fit_ml, DesignMatrix, FitOptions, LogisticFit};
use crate::mh::{mantel_fleiss, mh_rd, mh_test, MhVariance};
use crate::numerics::wald;
use crate::trialdata::{stratify, StratumTable, TrialDataset};

/// Target of inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimand {
    /// Marginal treatment effect.
    Mte,
    /// Conditional treatment effect.
    Cte,
    /// Conditional population average treatment effect.
    Cpate,
}

impl Estimand {
    pub fn label(self) -> &'static str {
        match self {
            Estimand::Mte => "MTE",
            Estimand::Cte => "CTE",
            Estimand::Cpate => "CPATE",
        }
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Suissa,
    MhTest,
    MhSato,
    MhMgr,
    Ge,
    Liu,
    Ye,
    Boot,
    Zhang,
    Firth,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Suissa,
        Method::MhTest,
        Method::MhSato,
        Method::MhMgr,
        Method::Ge,
        Method::Liu,
        Method::Ye,
        Method::Boot,
        Method::Zhang,
        Method::Firth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Suissa => "suissa",
            Method::MhTest => "mh-test",
            Method::MhSato => "mh-sato",
            Method::MhMgr => "mh-mgr",
            Method::Ge => "ge",
            Method::Liu => "liu",
            Method::Ye => "ye",
            Method::Boot => "boot",
            Method::Zhang => "zhang",
            Method::Firth => "firth",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn estimand(self) -> Estimand {
        match self {
            Method::MhTest => Estimand::Cte,
            Method::MhSato | Method::Ge | Method::Firth => Estimand::Cpate,
            _ => Estimand::Mte,
        }
    }

    pub fn accepts_covariates(self) -> bool {
        self != Method::Suissa
    }

    /// Uses the stratified 2×2 tables.
    pub fn is_stratified(self) -> bool {
        matches!(self, Method::MhTest | Method::MhSato | Method::MhMgr)
    }

    /// Uses the maximum-likelihood working model.
    pub fn uses_ml_fit(self) -> bool {
        matches!(self, Method::Ge | Method::Liu | Method::Ye | Method::Boot | Method::Zhang)
    }

    /// Produces a point estimate of the risk difference.
    pub fn has_estimate(self) -> bool {
        self != Method::MhTest
    }

    /// Produces a confidence interval.
    pub fn has_ci(self) -> bool {
        !matches!(self, Method::MhTest | Method::Suissa)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::from_name(s).ok_or_else(|| Error::Invalid(alloc::format!("unknown method \"{s}\"")))
    }
}

/// Variance plugged into the score test and its interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ZhangVariance {
    #[default]
    Ye,
    Ge,
    Liu,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferOptions {
    pub boot_b: usize,
    /// Key of the bootstrap stream.
    pub seed: u64,
    pub exact_grid: usize,
    pub exact_ordering: Ordering,
    pub zhang_variance: ZhangVariance,
    pub fit: FitOptions,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            boot_b: 1000,
            seed: 0,
            exact_grid: DEFAULT_GRID,
            exact_ordering: Ordering::AbsZ,
            zhang_variance: ZhangVariance::Ye,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InferenceFlags {
    /// Separation detected in the ML working-model fit.
    pub separation: bool,
    pub nonconvergence: bool,
    pub bootstrap_failures: usize,
    /// Confidence interval was clipped to `[-1, 1]`.
    pub ci_truncated: bool,
    pub flic_unbounded: bool,
    /// Mantel–Fleiss adequacy (MH test only).
    pub mantel_fleiss: Option<bool>,
    pub strata_skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskDiffInference {
    pub method: Method,
    pub estimand: Estimand,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub p_value: f64,
    /// Test statistic: Wald z, signed pooled Z (exact test) or χ² (MH test
    /// and score test).
    pub statistic: f64,
    pub flags: InferenceFlags,
}

impl RiskDiffInference {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

struct Model {
    fit: LogisticFit,
    cf: CounterfactualPredictions,
}

fn fit_model(x: &DesignMatrix, y: &[u8], opts: &FitOptions, firth: bool) -> Result<Model> {
    let fit = if firth { fit_firth_flic(x, y, opts)? } else { fit_ml(x, y, opts)? };
    let cf = standardize(&fit, x);
    Ok(Model { fit, cf })
}

/// Analysis of one dataset with shared intermediate results: the design,
/// the ML and penalized fits and the stratified tables are computed once and
/// reused by every method run against it.
pub struct Analysis<'a> {
    data: &'a TrialDataset,
    cols: &'a [&'a str],
    alpha: f64,
    opts: InferOptions,
    design: Option<Result<DesignMatrix>>,
    ml: Option<Result<Model>>,
    firth: Option<Result<Model>>,
    strata: Option<Result<StratumTable>>,
}

impl<'a> Analysis<'a> {
    pub fn new(data: &'a TrialDataset, cols: &'a [&'a str], alpha: f64, opts: InferOptions) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain("alpha must lie in (0, 1)"));
        }
        Ok(Analysis { data, cols, alpha, opts, design: None, ml: None, firth: None, strata: None })
    }

    fn ensure_design(&mut self) {
        if self.design.is_none() {
            let x = DesignMatrix::from_dataset(self.data, self.cols).and_then(|x| x.check_rank().map(|_| x));
            self.design = Some(x);
        }
    }

    fn ensure_model(&mut self, firth: bool) {
        self.ensure_design();
        let slot_empty = if firth { self.firth.is_none() } else { self.ml.is_none() };
        if slot_empty {
            let m = match &self.design {
                Some(Ok(x)) => fit_model(x, self.data.y(), &self.opts.fit, firth),
                Some(Err(e)) => Err(e.clone()),
                None => unreachable!(),
            };
            if firth {
                self.firth = Some(m);
            } else {
                self.ml = Some(m);
            }
        }
    }

    fn model(&self, firth: bool) -> Result<(&DesignMatrix, &Model)> {
        let slot = if firth { &self.firth } else { &self.ml };
        match (&self.design, slot) {
            (Some(Ok(x)), Some(Ok(m))) => Ok((x, m)),
            (Some(Err(e)), _) | (_, Some(Err(e))) => Err(e.clone()),
            _ => unreachable!(),
        }
    }

    /// The ML working-model fit, converged or not.
    pub fn ml_fit(&mut self) -> Result<&LogisticFit> {
        self.ensure_model(false);
        self.model(false).map(|(_, m)| &m.fit)
    }

    pub fn strata(&mut self) -> Result<&StratumTable> {
        if self.strata.is_none() {
            self.strata = Some(stratify(self.data, self.cols));
        }
        self.strata.as_ref().unwrap().as_ref().map_err(Clone::clone)
    }

    pub fn run(&mut self, method: Method, exact: &dyn ExactSource) -> Result<RiskDiffInference> {
        let mut flags = InferenceFlags::default();
        let record = |estimate, var: f64, w: crate::numerics::Wald, flags| RiskDiffInference {
            method,
            estimand: method.estimand(),
            estimate: Some(estimate),
            se: Some(libm::sqrt(var)),
            ci: Some(w.ci),
            p_value: w.p_value,
            statistic: if w.se > 0.0 { estimate / w.se } else { 0.0 },
            flags,
        };
        match method {
            Method::Suissa => {
                if !self.cols.is_empty() {
                    return Err(Error::Invalid("method suissa accepts no covariates".into()));
                }
                let (n1, n0) = self.data.arm_sizes();
                if n1 == 0 || n0 == 0 {
                    return Err(Error::InsufficientData("both arms must be non-empty"));
                }
                let (k1, k0) = self.data.responders();
                let r = exact.ss_test(k1 as u64, n1 as u64, k0 as u64, n0 as u64)?;
                Ok(RiskDiffInference {
                    method,
                    estimand: method.estimand(),
                    estimate: Some(k1 as f64 / n1 as f64 - k0 as f64 / n0 as f64),
                    se: None,
                    ci: None,
                    p_value: r.p_value,
                    statistic: r.z_obs,
                    flags,
                })
            }
            Method::MhTest => {
                let t = self.strata()?;
                let mf = mantel_fleiss(t);
                let r = mh_test(t)?;
                flags.mantel_fleiss = Some(mf.satisfied);
                flags.strata_skipped = r.strata_skipped;
                Ok(RiskDiffInference {
                    method,
                    estimand: method.estimand(),
                    estimate: None,
                    se: None,
                    ci: None,
                    p_value: r.p_value,
                    statistic: r.chi2,
                    flags,
                })
            }
            Method::MhSato | Method::MhMgr => {
                let kind = if method == Method::MhSato { MhVariance::Sato } else { MhVariance::ModifiedGr };
                let alpha = self.alpha;
                let r = mh_rd(self.strata()?, kind, alpha)?;
                let w = wald(r.estimate, r.variance, alpha)?;
                flags.ci_truncated = w.truncated;
                Ok(record(r.estimate, r.variance, w, flags))
            }
            Method::Ge | Method::Liu | Method::Ye | Method::Boot | Method::Zhang | Method::Firth => {
                let firth = method == Method::Firth;
                self.ensure_model(false);
                if firth {
                    self.ensure_model(true);
                }
                let (x, ml) = self.model(false)?;
                flags.separation = ml.fit.separation;
                let (x, m) = if firth { self.model(true)? } else { (x, ml) };
                if !m.fit.converged {
                    return Err(Error::NonConvergence);
                }
                flags.flic_unbounded = m.fit.flic_unbounded;
                let y = self.data.y();
                let delta = m.cf.delta;
                let var = match method {
                    Method::Ge | Method::Firth => var_ge(&m.fit, x, &m.cf)?,
                    Method::Liu => var_liu(&m.fit, x, y, &m.cf)?,
                    Method::Ye => var_ye(y, self.data.arm(), &m.cf)?,
                    Method::Boot => {
                        let b = var_boot_with(self.opts.boot_b, |r| {
                            boot_replicate(x, y, self.opts.seed, r, &self.opts.fit)
                        })?;
                        flags.bootstrap_failures = b.failures;
                        b.variance
                    }
                    Method::Zhang => match self.opts.zhang_variance {
                        ZhangVariance::Ye => var_ye(y, self.data.arm(), &m.cf)?,
                        ZhangVariance::Ge => var_ge(&m.fit, x, &m.cf)?,
                        ZhangVariance::Liu => var_liu(&m.fit, x, y, &m.cf)?,
                    },
                    _ => unreachable!(),
                };
                if method == Method::Zhang {
                    let n = self.data.n();
                    let s = zhang_score(delta, var, n, 0.0)?;
                    let (ci, truncated) = zhang_ci(delta, var, n, self.alpha)?;
                    flags.ci_truncated = truncated;
                    return Ok(RiskDiffInference {
                        method,
                        estimand: method.estimand(),
                        estimate: Some(delta),
                        se: Some(libm::sqrt(var)),
                        ci: Some(ci),
                        p_value: s.p_value,
                        statistic: s.chi2,
                        flags,
                    });
                }
                let w = wald(delta, var, self.alpha)?;
                flags.ci_truncated = w.truncated;
                Ok(record(delta, var, w, flags))
            }
        }
    }
}

/// Runs one method on a dataset.
pub fn infer(
    d: &TrialDataset,
    covariate_cols: &[&str],
    method: Method,
    alpha: f64,
    opts: &InferOptions,
) -> Result<RiskDiffInference> {
    let exact = DirectExact { grid: opts.exact_grid, ordering: opts.exact_ordering };
    Analysis::new(d, covariate_cols, alpha, *opts)?.run(method, &exact)
}

/// Human-readable list of method names.
pub fn method_names() -> String {
    let mut s = String::new();
    for (i, m) in Method::ALL.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        s.push_str(m.name());
    }
    s
}
