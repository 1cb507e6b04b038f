//! Simulation data-generating process: two independent Bernoulli(½)
//! covariates, 1:1 simple randomization and a logistic outcome model whose
//! intercept and treatment coefficient are solved by bisection to hit a
//! marginal control risk and a marginal risk difference.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::expit;
use crate::rng::CounterRng;
use crate::trialdata::{Covariate, TrialDataset};

pub const DEFAULT_P0: f64 = 0.20;
const BRACKET: f64 = 20.0;
const MAX_BISECTION: usize = 200;
const SOLVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    pub n: usize,
    /// Target marginal risk difference.
    pub delta: f64,
    /// Common log-odds coefficient of both covariates.
    pub beta_cov: f64,
    /// Target marginal control risk.
    pub p0: f64,
    /// Treatment probability.
    pub alloc: f64,
}

impl ScenarioParams {
    pub fn new(n: usize, delta: f64, beta_cov: f64) -> Self {
        ScenarioParams { n, delta, beta_cov, p0: DEFAULT_P0, alloc: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(Error::Invalid("p0 must lie in (0, 1)".into()));
        }
        let p1 = self.p0 + self.delta;
        if !(p1 > 0.0 && p1 < 1.0) {
            return Err(Error::Invalid("p0 + delta must lie in (0, 1)".into()));
        }
        if !self.beta_cov.is_finite() {
            return Err(Error::Invalid("beta_cov must be finite".into()));
        }
        if !(self.alloc > 0.0 && self.alloc < 1.0) {
            return Err(Error::Invalid("allocation probability must lie in (0, 1)".into()));
        }
        if self.n < 2 {
            return Err(Error::Invalid("n must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolvedCoefficients {
    pub beta0: f64,
    pub beta_a: f64,
    pub achieved_p0: f64,
    pub achieved_delta: f64,
}

/// `¼ Σ_{x1,x2} expit(β0 + βA·a + β(x1 + x2))`.
pub fn marginal_mean(beta0: f64, beta_a_times_a: f64, beta_cov: f64) -> f64 {
    let base = beta0 + beta_a_times_a;
    if beta_cov == 0.0 {
        return expit(base);
    }
    0.25 * (expit(base) + 2.0 * expit(base + beta_cov) + expit(base + 2.0 * beta_cov))
}

/// Root of the increasing function `f` on `[-20, 20]`.
fn bisect(f: impl Fn(f64) -> f64, target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-BRACKET, BRACKET);
    if !(f(lo) <= target && f(hi) >= target) {
        return Err(Error::Bracket { target });
    }
    for _ in 0..MAX_BISECTION {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let root = 0.5 * (lo + hi);
    if (f(root) - target).abs() > SOLVE_TOL {
        return Err(Error::Bracket { target });
    }
    Ok(root)
}

/// Solves the intercept for the control risk, then the treatment coefficient
/// for the treated risk `p0 + delta`.
pub fn solve_coefficients(p: &ScenarioParams) -> Result<SolvedCoefficients> {
    p.validate()?;
    let beta0 = bisect(|b| marginal_mean(b, 0.0, p.beta_cov), p.p0)?;
    let beta_a = if p.delta == 0.0 {
        0.0
    } else {
        bisect(|b| marginal_mean(beta0, b, p.beta_cov), p.p0 + p.delta)?
    };
    let achieved_p0 = marginal_mean(beta0, 0.0, p.beta_cov);
    let achieved_delta = marginal_mean(beta0, beta_a, p.beta_cov) - achieved_p0;
    Ok(SolvedCoefficients { beta0, beta_a, achieved_p0, achieved_delta })
}

/// Conditional response probabilities indexed `[a][x1][x2]`.
pub fn cell_probabilities(c: &SolvedCoefficients, beta_cov: f64) -> [[[f64; 2]; 2]; 2] {
    let mut out = [[[0.0; 2]; 2]; 2];
    for (a, plane) in out.iter_mut().enumerate() {
        for (x1, row) in plane.iter_mut().enumerate() {
            for (x2, v) in row.iter_mut().enumerate() {
                *v = expit(c.beta0 + c.beta_a * a as f64 + beta_cov * (x1 + x2) as f64);
            }
        }
    }
    out
}

/// Marginal response probability given `X1 = 0` and `X1 = 1`, averaged over
/// arm (with probability `alloc`) and the other covariate.
pub fn covariate_margins(c: &SolvedCoefficients, beta_cov: f64, alloc: f64) -> (f64, f64) {
    let cells = cell_probabilities(c, beta_cov);
    let m = |x1: usize| {
        let arm = |a: usize| 0.5 * (cells[a][x1][0] + cells[a][x1][1]);
        alloc * arm(1) + (1.0 - alloc) * arm(0)
    };
    (m(0), m(1))
}

/// Generates one trial. Per subject, in order: arm, X1, X2, outcome, each
/// from one uniform draw.
pub fn gen_trial(p: &ScenarioParams, c: &SolvedCoefficients, rng: &mut CounterRng) -> TrialDataset {
    let n = p.n;
    let (mut y, mut arm, mut x1, mut x2) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let a = rng.bernoulli(p.alloc);
        let c1 = rng.bernoulli(0.5);
        let c2 = rng.bernoulli(0.5);
        let eta = c.beta0 + c.beta_a * a as f64 + p.beta_cov * (c1 + c2) as f64;
        y.push(rng.bernoulli(expit(eta)));
        arm.push(a);
        x1.push(c1);
        x2.push(c2);
    }
    TrialDataset::new(y, arm, alloc::vec![Covariate::binary("X1", x1), Covariate::binary("X2", x2)])
        .expect("generated data are valid by construction")
}
