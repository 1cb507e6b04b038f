//! g-computation (standardization) and its variance estimators.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::glm::{fit_ml, hc3_covariance, DesignMatrix, FitOptions, LogisticFit, TREATMENT_COL};
use crate::numerics::{chisq1_sf, expit, norm_quantile, SymMatrix};
use crate::rng::CounterRng;
use crate::trialdata::TrialDataset;

/// Per-subject predictions under both treatments and their averages.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualPredictions {
    pub p1: Vec<f64>,
    pub p0: Vec<f64>,
    pub pi1: f64,
    pub pi0: f64,
    pub delta: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Predictions with the treatment column forced to 1 and to 0.
pub fn standardize(fit: &LogisticFit, x: &DesignMatrix) -> CounterfactualPredictions {
    standardize_beta(&fit.beta, x)
}

pub fn standardize_beta(beta: &[f64], x: &DesignMatrix) -> CounterfactualPredictions {
    let (mut p1, mut p0) = (Vec::with_capacity(x.n()), Vec::with_capacity(x.n()));
    for i in 0..x.n() {
        let eta: f64 = x
            .row(i)
            .iter()
            .zip(beta)
            .enumerate()
            .filter(|&(j, _)| j != TREATMENT_COL)
            .map(|(_, (v, b))| v * b)
            .sum();
        p1.push(expit(eta + beta[TREATMENT_COL]));
        p0.push(expit(eta));
    }
    let (pi1, pi0) = (mean(&p1), mean(&p0));
    CounterfactualPredictions { p1, p0, pi1, pi0, delta: pi1 - pi0 }
}

/// `∇_β δ̂ = (1/N) Σ [p_i(1)(1−p_i(1)) x_i(1) − p_i(0)(1−p_i(0)) x_i(0)]`.
pub fn gradient(x: &DesignMatrix, cf: &CounterfactualPredictions) -> Vec<f64> {
    let p = x.p();
    let mut g = vec![0.0; p];
    for i in 0..x.n() {
        let row = x.row(i);
        let w1 = cf.p1[i] * (1.0 - cf.p1[i]);
        let w0 = cf.p0[i] * (1.0 - cf.p0[i]);
        for j in 0..p {
            g[j] += if j == TREATMENT_COL { w1 } else { (w1 - w0) * row[j] };
        }
    }
    let n = x.n() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    g
}

fn delta_method(cov: &SymMatrix, g: &[f64]) -> Result<f64> {
    let v = cov.quad_form(g);
    if !v.is_finite() {
        return Err(Error::NumericalDegeneracy("non-finite delta-method variance"));
    }
    Ok(v.max(0.0))
}

/// Delta-method variance with the model-based covariance.
pub fn var_ge(fit: &LogisticFit, x: &DesignMatrix, cf: &CounterfactualPredictions) -> Result<f64> {
    delta_method(&fit.cov_model, &gradient(x, cf))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiuVariance {
    /// `gᵀ V_HC3 g`.
    pub sandwich: f64,
    /// Sample variance of `p_i(1) − p_i(0)` divided by `N`.
    pub covariate: f64,
}

impl LiuVariance {
    pub fn total(&self) -> f64 {
        self.sandwich + self.covariate
    }
}

pub fn var_liu_parts(
    fit: &LogisticFit,
    x: &DesignMatrix,
    y: &[u8],
    cf: &CounterfactualPredictions,
) -> Result<LiuVariance> {
    let hc3 = hc3_covariance(x, y, fit)?;
    let sandwich = delta_method(&hc3, &gradient(x, cf))?;
    let n = x.n() as f64;
    // Shifted by the first difference so that constant differences give
    // exactly zero.
    let d0 = cf.p1[0] - cf.p0[0];
    let (mut s, mut ss) = (0.0, 0.0);
    for (a, b) in cf.p1.iter().zip(&cf.p0) {
        let e = a - b - d0;
        s += e;
        ss += e * e;
    }
    let covariate = ((ss - s * s / n) / (n - 1.0)).max(0.0) / n;
    Ok(LiuVariance { sandwich, covariate })
}

/// HC3 delta-method variance plus the covariate-sampling term.
pub fn var_liu(fit: &LogisticFit, x: &DesignMatrix, y: &[u8], cf: &CounterfactualPredictions) -> Result<f64> {
    var_liu_parts(fit, x, y, cf).map(|v| v.total())
}

/// Sample covariance (n − 1 denominator) over the index set `idx`.
fn cov_over(idx: &[usize], a: impl Fn(usize) -> f64, b: impl Fn(usize) -> f64) -> f64 {
    let m = idx.len() as f64;
    let ma = idx.iter().map(|&i| a(i)).sum::<f64>() / m;
    let mb = idx.iter().map(|&i| b(i)).sum::<f64>() / m;
    idx.iter().map(|&i| (a(i) - ma) * (b(i) - mb)).sum::<f64>() / (m - 1.0)
}

/// Plug-in unconditional variance built from within-arm residual and
/// prediction moments.
pub fn var_ye(y: &[u8], arm: &[u8], cf: &CounterfactualPredictions) -> Result<f64> {
    let n = y.len();
    let all: Vec<usize> = (0..n).collect();
    let s1: Vec<usize> = all.iter().copied().filter(|&i| arm[i] == 1).collect();
    let s0: Vec<usize> = all.iter().copied().filter(|&i| arm[i] == 0).collect();
    if s1.len() < 2 || s0.len() < 2 {
        return Err(Error::InsufficientData("each arm needs at least two subjects"));
    }
    let yv = |i: usize| y[i] as f64;
    let p1 = |i: usize| cf.p1[i];
    let p0 = |i: usize| cf.p0[i];
    let nf = n as f64;
    let arm_var = |s: &[usize], p: &dyn Fn(usize) -> f64| {
        let rho = s.len() as f64 / nf;
        cov_over(s, |i| yv(i) - p(i), |i| yv(i) - p(i)) / rho + 2.0 * cov_over(s, yv, p)
            - cov_over(&all, p, p)
    };
    let v1 = arm_var(&s1, &p1);
    let v0 = arm_var(&s0, &p0);
    let c = cov_over(&s1, yv, p0) + cov_over(&s0, yv, p1) - cov_over(&all, p1, p0);
    let var = (v1 + v0 - 2.0 * c) / nf;
    if !var.is_finite() {
        return Err(Error::NumericalDegeneracy("non-finite plug-in variance"));
    }
    // Rounding residue when every term vanishes.
    Ok(if var.abs() < 1e-15 { 0.0 } else { var })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootVariance {
    pub variance: f64,
    pub successes: usize,
    pub failures: usize,
}

/// Bootstrap variance from per-replicate deltas (`None` = failed replicate),
/// taken in replicate order. Requires at least `max(B/2, 2)` successes.
pub fn boot_summary(deltas: &[Option<f64>]) -> Result<BootVariance> {
    let b = deltas.len();
    let ok: Vec<f64> = deltas.iter().flatten().copied().collect();
    let required = (b / 2).max(2);
    let failures = b - ok.len();
    if ok.len() < required {
        return Err(Error::BootstrapFailure { successes: ok.len(), failures, required });
    }
    let m = mean(&ok);
    let variance = ok.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (ok.len() - 1) as f64;
    Ok(BootVariance { variance, successes: ok.len(), failures })
}

/// Generic bootstrap driver: `replicate(b)` returns the delta of resample `b`.
pub fn var_boot_with<F: FnMut(usize) -> Option<f64>>(b: usize, replicate: F) -> Result<BootVariance> {
    if b < 2 {
        return Err(Error::Invalid("bootstrap needs B >= 2".into()));
    }
    let deltas: Vec<Option<f64>> = (0..b).map(replicate).collect();
    boot_summary(&deltas)
}

/// Delta of bootstrap resample `b`. The resample draws `N` row indices from
/// the stream keyed by `(key, b)`; `None` when it lacks an arm or an outcome
/// class, its design is rank deficient, or the ML refit does not converge.
pub fn boot_replicate(x: &DesignMatrix, y: &[u8], key: u64, b: usize, opts: &FitOptions) -> Option<f64> {
    let n = y.len();
    let mut rng = CounterRng::new(key).split(b as u64);
    let rows: Vec<usize> = (0..n).map(|_| rng.next_index(n)).collect();
    let yb: Vec<u8> = rows.iter().map(|&i| y[i]).collect();
    let events = yb.iter().filter(|&&v| v == 1).count();
    let treated = rows.iter().filter(|&&i| x.row(i)[TREATMENT_COL] == 1.0).count();
    if events == 0 || events == n || treated == 0 || treated == n {
        return None;
    }
    let xb = x.select(&rows);
    let fit = fit_ml(&xb, &yb, opts).ok()?;
    if !fit.converged {
        return None;
    }
    Some(standardize(&fit, &xb).delta)
}

/// Nonparametric bootstrap variance of the standardized delta.
pub fn var_boot(
    d: &TrialDataset,
    covariate_cols: &[&str],
    b: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<BootVariance> {
    let x = DesignMatrix::from_dataset(d, covariate_cols)?;
    var_boot_with(b, |r| boot_replicate(&x, d.y(), seed, r, opts))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZhangScore {
    pub chi2: f64,
    pub p_value: f64,
}

/// `(δ̂ − δ₀)² / (V + (δ̂ − δ₀)²/n)`, defined as 0 when numerator and
/// denominator both vanish.
pub fn zhang_score(delta_hat: f64, var_hat: f64, n: usize, delta0: f64) -> Result<ZhangScore> {
    if !(var_hat >= 0.0) || n == 0 {
        return Err(Error::Domain("score test needs var_hat >= 0 and n >= 1"));
    }
    let d = delta_hat - delta0;
    let num = d * d;
    let chi2 = if num == 0.0 { 0.0 } else { num / (var_hat + num / n as f64) };
    Ok(ZhangScore { chi2, p_value: chisq1_sf(chi2)? })
}

/// Closed-form inversion of the score test; returns the interval and whether
/// it was truncated to `[-1, 1]`.
pub fn zhang_ci(delta_hat: f64, var_hat: f64, n: usize, alpha: f64) -> Result<((f64, f64), bool)> {
    if !(var_hat >= 0.0) {
        return Err(Error::Domain("var_hat must be non-negative"));
    }
    let z = norm_quantile(1.0 - 0.5 * alpha)?;
    let c = z * z;
    let nf = n as f64;
    if c >= nf {
        return Err(Error::DegenerateInversion { critical: c, n });
    }
    let half = libm::sqrt(c * var_hat / (1.0 - c / nf));
    let (lo, hi) = (delta_hat - half, delta_hat + half);
    Ok(((lo.max(-1.0), hi.min(1.0)), lo < -1.0 || hi > 1.0))
}
