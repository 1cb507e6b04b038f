//! Logistic working model: ML by IRLS, Firth + FLIC penalized fitting, HC3
//! covariance and separation diagnostics.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::{expit, log_expit, logit, Cholesky, SymMatrix};
use crate::trialdata::{CovariateKind, TrialDataset};

/// Column index of the treatment indicator.
pub const TREATMENT_COL: usize = 1;

/// Fitted-probability margin used by [`detect_separation`].
pub const SEPARATION_PROB_MARGIN: f64 = 1e-7;
/// Coefficient magnitude used by [`detect_separation`].
pub const SEPARATION_MAX_COEF: f64 = 15.0;

/// Row-major design: intercept, treatment, then covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n: usize,
    p: usize,
    data: Vec<f64>,
    names: Vec<String>,
}

impl DesignMatrix {
    /// Builds from raw rows. The first column must be all ones.
    pub fn from_rows(rows: &[Vec<f64>], names: Vec<String>) -> Result<Self> {
        let n = rows.len();
        let p = names.len();
        if p < 2 {
            return Err(Error::Design("design needs intercept and treatment columns".into()));
        }
        let mut data = Vec::with_capacity(n * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::Design(format!("row {i} has {} columns, expected {p}", r.len())));
            }
            if r[0] != 1.0 {
                return Err(Error::Design("first column must be the intercept".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(DesignMatrix { n, p, data, names })
    }

    /// Intercept, treatment and reference-coded covariates. Categorical
    /// columns are coded against their lowest level.
    pub fn from_dataset(d: &TrialDataset, covariate_cols: &[&str]) -> Result<Self> {
        let mut names = vec!["(Intercept)".to_string(), "arm".to_string()];
        // (column values, level to compare against; None for numeric use)
        let mut columns: Vec<(&[f64], Option<f64>)> = Vec::new();
        for name in covariate_cols {
            let c = d.covariate(name)?;
            match &c.kind {
                CovariateKind::Binary | CovariateKind::Real => {
                    names.push(c.name.clone());
                    columns.push((&c.values, None));
                }
                CovariateKind::Categorical { levels } => {
                    for &level in levels.iter().skip(1) {
                        names.push(format!("{}={level}", c.name));
                        columns.push((&c.values, Some(level as f64)));
                    }
                }
            }
        }
        let (n, p) = (d.n(), names.len());
        let mut data = Vec::with_capacity(n * p);
        for i in 0..n {
            data.push(1.0);
            data.push(d.arm()[i] as f64);
            for (vals, level) in &columns {
                data.push(match level {
                    None => vals[i],
                    Some(l) => (vals[i] == *l) as u8 as f64,
                });
            }
        }
        Ok(DesignMatrix { n, p, data, names })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }

    /// Rows at `rows`, repeats allowed.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.p);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        DesignMatrix { n: rows.len(), p: self.p, data, names: self.names.clone() }
    }

    /// Copy with the treatment column replaced by `1 - arm`.
    pub fn relabel_arms(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            let v = &mut out.data[i * self.p + TREATMENT_COL];
            *v = 1.0 - *v;
        }
        out
    }

    pub fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), beta)).collect()
    }

    /// `XᵀX` rank check with a relative pivot tolerance.
    pub fn check_rank(&self) -> Result<()> {
        if self.n <= self.p {
            return Err(Error::Design(format!("n = {} must exceed the {} design columns", self.n, self.p)));
        }
        let mut xtx = SymMatrix::zeros(self.p);
        for i in 0..self.n {
            xtx.add_outer(self.row(i), 1.0);
        }
        Cholesky::with_tolerance(&xtx, 1e-10).map(|_| ()).map_err(|e| match e {
            Error::Singular { pivot } => Error::Design(format!(
                "design is rank deficient at column \"{}\"",
                self.names[pivot]
            )),
            other => other,
        })
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Sup-norm tolerance on the (modified) score.
    pub tol: f64,
    /// Relative change tolerance on the deviance, `|Δ| / (|dev| + 0.1)`.
    pub dev_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iter: 25, tol: 1e-8, dev_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Penalty {
    None,
    FirthFlic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub beta: Vec<f64>,
    /// Inverse information at `beta`.
    pub cov_model: SymMatrix,
    pub fitted: Vec<f64>,
    pub hat: Vec<f64>,
    pub converged: bool,
    pub separation: bool,
    pub penalized: Penalty,
    pub iterations: usize,
    /// FLIC intercept problem was unbounded; stage-1 intercept retained.
    pub flic_unbounded: bool,
}

struct Working {
    score: Vec<f64>,
    info: SymMatrix,
}

fn working(x: &DesignMatrix, y: &[u8], eta: &[f64], firth_hat: Option<&[f64]>) -> Working {
    let p = x.p();
    let mut score = vec![0.0; p];
    let mut info = SymMatrix::zeros(p);
    for i in 0..x.n() {
        let pi = expit(eta[i]);
        let w = pi * (1.0 - pi);
        let mut r = y[i] as f64 - pi;
        if let Some(h) = firth_hat {
            r += h[i] * (0.5 - pi);
        }
        let row = x.row(i);
        for (s, v) in score.iter_mut().zip(row) {
            *s += r * v;
        }
        info.add_outer(row, w);
    }
    Working { score, info }
}

fn deviance(eta: &[f64], y: &[u8]) -> f64 {
    -2.0 * log_likelihood_eta(eta, y)
}

fn log_likelihood_eta(eta: &[f64], y: &[u8]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| if yi == 1 { log_expit(e) } else { log_expit(-e) })
        .sum()
}

pub fn log_likelihood(x: &DesignMatrix, y: &[u8], beta: &[f64]) -> f64 {
    log_likelihood_eta(&x.linear_predictor(beta), y)
}

fn information(x: &DesignMatrix, eta: &[f64]) -> SymMatrix {
    let mut info = SymMatrix::zeros(x.p());
    for i in 0..x.n() {
        let pi = expit(eta[i]);
        info.add_outer(x.row(i), pi * (1.0 - pi));
    }
    info
}

/// `ℓ(β) + ½ ln det I(β)`; `-inf` when the information is singular.
pub fn penalized_log_likelihood(x: &DesignMatrix, y: &[u8], beta: &[f64]) -> f64 {
    let eta = x.linear_predictor(beta);
    penalized_ll_eta(x, y, &eta)
}

fn penalized_ll_eta(x: &DesignMatrix, y: &[u8], eta: &[f64]) -> f64 {
    match Cholesky::new(&information(x, eta)) {
        Ok(c) => log_likelihood_eta(eta, y) + 0.5 * c.log_det(),
        Err(_) => f64::NEG_INFINITY,
    }
}

fn check_inputs(x: &DesignMatrix, y: &[u8]) -> Result<()> {
    if y.len() != x.n() {
        return Err(Error::Design("outcome length does not match design rows".into()));
    }
    x.check_rank()
}

fn initial_beta(x: &DesignMatrix, y: &[u8]) -> Vec<f64> {
    let n = y.len() as f64;
    let events: f64 = y.iter().map(|&v| v as f64).sum();
    let mut beta = vec![0.0; x.p()];
    beta[0] = logit((events + 0.5) / (n + 1.0)).unwrap_or(0.0);
    beta
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Assembles fitted values, covariance and leverages at `beta`.
fn finish(
    x: &DesignMatrix,
    beta: Vec<f64>,
    mut converged: bool,
    penalized: Penalty,
    iterations: usize,
) -> LogisticFit {
    let eta = x.linear_predictor(&beta);
    let fitted: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
    let info = information(x, &eta);
    let (cov_model, hat) = match Cholesky::new(&info) {
        Ok(c) => {
            let cov = c.inverse();
            let hat = (0..x.n())
                .map(|i| {
                    let w = fitted[i] * (1.0 - fitted[i]);
                    (w * cov.quad_form(x.row(i))).clamp(0.0, 1.0)
                })
                .collect();
            (cov, hat)
        }
        Err(_) => {
            converged = false;
            (SymMatrix::filled(x.p(), f64::NAN), vec![f64::NAN; x.n()])
        }
    };
    let mut fit = LogisticFit {
        beta,
        cov_model,
        fitted,
        hat,
        converged,
        separation: false,
        penalized,
        iterations,
        flic_unbounded: false,
    };
    fit.separation = detect_separation(&fit);
    fit
}

/// Maximum likelihood by IRLS (Newton with step halving on the deviance).
pub fn fit_ml(x: &DesignMatrix, y: &[u8], opts: &FitOptions) -> Result<LogisticFit> {
    check_inputs(x, y)?;
    let mut beta = initial_beta(x, y);
    let mut eta = x.linear_predictor(&beta);
    let mut dev = deviance(&eta, y);
    let mut converged = false;
    let mut iterations = 0;
    let mut cand = vec![0.0; beta.len()];
    while iterations < opts.max_iter {
        let w = working(x, y, &eta, None);
        if max_abs(&w.score) < opts.tol {
            converged = true;
            break;
        }
        let Ok(chol) = Cholesky::new(&w.info) else { break };
        let step = chol.solve(&w.score);
        let mut t = 1.0;
        let (new_eta, new_dev) = loop {
            for ((c, b), s) in cand.iter_mut().zip(&beta).zip(&step) {
                *c = b + t * s;
            }
            let e = x.linear_predictor(&cand);
            let d = deviance(&e, y);
            if d <= dev + 1e-12 * (dev.abs() + 1.0) || t < 1e-3 {
                break (e, d);
            }
            t *= 0.5;
        };
        iterations += 1;
        let change = (dev - new_dev).abs() / (new_dev.abs() + 0.1);
        beta.copy_from_slice(&cand);
        eta = new_eta;
        dev = new_dev;
        if change < opts.dev_tol {
            converged = true;
            break;
        }
    }
    if converged {
        polish(x, y, &mut beta, dev);
    }
    Ok(finish(x, beta, converged, Penalty::None, iterations))
}

/// One extra Newton step after convergence, kept if the deviance does not
/// rise. Brings the score to rounding level so that fitted means match
/// observed means to machine precision.
fn polish(x: &DesignMatrix, y: &[u8], beta: &mut [f64], dev: f64) {
    let w = working(x, y, &x.linear_predictor(beta), None);
    let Ok(chol) = Cholesky::new(&w.info) else { return };
    let step = chol.solve(&w.score);
    let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
    let d = deviance(&x.linear_predictor(&cand), y);
    if d <= dev + 1e-12 * (dev.abs() + 1.0) {
        beta.copy_from_slice(&cand);
    }
}

/// True when a fitted probability is within 1e-7 of 0 or 1, or some
/// coefficient exceeds 15 in magnitude.
pub fn detect_separation(fit: &LogisticFit) -> bool {
    fit.fitted
        .iter()
        .any(|&p| p < SEPARATION_PROB_MARGIN || p > 1.0 - SEPARATION_PROB_MARGIN)
        || fit.beta.iter().any(|b| !(b.abs() <= SEPARATION_MAX_COEF))
}

fn leverages(x: &DesignMatrix, eta: &[f64], inv: &SymMatrix) -> Vec<f64> {
    (0..x.n())
        .map(|i| {
            let pi = expit(eta[i]);
            pi * (1.0 - pi) * inv.quad_form(x.row(i))
        })
        .collect()
}

/// Stage 1 only: maximizes the Firth-penalized likelihood by modified IRLS
/// with pseudo-responses `y + h(½ − p)`.
pub fn fit_firth(x: &DesignMatrix, y: &[u8], opts: &FitOptions) -> Result<LogisticFit> {
    check_inputs(x, y)?;
    let (beta, converged, iterations) = firth_stage1(x, y, opts);
    Ok(finish(x, beta, converged, Penalty::FirthFlic, iterations))
}

fn firth_stage1(x: &DesignMatrix, y: &[u8], opts: &FitOptions) -> (Vec<f64>, bool, usize) {
    const MAX_STEP: f64 = 5.0;
    let mut beta = initial_beta(x, y);
    let mut eta = x.linear_predictor(&beta);
    let mut pll = penalized_ll_eta(x, y, &eta);
    let mut converged = false;
    let mut iterations = 0;
    let mut cand = vec![0.0; beta.len()];
    // Extra room over the ML cap: step halving on the penalized likelihood
    // is slower from separated starting points.
    let max_iter = opts.max_iter.max(1) * 2;
    while iterations < max_iter {
        let info = information(x, &eta);
        let Ok(chol) = Cholesky::new(&info) else { break };
        let hat = leverages(x, &eta, &chol.inverse());
        let w = working(x, y, &eta, Some(&hat));
        if max_abs(&w.score) < opts.tol {
            converged = true;
            break;
        }
        let mut step = chol.solve(&w.score);
        let big = max_abs(&step);
        if big > MAX_STEP {
            step.iter_mut().for_each(|s| *s *= MAX_STEP / big);
        }
        let mut t = 1.0;
        let (new_eta, new_pll) = loop {
            for ((c, b), s) in cand.iter_mut().zip(&beta).zip(&step) {
                *c = b + t * s;
            }
            let e = x.linear_predictor(&cand);
            let v = penalized_ll_eta(x, y, &e);
            if v >= pll - 1e-12 * (pll.abs() + 1.0) || t < 1e-3 {
                break (e, v);
            }
            t *= 0.5;
        };
        iterations += 1;
        let change = (new_pll - pll).abs() / (new_pll.abs() + 0.1);
        beta.copy_from_slice(&cand);
        eta = new_eta;
        pll = new_pll;
        if change < opts.dev_tol && max_abs(&step) * t < 1e-6 {
            converged = true;
            break;
        }
    }
    (beta, converged, iterations)
}

/// Re-estimates the intercept by ML with the other coefficients held as an
/// offset. Returns `None` when all outcomes are equal (unbounded problem).
fn flic_intercept(x: &DesignMatrix, y: &[u8], beta: &[f64]) -> Option<f64> {
    let n = y.len();
    let events = y.iter().filter(|&&v| v == 1).count();
    if events == 0 || events == n {
        return None;
    }
    let offsets: Vec<f64> = (0..n).map(|i| dot(x.row(i), beta) - beta[0]).collect();
    let target = events as f64;
    let f = |b: f64| target - offsets.iter().map(|o| expit(b + o)).sum::<f64>();
    let fprime = |b: f64| -offsets.iter().map(|o| {
        let p = expit(b + o);
        p * (1.0 - p)
    }).sum::<f64>();

    let start = beta[0];
    let (mut lo, mut hi) = (start - 1.0, start + 1.0);
    let mut width = 1.0;
    while f(lo) < 0.0 {
        width *= 2.0;
        lo = start - width;
    }
    width = 1.0;
    while f(hi) > 0.0 {
        width *= 2.0;
        hi = start + width;
    }
    let mut b = start.clamp(lo, hi);
    let tol = 1e-12 * n as f64;
    for _ in 0..200 {
        let fb = f(b);
        if fb.abs() < tol {
            break;
        }
        if fb > 0.0 {
            lo = b;
        } else {
            hi = b;
        }
        let d = fprime(b);
        let newton = b - fb / d;
        b = if d < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 {
            break;
        }
    }
    Some(b)
}

/// Firth stage 1 followed by the FLIC intercept correction.
pub fn fit_firth_flic(x: &DesignMatrix, y: &[u8], opts: &FitOptions) -> Result<LogisticFit> {
    check_inputs(x, y)?;
    let (mut beta, converged, iterations) = firth_stage1(x, y, opts);
    let unbounded = match flic_intercept(x, y, &beta) {
        Some(b0) => {
            beta[0] = b0;
            false
        }
        None => true,
    };
    let mut fit = finish(x, beta, converged, Penalty::FirthFlic, iterations);
    fit.flic_unbounded = unbounded;
    Ok(fit)
}

/// HC3 sandwich: `bread · Σ xxᵀ r²/(1−h)² · bread` with the fit's inverse
/// information as bread.
pub fn hc3_covariance(x: &DesignMatrix, y: &[u8], fit: &LogisticFit) -> Result<SymMatrix> {
    let mut meat = SymMatrix::zeros(x.p());
    for i in 0..x.n() {
        let h = fit.hat[i];
        if !(h < 1.0 - 1e-10) {
            return Err(Error::DegenerateLeverage { row: i + 1 });
        }
        let r = y[i] as f64 - fit.fitted[i];
        let scale = r / (1.0 - h);
        meat.add_outer(x.row(i), scale * scale);
    }
    Ok(fit.cov_model.sandwich(&meat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use crate::trialdata::Covariate;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("c{j}")).collect()
    }

    fn two_cell(n1: usize, k1: usize, n0: usize, k0: usize) -> (DesignMatrix, Vec<u8>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n1 {
            rows.push(vec![1.0, 1.0]);
            y.push((i < k1) as u8);
        }
        for i in 0..n0 {
            rows.push(vec![1.0, 0.0]);
            y.push((i < k0) as u8);
        }
        (DesignMatrix::from_rows(&rows, names(2)).unwrap(), y)
    }

    pub(crate) fn random_data(seed: u64, n: usize, beta_cov: f64) -> (DesignMatrix, Vec<u8>) {
        let mut rng = CounterRng::keyed(seed, &[]);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a = rng.bernoulli(0.5) as f64;
            let x1 = rng.bernoulli(0.5) as f64;
            let x2 = rng.next_f64() * 2.0 - 1.0;
            let eta = -0.8 + 0.6 * a + beta_cov * x1 + 0.5 * x2;
            y.push(rng.bernoulli(expit(eta)));
            rows.push(vec![1.0, a, x1, x2]);
        }
        (DesignMatrix::from_rows(&rows, names(4)).unwrap(), y)
    }

    #[test]
    fn intercept_only_matches_mean() {
        // A constant treatment column is rank deficient.
        let (x, y) = two_cell(0, 0, 10, 3);
        assert!(fit_ml(&x, &y, &FitOptions::default()).is_err());

        let x = DesignMatrix { n: 10, p: 1, data: vec![1.0; 10], names: names(1) };
        let y = vec![1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let fit = fit_ml(&x, &y, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.beta[0] - (-0.847_297_9)).abs() < 1e-7);
        assert!((fit.beta[0] - logit(0.3).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn saturated_two_cell() {
        let (x, y) = two_cell(10, 5, 10, 2);
        let fit = fit_ml(&x, &y, &FitOptions::default()).unwrap();
        assert!(fit.converged && !fit.separation);
        assert!((fit.beta[0] - logit(0.2).unwrap()).abs() < 1e-8);
        assert!((fit.beta[1] - (logit(0.5).unwrap() - logit(0.2).unwrap())).abs() < 1e-8);
        let hsum: f64 = fit.hat.iter().sum();
        assert!((hsum - 2.0).abs() < 1e-6);
    }

    #[test]
    fn perfect_predictor_flags_separation() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            let a = (i % 2) as f64;
            let xv = (i % 3 == 0) as u8;
            rows.push(vec![1.0, a, xv as f64]);
            y.push(xv);
        }
        let x = DesignMatrix::from_rows(&rows, names(3)).unwrap();
        let fit = fit_ml(&x, &y, &FitOptions::default()).unwrap();
        assert!(fit.separation);

        let firth = fit_firth_flic(&x, &y, &FitOptions::default()).unwrap();
        assert!(firth.beta.iter().all(|b| b.is_finite() && b.abs() < 15.0));
        assert!(firth.converged);
    }

    #[test]
    fn separation_thresholds() {
        let (x, y) = two_cell(10, 5, 10, 2);
        let mut fit = fit_ml(&x, &y, &FitOptions::default()).unwrap();
        fit.fitted = vec![0.07, 0.2, 0.5, 0.75];
        fit.beta = vec![-1.0, 1.0];
        assert!(!detect_separation(&fit));
        fit.fitted[0] = 1.0 - 1e-9;
        assert!(detect_separation(&fit));
        fit.fitted[0] = 0.5;
        fit.beta[1] = 20.0;
        assert!(detect_separation(&fit));
    }

    #[test]
    fn firth_intercept_only_adds_half() {
        let x = DesignMatrix { n: 10, p: 1, data: vec![1.0; 10], names: names(1) };
        let y = vec![0u8; 10];
        let stage1 = fit_firth(&x, &y, &FitOptions::default()).unwrap();
        // Oracle: grid maximization of the penalized likelihood.
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut b = -6.0;
        while b < 0.0 {
            let v = penalized_log_likelihood(&x, &y, &[b]);
            if v > best.0 {
                best = (v, b);
            }
            b += 1e-4;
        }
        assert!((best.1 - (-3.044_522_4)).abs() < 2e-4);
        assert!((stage1.beta[0] - (-3.044_522_4)).abs() < 1e-7);
        let flic = fit_firth_flic(&x, &y, &FitOptions::default()).unwrap();
        assert!(flic.flic_unbounded);
        assert_eq!(flic.beta, stage1.beta);
    }

    #[test]
    fn flic_matches_event_rate() {
        for seed in 0..20 {
            let (x, y) = random_data(seed, 40, 1.0);
            let fit = fit_firth_flic(&x, &y, &FitOptions::default()).unwrap();
            let mf = fit.fitted.iter().sum::<f64>() / 40.0;
            let my = y.iter().map(|&v| v as f64).sum::<f64>() / 40.0;
            assert!((mf - my).abs() < 1e-8, "seed {seed}");
        }
    }

    #[test]
    fn firth_stage1_is_local_max() {
        for seed in 0..5 {
            let (x, y) = random_data(100 + seed, 40, 1.1);
            let fit = fit_firth(&x, &y, &FitOptions::default()).unwrap();
            assert!(fit.converged);
            let base = penalized_log_likelihood(&x, &y, &fit.beta);
            let mut rng = CounterRng::keyed(seed, &[9]);
            for _ in 0..100 {
                let d: Vec<f64> = (0..4).map(|_| rng.next_f64() - 0.5).collect();
                let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                let b: Vec<f64> = fit.beta.iter().zip(&d).map(|(b, v)| b + 1e-3 * v / norm).collect();
                assert!(penalized_log_likelihood(&x, &y, &b) <= base + 1e-12);
            }
        }
    }

    #[test]
    fn ml_score_and_curvature() {
        for seed in 0..10 {
            let (x, y) = random_data(seed, 60, 0.8);
            let fit = fit_ml(&x, &y, &FitOptions::default()).unwrap();
            assert!(fit.converged);
            let w = working(&x, &y, &x.linear_predictor(&fit.beta), None);
            assert!(max_abs(&w.score) < 1e-6);
            let hsum: f64 = fit.hat.iter().sum();
            assert!((hsum - 4.0).abs() < 1e-6);
            assert!(fit.hat.iter().all(|h| (0.0..=1.0).contains(h)));

            // Finite-difference Hessian equals −cov⁻¹.
            let info = spd_inverse_of(&fit.cov_model);
            let eps = 1e-4;
            for j in 0..4 {
                for k in 0..4 {
                    let ll = |dj: f64, dk: f64| {
                        let mut b = fit.beta.clone();
                        b[j] += dj;
                        b[k] += dk;
                        log_likelihood(&x, &y, &b)
                    };
                    let h = (ll(eps, eps) - ll(eps, -eps) - ll(-eps, eps) + ll(-eps, -eps)) / (4.0 * eps * eps);
                    let target = -info.get(j, k);
                    assert!((h - target).abs() <= 1e-4 * target.abs().max(1.0), "{h} vs {target}");
                }
            }
        }
    }

    fn spd_inverse_of(m: &SymMatrix) -> SymMatrix {
        Cholesky::new(m).unwrap().inverse()
    }

    #[test]
    fn hc3_identical_cells() {
        let (x, y) = two_cell(4, 1, 4, 2);
        let fit = fit_ml(&x, &y, &FitOptions::default()).unwrap();
        assert!(fit.hat.iter().all(|h| (h - 0.25).abs() < 1e-9));
        let hc3 = hc3_covariance(&x, &y, &fit).unwrap();
        // HC0 by hand from the closed-form two-cell inverse information.
        let (p1, p0) = (0.25, 0.5);
        let (v1, v0) = (4.0 * p1 * (1.0 - p1), 4.0 * p0 * (1.0 - p0));
        let bread = SymMatrix::from_rows(&[&[1.0 / v0, -1.0 / v0], &[-1.0 / v0, 1.0 / v0 + 1.0 / v1]]).unwrap();
        let mut meat = SymMatrix::zeros(2);
        for i in 0..8 {
            let r = y[i] as f64 - fit.fitted[i];
            meat.add_outer(x.row(i), r * r);
        }
        let hc0 = bread.sandwich(&meat);
        for j in 0..2 {
            for k in 0..2 {
                assert!((hc3.get(j, k) - hc0.get(j, k) * 16.0 / 9.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hc3_zero_residuals_and_symmetry() {
        let (x, _) = two_cell(5, 0, 5, 0);
        let (_, y) = two_cell(5, 2, 5, 3);
        let mut fit = fit_ml(&x, &y, &FitOptions::default()).unwrap();
        fit.fitted = y.iter().map(|&v| v as f64).collect();
        let hc3 = hc3_covariance(&x, &y, &fit).unwrap();
        assert!(hc3.as_slice().iter().all(|&v| v == 0.0));
        for seed in 0..5 {
            let (x, y) = random_data(seed, 50, 0.5);
            let fit = fit_ml(&x, &y, &FitOptions::default()).unwrap();
            let hc3 = hc3_covariance(&x, &y, &fit).unwrap();
            for j in 0..4 {
                for k in 0..4 {
                    assert!((hc3.get(j, k) - hc3.get(k, j)).abs() <= 1e-12 * hc3.get(j, k).abs().max(1e-300));
                }
            }
        }
        let mut fit = fit_ml(&x, &y, &FitOptions::default()).unwrap();
        fit.hat[3] = 1.0;
        assert_eq!(hc3_covariance(&x, &y, &fit), Err(Error::DegenerateLeverage { row: 4 }));
    }

    #[test]
    fn design_reference_coding() {
        let d = TrialDataset::new(
            vec![0, 1, 0, 1],
            vec![0, 0, 1, 1],
            vec![Covariate::infer("site", vec![2.0, 3.0, 4.0, 2.0])],
        )
        .unwrap();
        let x = DesignMatrix::from_dataset(&d, &["site"]).unwrap();
        assert_eq!(x.names(), &["(Intercept)", "arm", "site=3", "site=4"]);
        assert_eq!(x.row(1), &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(x.row(3), &[1.0, 1.0, 0.0, 0.0]);
    }
}
