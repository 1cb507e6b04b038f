//! Mantel–Haenszel test, the Mantel–Fleiss criterion and the MH risk
//! difference with Sato and modified Greenland–Robins variances.

use alloc::vec::Vec;

use crate::analysis::Estimand;
use crate::error::{Error, Result};
use crate::numerics::{chisq1_sf, wald};
use crate::trialdata::{Stratum, StratumTable};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhTestResult {
    pub chi2: f64,
    pub p_value: f64,
    pub strata_used: usize,
    pub strata_skipped: usize,
}

/// Expected arm-1 responders and hypergeometric variance, or `None` when the
/// stratum carries no information.
fn hypergeometric(s: &Stratum) -> Option<(f64, f64)> {
    let ns = s.total();
    if ns <= 1 {
        return None;
    }
    let (n1, n0, m1) = (s.n1 as f64, s.n0 as f64, s.responders() as f64);
    let nsf = ns as f64;
    let var = n1 * n0 * m1 * (nsf - m1) / (nsf * nsf * (nsf - 1.0));
    if var <= 0.0 {
        return None;
    }
    Some((n1 * m1 / nsf, var))
}

/// Strata sorted by their counts, so sums do not depend on input order.
fn canonical(t: &StratumTable) -> Vec<&Stratum> {
    let mut v: Vec<&Stratum> = t.strata.iter().collect();
    v.sort_by_key(|s| (s.x1, s.n1, s.x0, s.n0));
    v
}

/// Mantel–Haenszel χ² test without continuity correction.
pub fn mh_test(t: &StratumTable) -> Result<MhTestResult> {
    let (mut diff, mut var, mut used) = (0.0, 0.0, 0usize);
    for s in canonical(t) {
        if let Some((e, v)) = hypergeometric(s) {
            diff += s.x1 as f64 - e;
            var += v;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::DegenerateTable);
    }
    let chi2 = diff * diff / var;
    Ok(MhTestResult { chi2, p_value: chisq1_sf(chi2)?, strata_used: used, strata_skipped: t.len() - used })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MantelFleiss {
    pub satisfied: bool,
    pub margin: f64,
}

/// Distance of `Σ E(x1s)` from the nearest attainable bound; adequate at ≥ 5.
pub fn mantel_fleiss(t: &StratumTable) -> MantelFleiss {
    let (mut e, mut lo, mut hi) = (0.0, 0.0, 0.0);
    for s in canonical(t) {
        let m1 = s.responders();
        e += s.n1 as f64 * m1 as f64 / s.total() as f64;
        lo += m1.saturating_sub(s.n0) as f64;
        hi += s.n1.min(m1) as f64;
    }
    let margin = (e - lo).min(hi - e);
    MantelFleiss { satisfied: margin >= 5.0, margin }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MhVariance {
    Sato,
    /// Greenland–Robins with a between-stratum heterogeneity component.
    ModifiedGr,
}

impl MhVariance {
    pub fn estimand(self) -> Estimand {
        match self {
            MhVariance::Sato => Estimand::Cpate,
            MhVariance::ModifiedGr => Estimand::Mte,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhRdResult {
    pub estimate: f64,
    pub variance: f64,
    pub ci: (f64, f64),
    pub p_value: f64,
    pub variance_kind: MhVariance,
    pub estimand: Estimand,
    pub ci_truncated: bool,
}

/// MH weighted risk difference `Σ w_s δ̂_s / Σ w_s`, `w_s = n1s n0s / ns`.
pub fn mh_rd_estimate(t: &StratumTable) -> Result<f64> {
    Ok(weights(t)?.1)
}

/// Per-stratum `(stratum, w_s, δ̂_s)` in canonical order, the estimate and `Σ w_s`.
fn weights(t: &StratumTable) -> Result<(Vec<(&Stratum, f64, f64)>, f64, f64)> {
    if t.is_empty() {
        return Err(Error::InsufficientData("no strata"));
    }
    let mut ws = Vec::with_capacity(t.len());
    let (mut wsum, mut num) = (0.0, 0.0);
    for s in canonical(t) {
        if s.n1 == 0 || s.n0 == 0 {
            return Err(Error::StratumStructure { stratum: s.label() });
        }
        let w = s.n1 as f64 * s.n0 as f64 / s.total() as f64;
        let d = s.x1 as f64 / s.n1 as f64 - s.x0 as f64 / s.n0 as f64;
        ws.push((s, w, d));
        wsum += w;
        num += w * d;
    }
    let est = if ws.len() == 1 { ws[0].2 } else { num / wsum };
    Ok((ws, est, wsum))
}

pub fn mh_rd(t: &StratumTable, kind: MhVariance, alpha: f64) -> Result<MhRdResult> {
    let (ws, est, wsum) = weights(t)?;
    let var = match kind {
        MhVariance::Sato => {
            let (mut p, mut q) = (0.0, 0.0);
            for &(s, _, _) in &ws {
                let (x1, n1, x0, n0) = (s.x1 as f64, s.n1 as f64, s.x0 as f64, s.n0 as f64);
                let ns = n1 + n0;
                p += (n1 * n1 * x0 - n0 * n0 * x1 + n1 * n0 * (n0 - n1) / 2.0) / (ns * ns);
                q += (x1 * (n0 - x0) + x0 * (n1 - x1)) / (2.0 * ns);
            }
            (est * p + q) / (wsum * wsum)
        }
        MhVariance::ModifiedGr => {
            let mut v = 0.0;
            for &(s, w, d) in &ws {
                let (n1, n0) = (s.n1 as f64, s.n0 as f64);
                let (p1, p0) = (s.x1 as f64 / n1, s.x0 as f64 / n0);
                let within = p1 * (1.0 - p1) / n1 + p0 * (1.0 - p0) / n0;
                let between = (d - est) * (d - est) / s.total() as f64;
                v += w * w * (within + between);
            }
            v / (wsum * wsum)
        }
    };
    if !(var >= 0.0) {
        return Err(Error::NumericalDegeneracy("negative Mantel-Haenszel variance"));
    }
    let w = wald(est, var, alpha)?;
    Ok(MhRdResult {
        estimate: est,
        variance: var,
        ci: w.ci,
        p_value: w.p_value,
        variance_kind: kind,
        estimand: kind.estimand(),
        ci_truncated: w.truncated,
    })
}
