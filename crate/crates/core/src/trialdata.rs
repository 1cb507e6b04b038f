//! Subject-level trial data and stratified 2×2 tables.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Columns with at most this many distinct integer codes are categorical.
pub const MAX_CATEGORICAL_LEVELS: usize = 10;
pub const MAX_STRATA: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum CovariateKind {
    /// Values in {0, 1}.
    Binary,
    /// Integer-coded levels, sorted ascending.
    Categorical { levels: Vec<i64> },
    Real,
}

impl CovariateKind {
    pub fn is_categorical(&self) -> bool {
        !matches!(self, CovariateKind::Real)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
    pub values: Vec<f64>,
}

impl Covariate {
    /// Infers the column type from its values.
    pub fn infer(name: &str, values: Vec<f64>) -> Self {
        let integral = values.iter().all(|&v| libm::trunc(v) == v && libm::fabs(v) < 1e15);
        let kind = if integral {
            let levels: BTreeSet<i64> = values.iter().map(|&v| v as i64).collect();
            if levels.iter().all(|&l| l == 0 || l == 1) {
                CovariateKind::Binary
            } else if levels.len() <= MAX_CATEGORICAL_LEVELS {
                CovariateKind::Categorical { levels: levels.into_iter().collect() }
            } else {
                CovariateKind::Real
            }
        } else {
            CovariateKind::Real
        };
        Covariate { name: name.to_string(), kind, values }
    }

    pub fn binary(name: &str, values: Vec<u8>) -> Self {
        Covariate {
            name: name.to_string(),
            kind: CovariateKind::Binary,
            values: values.into_iter().map(f64::from).collect(),
        }
    }

    /// Level code of subject `i`; only meaningful for categorical columns.
    pub fn level(&self, i: usize) -> i64 {
        self.values[i] as i64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    y: Vec<u8>,
    arm: Vec<u8>,
    covariates: Vec<Covariate>,
}

impl TrialDataset {
    pub fn new(y: Vec<u8>, arm: Vec<u8>, covariates: Vec<Covariate>) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::Invalid("a dataset needs at least two subjects".into()));
        }
        if arm.len() != n {
            return Err(Error::Invalid("outcome and arm vectors differ in length".into()));
        }
        if let Some(i) = y.iter().position(|&v| v > 1) {
            return Err(Error::Parse { row: i + 1, message: "outcome must be 0 or 1".into() });
        }
        if let Some(i) = arm.iter().position(|&v| v > 1) {
            return Err(Error::Parse { row: i + 1, message: "arm must be 0 or 1".into() });
        }
        for c in &covariates {
            if c.values.len() != n {
                return Err(Error::Invalid(format!("covariate {} has the wrong length", c.name)));
            }
            if let Some(i) = c.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    row: i + 1,
                    message: format!("missing or non-finite value in {}", c.name),
                });
            }
        }
        Ok(TrialDataset { y, arm, covariates })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn arm(&self) -> &[u8] {
        &self.arm
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    pub fn covariate(&self, name: &str) -> Result<&Covariate> {
        self.covariates
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Schema { column: name.to_string() })
    }

    /// Arm sizes `(n1, n0)`.
    pub fn arm_sizes(&self) -> (usize, usize) {
        let n1 = self.arm.iter().filter(|&&a| a == 1).count();
        (n1, self.n() - n1)
    }

    /// Responders per arm `(k1, k0)`.
    pub fn responders(&self) -> (usize, usize) {
        let mut k = [0usize; 2];
        for (&y, &a) in self.y.iter().zip(&self.arm) {
            k[a as usize] += y as usize;
        }
        (k[1], k[0])
    }

    pub fn both_arms_present(&self) -> bool {
        let (n1, n0) = self.arm_sizes();
        n1 > 0 && n0 > 0
    }

    /// Copy with the treatment labels swapped.
    pub fn relabel_arms(&self) -> Self {
        TrialDataset {
            y: self.y.clone(),
            arm: self.arm.iter().map(|a| 1 - a).collect(),
            covariates: self.covariates.clone(),
        }
    }

    /// Subjects at `rows`, in that order (repeats allowed).
    pub fn select(&self, rows: &[usize]) -> Self {
        TrialDataset {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            arm: rows.iter().map(|&i| self.arm[i]).collect(),
            covariates: self
                .covariates
                .iter()
                .map(|c| Covariate {
                    name: c.name.clone(),
                    kind: c.kind.clone(),
                    values: rows.iter().map(|&i| c.values[i]).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stratum {
    /// Level codes of the stratifying covariates, in the requested order.
    pub key: Vec<i64>,
    pub x1: u64,
    pub n1: u64,
    pub x0: u64,
    pub n0: u64,
}

impl Stratum {
    pub fn new(x1: u64, n1: u64, x0: u64, n0: u64) -> Self {
        Stratum { key: Vec::new(), x1, n1, x0, n0 }
    }

    pub fn total(&self) -> u64 {
        self.n1 + self.n0
    }

    pub fn responders(&self) -> u64 {
        self.x1 + self.x0
    }

    pub fn label(&self) -> String {
        if self.key.is_empty() {
            return "(all)".to_string();
        }
        let parts: Vec<String> = self.key.iter().map(|k| k.to_string()).collect();
        format!("({})", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumTable {
    pub strata: Vec<Stratum>,
}

impl StratumTable {
    /// Validates counts: `x <= n` per arm and every stratum non-empty.
    pub fn new(strata: Vec<Stratum>) -> Result<Self> {
        for s in &strata {
            if s.x1 > s.n1 || s.x0 > s.n0 {
                return Err(Error::Invalid(format!("stratum {} has more responders than subjects", s.label())));
            }
            if s.total() == 0 {
                return Err(Error::Invalid(format!("stratum {} is empty", s.label())));
            }
        }
        Ok(StratumTable { strata })
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.strata.iter().map(Stratum::total).sum()
    }
}

/// Cross-classifies subjects by the named categorical covariates.
pub fn stratify(d: &TrialDataset, covariate_cols: &[&str]) -> Result<StratumTable> {
    let cols: Vec<&Covariate> = covariate_cols.iter().map(|c| d.covariate(c)).collect::<Result<_>>()?;
    if let Some(c) = cols.iter().find(|c| !c.kind.is_categorical()) {
        return Err(Error::CovariateType { column: c.name.clone() });
    }
    let mut cells: BTreeMap<Vec<i64>, [u64; 4]> = BTreeMap::new();
    for i in 0..d.n() {
        let key: Vec<i64> = cols.iter().map(|c| c.level(i)).collect();
        let cell = cells.entry(key).or_insert([0; 4]);
        let (y, a) = (d.y[i] as u64, d.arm[i]);
        if a == 1 {
            cell[0] += y;
            cell[1] += 1;
        } else {
            cell[2] += y;
            cell[3] += 1;
        }
    }
    if cells.len() > MAX_STRATA {
        return Err(Error::Invalid(format!(
            "cross-classification yields {} strata (limit {MAX_STRATA})",
            cells.len()
        )));
    }
    let strata = cells
        .into_iter()
        .map(|(key, c)| Stratum { key, x1: c[0], n1: c[1], x0: c[2], n0: c[3] })
        .collect();
    StratumTable::new(strata)
}
