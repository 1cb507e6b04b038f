//! Simulation configuration in TOML.
//!
//! ```toml
//! schema_version = 1
//!
//! [run]
//! replicates = 10000
//! seed = 20240611
//! alpha = 0.05
//! boot_b = 1000
//! methods = ["suissa", "mh-test", "ge"]
//!
//! [grid]
//! n = [30, 60, 90, 120, 150]
//! delta = [0.0, 0.15, 0.30]
//! beta_cov = ["log(1)", "log(1.5)", "log(3)"]
//! ```
//!
//! Without a `[grid]` table the full 45-scenario grid is used.

use serde::{Deserialize, Serialize};

use riskdiff_core::analysis::ZhangVariance;
use riskdiff_core::harness::{paper_grid, ScenarioSpec};
use riskdiff_core::simgen::{ScenarioParams, DEFAULT_P0};
use riskdiff_core::{InferOptions, Method};

use crate::error::{AppError, AppResult};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: Option<u32>,
    run: RawRun,
    grid: Option<RawGrid>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    replicates: u64,
    seed: Option<u64>,
    alpha: Option<f64>,
    boot_b: Option<usize>,
    methods: Option<Vec<String>>,
    p0: Option<f64>,
    exact_grid: Option<usize>,
    zhang_variance: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n: Vec<usize>,
    delta: Vec<f64>,
    beta_cov: Vec<Coefficient>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Coefficient {
    Number(f64),
    Text(String),
}

/// Validated simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub replicates: u64,
    pub seed: u64,
    pub alpha: f64,
    pub boot_b: usize,
    pub exact_grid: usize,
    pub zhang_variance: String,
    pub p0: f64,
    pub methods: Vec<String>,
    /// Scenarios as `(n, delta, beta_cov)`, in run order.
    pub scenarios: Vec<(usize, f64, f64)>,
}

/// Parses `1.2`, `log(3)`, `log3` or `ln(3)`.
pub fn parse_coefficient(s: &str) -> Option<f64> {
    let t = s.trim();
    let arg = t.strip_prefix("log").or_else(|| t.strip_prefix("ln"));
    match arg {
        Some(rest) => {
            let rest = rest.trim();
            let inner = rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or(rest);
            inner.trim().parse::<f64>().ok().filter(|v| *v > 0.0).map(f64::ln)
        }
        None => t.parse::<f64>().ok(),
    }
    .filter(|v| v.is_finite())
}

pub fn parse_zhang_variance(s: &str) -> Option<ZhangVariance> {
    match s {
        "ye" => Some(ZhangVariance::Ye),
        "ge" => Some(ZhangVariance::Ge),
        "liu" => Some(ZhangVariance::Liu),
        _ => None,
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// First line assigning `key`, or 1.
fn line_of_key(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| l.trim_start().strip_prefix(key).is_some_and(|r| r.trim_start().starts_with('=')))
        .map_or(1, |i| i + 1)
}

impl SimConfig {
    pub fn from_toml(text: &str) -> AppResult<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| AppError::Config {
            line: e.span().map_or(1, |s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        let bad = |key: &str, message: String| AppError::Config { line: line_of_key(text, key), message };

        if let Some(v) = raw.schema_version {
            if v != CONFIG_SCHEMA_VERSION {
                return Err(bad("schema_version", format!("unsupported schema version {v}")));
            }
        }
        let r = raw.run;
        if r.replicates == 0 {
            return Err(bad("replicates", "replicates must be at least 1".into()));
        }
        let alpha = r.alpha.unwrap_or(0.05);
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(bad("alpha", "alpha must lie in (0, 1)".into()));
        }
        let boot_b = r.boot_b.unwrap_or(1000);
        if boot_b < 2 {
            return Err(bad("boot_b", "boot_b must be at least 2".into()));
        }
        let exact_grid = r.exact_grid.unwrap_or(riskdiff_core::exact::DEFAULT_GRID);
        if exact_grid < 100 {
            return Err(bad("exact_grid", "exact_grid must be at least 100".into()));
        }
        let zhang_variance = r.zhang_variance.unwrap_or_else(|| "ye".into());
        if parse_zhang_variance(&zhang_variance).is_none() {
            return Err(bad("zhang_variance", format!("unknown variance \"{zhang_variance}\" (ye, ge, liu)")));
        }
        let methods = match r.methods {
            None => Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            Some(v) => {
                if v.is_empty() {
                    return Err(bad("methods", "methods must not be empty".into()));
                }
                for (i, m) in v.iter().enumerate() {
                    if Method::from_name(m).is_none() {
                        return Err(bad("methods", format!("unknown method \"{m}\"")));
                    }
                    if v[..i].contains(m) {
                        return Err(bad("methods", format!("duplicate method \"{m}\"")));
                    }
                }
                v
            }
        };
        let p0 = r.p0.unwrap_or(DEFAULT_P0);

        let scenarios: Vec<(usize, f64, f64)> = match raw.grid {
            None => paper_grid().iter().map(|s| (s.params.n, s.params.delta, s.params.beta_cov)).collect(),
            Some(g) => {
                let betas = g
                    .beta_cov
                    .iter()
                    .map(|c| match c {
                        Coefficient::Number(v) if v.is_finite() => Ok(*v),
                        Coefficient::Number(v) => Err(bad("beta_cov", format!("invalid coefficient {v}"))),
                        Coefficient::Text(s) => {
                            parse_coefficient(s).ok_or_else(|| bad("beta_cov", format!("invalid coefficient \"{s}\"")))
                        }
                    })
                    .collect::<AppResult<Vec<f64>>>()?;
                for (key, empty) in [("n", g.n.is_empty()), ("delta", g.delta.is_empty()), ("beta_cov", betas.is_empty())]
                {
                    if empty {
                        return Err(bad(key, format!("{key} must not be empty")));
                    }
                }
                let mut v = Vec::new();
                for &delta in &g.delta {
                    for &beta in &betas {
                        for &n in &g.n {
                            v.push((n, delta, beta));
                        }
                    }
                }
                v
            }
        };
        let cfg = SimConfig { replicates: r.replicates, seed: r.seed.unwrap_or(0), alpha, boot_b, exact_grid, zhang_variance, p0, methods, scenarios };
        for s in cfg.specs() {
            if let Err(e) = s.params.validate() {
                let key = if s.params.n < 2 {
                    "n"
                } else if !(p0 > 0.0 && p0 < 1.0) {
                    "p0"
                } else {
                    "delta"
                };
                return Err(bad(key, format!("scenario {}: {e}", s.id())));
            }
        }
        let mut ids: Vec<String> = cfg.specs().iter().map(ScenarioSpec::id).collect();
        ids.sort();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(bad("n", format!("duplicate scenario {}", w[0])));
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn specs(&self) -> Vec<ScenarioSpec> {
        self.scenarios
            .iter()
            .map(|&(n, delta, beta_cov)| ScenarioSpec { params: ScenarioParams { p0: self.p0, ..ScenarioParams::new(n, delta, beta_cov) } })
            .collect()
    }

    pub fn method_list(&self) -> Vec<Method> {
        self.methods.iter().map(|m| Method::from_name(m).expect("validated")).collect()
    }

    pub fn infer_options(&self) -> InferOptions {
        InferOptions {
            boot_b: self.boot_b,
            exact_grid: self.exact_grid,
            zhang_variance: parse_zhang_variance(&self.zhang_variance).expect("validated"),
            ..InferOptions::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficients() {
        assert_eq!(parse_coefficient("log(3)"), Some(3f64.ln()));
        assert_eq!(parse_coefficient("log3"), Some(3f64.ln()));
        assert_eq!(parse_coefficient(" ln(1.5) "), Some(1.5f64.ln()));
        assert_eq!(parse_coefficient("0.25"), Some(0.25));
        assert_eq!(parse_coefficient("log(-1)"), None);
        assert_eq!(parse_coefficient("x"), None);
    }

    #[test]
    fn minimal_config_uses_full_grid() {
        let c = SimConfig::from_toml("[run]\nreplicates = 10\n").unwrap();
        assert_eq!(c.scenarios.len(), 45);
        assert_eq!(c.methods.len(), 10);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn explicit_grid() {
        let text = "[run]\nreplicates = 5\nseed = 3\nmethods = [\"ge\", \"ye\"]\n[grid]\nn = [30]\ndelta = [0, 0.15]\nbeta_cov = [\"log(3)\", 0.0]\n";
        let c = SimConfig::from_toml(text).unwrap();
        assert_eq!(c.scenarios, vec![(30, 0.0, 3f64.ln()), (30, 0.0, 0.0), (30, 0.15, 3f64.ln()), (30, 0.15, 0.0)]);
        assert_eq!(c.method_list(), vec![Method::Ge, Method::Ye]);
    }

    #[test]
    fn zero_replicates_cites_line() {
        let err = SimConfig::from_toml("schema_version = 1\n[run]\nreplicates = 0\n").unwrap_err();
        assert!(matches!(err, AppError::Config { line: 3, .. }), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn malformed_and_unknown_keys() {
        let err = SimConfig::from_toml("[run]\nreplicates = 5\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, AppError::Config { line: 3, .. }), "{err}");
        let err = SimConfig::from_toml("[run]\nreplicates = \n").unwrap_err();
        assert!(matches!(err, AppError::Config { line: 2, .. }), "{err}");
        let err = SimConfig::from_toml("[run]\nreplicates = 5\nmethods = [\"nope\"]\n").unwrap_err();
        assert!(matches!(err, AppError::Config { line: 3, .. }), "{err}");
        let err = SimConfig::from_toml("[run]\nreplicates = 5\np0 = 1.1\n").unwrap_err();
        assert!(matches!(err, AppError::Config { line: 3, .. }), "{err}");
    }
}
