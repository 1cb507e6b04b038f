//! Parallel scenario runs and the resumable grid driver.
//!
//! Replicates are mapped on a rayon pool and reduced in replicate order, so
//! results do not depend on the number of workers.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use riskdiff_core::harness::{simulate_replicate, Aggregator, MethodRecord, OperatingCharacteristics, RepOutcome, ScenarioSpec};
use riskdiff_core::simgen::solve_coefficients;
use riskdiff_core::{Error, InferOptions, Method};

use crate::config::{SimConfig, CONFIG_SCHEMA_VERSION};
use crate::error::{AppError, AppResult};
use crate::exact_cache::LatticeCache;
use crate::output::{oc_rows, Manifest, ScenarioEntry, OC_HEADER};

/// Replicates held in memory at once.
const CHUNK: u64 = 512;

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub methods: Vec<Method>,
    pub replicates: u64,
    pub seed: u64,
    pub alpha: f64,
    pub opts: InferOptions,
}

impl RunSettings {
    pub fn from_config(c: &SimConfig) -> Self {
        RunSettings { methods: c.method_list(), replicates: c.replicates, seed: c.seed, alpha: c.alpha, opts: c.infer_options() }
    }
}

pub fn build_pool(workers: usize) -> AppResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| AppError::Usage(format!("cannot start worker pool: {e}")))
}

/// Runs one scenario; a replicate whose analysis cannot start is excluded
/// for every method.
pub fn run_scenario(
    spec: &ScenarioSpec,
    s: &RunSettings,
    exact: &LatticeCache,
    pool: &rayon::ThreadPool,
) -> AppResult<OperatingCharacteristics> {
    if s.replicates == 0 || s.methods.is_empty() {
        return Err(Error::Invalid("need at least one replicate and one method".into()).into());
    }
    let coefs = solve_coefficients(&spec.params)?;
    let one = |r: u64| {
        simulate_replicate(spec, &coefs, &s.methods, r, s.seed, s.alpha, &s.opts, exact).unwrap_or_else(|e| RepOutcome {
            replicate: r,
            records: s.methods.iter().map(|&method| MethodRecord { method, result: Err(e.clone()) }).collect(),
            separated: false,
            converged: false,
            mh_degenerate: false,
        })
    };
    let mut agg = Aggregator::new(&s.methods, spec.params.delta, s.alpha);
    let mut start = 0;
    while start < s.replicates {
        let end = (start + CHUNK).min(s.replicates);
        let outcomes: Vec<RepOutcome> = pool.install(|| (start..end).into_par_iter().map(one).collect());
        outcomes.iter().for_each(|o| agg.push(o));
        start = end;
    }
    let oc = agg.finish(spec);
    if let Some(m) = oc.methods.iter().find(|m| m.n_used == 0) {
        return Err(Error::Aggregation { method: m.method.name().into() }.into());
    }
    Ok(oc)
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write_atomic(path: &Path, contents: &[u8]) -> AppResult<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| AppError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridOptions {
    pub workers: usize,
    pub resume: bool,
}

/// Rows of scenarios that are complete for `methods`, keyed by scenario id.
fn completed_rows(text: &str, methods: &[Method]) -> AppResult<HashMap<String, Vec<String>>> {
    let mut lines = text.lines();
    if lines.next() != Some(OC_HEADER) {
        return Err(AppError::Usage("cannot resume: results file has an unexpected header".into()));
    }
    let mut by_id: HashMap<String, Vec<String>> = HashMap::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let id = line.split(',').next().unwrap_or_default();
        by_id.entry(id.to_string()).or_default().push(line.to_string());
    }
    by_id.retain(|_, rows| {
        rows.len() == methods.len()
            && rows.iter().zip(methods).all(|(r, m)| r.split(',').nth(4) == Some(m.name()))
    });
    Ok(by_id)
}

struct GridState {
    results: PathBuf,
    manifest_path: PathBuf,
    manifest: Manifest,
    rows: Vec<String>,
}

impl GridState {
    fn flush(&mut self) -> AppResult<()> {
        let mut csv = String::from(OC_HEADER);
        csv.push('\n');
        for r in &self.rows {
            csv.push_str(r);
            csv.push('\n');
        }
        write_atomic(&self.results, csv.as_bytes())?;
        self.write_manifest()
    }

    fn write_manifest(&mut self) -> AppResult<()> {
        self.manifest.updated_at_unix = unix_now();
        let json = serde_json::to_vec_pretty(&self.manifest)?;
        write_atomic(&self.manifest_path, &json)
    }
}

/// Runs every scenario of `cfg`, rewriting `results.csv` and
/// `manifest.json` in `out_dir` after each one. With `resume`, scenarios
/// already complete in an earlier run with the same configuration keep
/// their rows verbatim.
pub fn run_grid(
    cfg: &SimConfig,
    out_dir: &Path,
    go: GridOptions,
    mut progress: impl FnMut(&ScenarioEntry),
) -> AppResult<Manifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| AppError::io(out_dir, e))?;
    let settings = RunSettings::from_config(cfg);
    let config = serde_json::to_value(cfg)?;
    let results = out_dir.join(RESULTS_FILE);
    let manifest_path = out_dir.join(MANIFEST_FILE);

    let mut kept: HashMap<String, Vec<String>> = HashMap::new();
    let mut old_entries: HashMap<String, ScenarioEntry> = HashMap::new();
    if go.resume && results.exists() {
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| AppError::io(&manifest_path, e))?;
        let old: Manifest = serde_json::from_str(&text)?;
        if old.config != config {
            return Err(AppError::Usage("cannot resume: configuration differs from the earlier run".into()));
        }
        let text = std::fs::read_to_string(&results).map_err(|e| AppError::io(&results, e))?;
        kept = completed_rows(&text, &settings.methods)?;
        old_entries = old.scenarios.into_iter().map(|e| (e.scenario_id.clone(), e)).collect();
    }

    let now = unix_now();
    let mut st = GridState {
        results,
        manifest_path,
        manifest: Manifest {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_schema_version: CONFIG_SCHEMA_VERSION,
            status: "running".into(),
            error: None,
            config,
            workers: go.workers,
            started_at_unix: now,
            updated_at_unix: now,
            scenarios: Vec::new(),
        },
        rows: Vec::new(),
    };
    let exact = LatticeCache::new(settings.opts.exact_grid, settings.opts.exact_ordering);
    let pool = build_pool(go.workers)?;

    for spec in cfg.specs() {
        let id = spec.id();
        let step = match (kept.remove(&id), old_entries.remove(&id)) {
            (Some(rows), Some(entry)) => Ok((rows, ScenarioEntry { resumed: true, ..entry })),
            _ => {
                let t = Instant::now();
                run_scenario(&spec, &settings, &exact, &pool)
                    .map(|oc| (oc_rows(&oc), ScenarioEntry::new(&oc, t.elapsed().as_secs_f64())))
            }
        };
        let flushed = step.and_then(|(rows, entry)| {
            st.rows.extend(rows);
            progress(&entry);
            st.manifest.scenarios.push(entry);
            st.flush()
        });
        if let Err(e) = flushed {
            st.manifest.status = "partial".into();
            st.manifest.error = Some(format!("scenario {id}: {e}"));
            let _ = st.write_manifest();
            return Err(e);
        }
    }
    st.manifest.status = "complete".into();
    st.write_manifest()?;
    Ok(st.manifest)
}
