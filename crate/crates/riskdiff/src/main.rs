use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use riskdiff::config::{parse_coefficient, CONFIG_SCHEMA_VERSION};
use riskdiff::output::{fmt6, AnalysisReport};
use riskdiff::{load_csv, run_grid, AppError, AppResult, GridOptions, LatticeCache, SimConfig, VERSION_LINE};
use riskdiff_core::analysis::{Analysis, ZhangVariance};
use riskdiff_core::exact::{Ordering, DEFAULT_GRID};
use riskdiff_core::simgen::{cell_probabilities, solve_coefficients, ScenarioParams, DEFAULT_P0};
use riskdiff_core::{InferOptions, Method};

#[derive(Parser)]
#[command(name = "riskdiff", version = VERSION_LINE, about = "Risk-difference inference for two-arm trials with binary outcomes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze one dataset with one or more methods.
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo study described by a TOML configuration.
    Simulate(SimulateArgs),
    /// Print the solved outcome-model coefficients of a scenario.
    SolveDgp(SolveArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderingArg {
    AbsZ,
    DeltaHat,
}

#[derive(Clone, Copy, ValueEnum)]
enum ZhangArg {
    Ye,
    Ge,
    Liu,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "y")]
    outcome: String,
    #[arg(long, default_value = "arm")]
    arm: String,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    /// Comma-separated method names, or `all`.
    #[arg(long, value_delimiter = ',', required = true)]
    method: Vec<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 1000)]
    boot_b: usize,
    /// Bootstrap seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// θ grid points of the exact test.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    exact_grid: usize,
    #[arg(long, value_enum, default_value_t = OrderingArg::AbsZ)]
    exact_ordering: OrderingArg,
    /// Variance used by the score test.
    #[arg(long, value_enum, default_value_t = ZhangArg::Ye)]
    zhang_variance: ZhangArg,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for results.csv and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// Keep scenarios already complete in the output directory.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    delta: f64,
    /// Covariate log-odds coefficient, e.g. `0.4`, `log(3)` or `log3`.
    #[arg(long, allow_hyphen_values = true)]
    beta_cov: String,
    #[arg(long, default_value_t = DEFAULT_P0)]
    p0: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn usage(kind: ErrorKind, message: impl std::fmt::Display) -> ! {
    Cli::command().error(kind, message).exit()
}

fn parse_methods(names: &[String]) -> Vec<Method> {
    if names.iter().any(|n| n == "all") {
        return Method::ALL.to_vec();
    }
    names
        .iter()
        .map(|n| {
            Method::from_name(n).unwrap_or_else(|| {
                usage(ErrorKind::InvalidValue, format!("unknown method \"{n}\"; expected one of {}", riskdiff_core::analysis::method_names()))
            })
        })
        .collect()
}

fn analyze(a: AnalyzeArgs) -> AppResult<()> {
    let methods = parse_methods(&a.method);
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        usage(ErrorKind::InvalidValue, "--alpha must lie in (0, 1)");
    }
    if a.exact_grid < 100 {
        usage(ErrorKind::InvalidValue, "--exact-grid must be at least 100");
    }
    if a.boot_b < 2 {
        usage(ErrorKind::InvalidValue, "--boot-b must be at least 2");
    }
    if !a.covariates.is_empty() {
        if let Some(m) = methods.iter().find(|m| !m.accepts_covariates()) {
            usage(ErrorKind::ArgumentConflict, format!("method {m} accepts no covariates"));
        }
    }
    let cols: Vec<&str> = a.covariates.iter().map(String::as_str).collect();
    let d = load_csv(&a.input, &a.outcome, &a.arm, &cols)?;
    let ordering = match a.exact_ordering {
        OrderingArg::AbsZ => Ordering::AbsZ,
        OrderingArg::DeltaHat => Ordering::DeltaHat,
    };
    let opts = InferOptions {
        boot_b: a.boot_b,
        seed: a.seed,
        exact_grid: a.exact_grid,
        exact_ordering: ordering,
        zhang_variance: match a.zhang_variance {
            ZhangArg::Ye => ZhangVariance::Ye,
            ZhangArg::Ge => ZhangVariance::Ge,
            ZhangArg::Liu => ZhangVariance::Liu,
        },
        ..InferOptions::default()
    };
    let exact = LatticeCache::new(a.exact_grid, ordering);
    let mut analysis = Analysis::new(&d, &cols, a.alpha, opts)?;
    let results = methods.iter().map(|&m| analysis.run(m, &exact)).collect::<Result<Vec<_>, _>>()?;
    let report = AnalysisReport::new(&d, &cols, a.alpha, &results);
    let text = match a.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Csv => report.to_csv(),
    };
    print(&text)
}

fn simulate(a: SimulateArgs) -> AppResult<()> {
    let cfg = SimConfig::load(&a.config)?;
    let workers = a.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        usage(ErrorKind::InvalidValue, "--workers must be at least 1");
    }
    let total = cfg.scenarios.len();
    let mut done = 0;
    let manifest = run_grid(&cfg, &a.out, GridOptions { workers, resume: a.resume }, |e| {
        done += 1;
        if !a.quiet {
            let how = if e.resumed { "kept".to_string() } else { format!("{:.1}s", e.wall_seconds) };
            eprintln!("[{done}/{total}] {} ({how})", e.scenario_id);
        }
    })?;
    if !a.quiet {
        eprintln!("{} scenarios written to {}", manifest.scenarios.len(), a.out.display());
    }
    Ok(())
}

fn solve_dgp(a: SolveArgs) -> AppResult<()> {
    let beta = parse_coefficient(&a.beta_cov)
        .unwrap_or_else(|| usage(ErrorKind::InvalidValue, format!("invalid --beta-cov \"{}\"", a.beta_cov)));
    let p = ScenarioParams { p0: a.p0, ..ScenarioParams::new(2, a.delta, beta) };
    if let Err(e) = p.validate() {
        usage(ErrorKind::InvalidValue, e);
    }
    let c = solve_coefficients(&p)?;
    let cells = cell_probabilities(&c, beta);
    let mut rows = Vec::new();
    for (arm, plane) in cells.iter().enumerate() {
        for (x1, row) in plane.iter().enumerate() {
            for (x2, &prob) in row.iter().enumerate() {
                rows.push((arm, x1, x2, prob));
            }
        }
    }
    let text = match a.format {
        Format::Json => {
            let cells: Vec<_> = rows
                .iter()
                .map(|&(arm, x1, x2, p)| serde_json::json!({"arm": arm, "x1": x1, "x2": x2, "p": p}))
                .collect();
            let v = serde_json::json!({
                "delta": a.delta, "beta_cov": beta, "p0": a.p0,
                "beta0": c.beta0, "beta_a": c.beta_a,
                "achieved_p0": c.achieved_p0, "achieved_delta": c.achieved_delta,
                "cells": cells,
            });
            serde_json::to_string_pretty(&v)? + "\n"
        }
        Format::Csv => {
            let mut s = format!("beta0,{}\nbeta_a,{}\n", fmt6(c.beta0), fmt6(c.beta_a));
            s.push_str("arm,x1,x2,p\n");
            for (arm, x1, x2, p) in rows {
                s.push_str(&format!("{arm},{x1},{x2},{}\n", fmt6(p)));
            }
            s
        }
    };
    print(&text)
}

fn print(text: &str) -> AppResult<()> {
    std::io::stdout().write_all(text.as_bytes()).map_err(|e| AppError::Io { path: "<stdout>".into(), source: e })
}

fn main() -> ExitCode {
    debug_assert_eq!(CONFIG_SCHEMA_VERSION, 1);
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate(a),
        Command::SolveDgp(a) => solve_dgp(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
