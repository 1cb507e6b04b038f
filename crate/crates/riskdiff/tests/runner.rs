use riskdiff::runner::build_pool;
use riskdiff::{run_scenario, LatticeCache, RunSettings};
use riskdiff_core::gcomp::{boot_replicate, boot_summary, var_boot};
use riskdiff_core::glm::{DesignMatrix, FitOptions};
use riskdiff_core::harness::{self, ScenarioSpec, COVARIATES};
use riskdiff_core::exact::DirectExact;
use riskdiff_core::rng::CounterRng;
use riskdiff_core::simgen::{gen_trial, solve_coefficients};
use riskdiff_core::{InferOptions, Method};
use rayon::prelude::*;

fn settings(methods: &[Method], replicates: u64) -> RunSettings {
    RunSettings {
        methods: methods.to_vec(),
        replicates,
        seed: 42,
        alpha: 0.05,
        opts: InferOptions { boot_b: 40, ..InferOptions::default() },
    }
}

#[test]
fn aggregates_do_not_depend_on_worker_count() {
    let spec = ScenarioSpec::new(30, 0.15, 3f64.ln());
    let s = settings(&Method::ALL, 60);
    let cache = LatticeCache::default();
    let one = run_scenario(&spec, &s, &cache, &build_pool(1).unwrap()).unwrap();
    let three = run_scenario(&spec, &s, &cache, &build_pool(3).unwrap()).unwrap();
    assert_eq!(format!("{one:?}"), format!("{three:?}"));

    let exact = DirectExact::default();
    let (_, serial) = harness::run_scenario(&spec, &Method::ALL, 60, 42, 0.05, &s.opts, &exact).unwrap();
    assert_eq!(format!("{one:?}"), format!("{serial:?}"));
}

#[test]
fn bootstrap_is_independent_of_thread_count() {
    let spec = ScenarioSpec::new(60, 0.15, 1.5f64.ln());
    let c = solve_coefficients(&spec.params).unwrap();
    let d = gen_trial(&spec.params, &c, &mut CounterRng::keyed(3, &[1]));
    let x = DesignMatrix::from_dataset(&d, &COVARIATES).unwrap();
    let opts = FitOptions::default();
    let serial = var_boot(&d, &COVARIATES, 200, 99, &opts).unwrap();
    for threads in [1, 2, 5] {
        let deltas: Vec<Option<f64>> =
            build_pool(threads).unwrap().install(|| (0..200).into_par_iter().map(|b| boot_replicate(&x, d.y(), 99, b, &opts)).collect());
        assert_eq!(boot_summary(&deltas).unwrap(), serial);
    }
}

#[test]
fn operating_characteristic_invariants() {
    let spec = ScenarioSpec::new(30, 0.0, 3f64.ln());
    let methods = [Method::Suissa, Method::MhTest, Method::MhSato, Method::Ge, Method::Liu, Method::Ye, Method::Firth];
    let r = 300;
    let oc = run_scenario(&spec, &settings(&methods, r), &LatticeCache::default(), &build_pool(2).unwrap()).unwrap();
    assert_eq!(oc.replicates, r as usize);
    for m in &oc.methods {
        assert_eq!(m.n_used + m.n_excluded, r as usize);
        assert!((0.0..=1.0).contains(&m.rejection_rate));
        if !m.bias.is_nan() {
            assert!(m.rmse >= m.bias.abs());
        }
        // Wald intervals: coverage of zero complements rejection.
        if !m.coverage.is_nan() {
            assert!((m.coverage + m.rejection_rate - 1.0).abs() < 2.0 * m.mc_se.max(1e-3), "{:?}", m);
        }
    }
    assert!(oc.separation_rate > 0.0);
}

#[test]
fn zero_replicates_rejected() {
    let spec = ScenarioSpec::new(30, 0.0, 0.0);
    assert!(run_scenario(&spec, &settings(&[Method::Ge], 0), &LatticeCache::default(), &build_pool(1).unwrap()).is_err());
}
