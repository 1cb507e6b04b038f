use proptest::prelude::*;

use riskdiff_core::analysis::{infer, InferOptions, Method};
use riskdiff_core::exact::ss_test;
use riskdiff_core::gcomp::{zhang_score, var_liu_parts, standardize};
use riskdiff_core::glm::{fit_firth_flic, fit_ml, DesignMatrix, FitOptions};
use riskdiff_core::mh::{mh_rd, mh_rd_estimate, mh_test, MhVariance};
use riskdiff_core::numerics::{chisq1_sf, log_choose, norm_cdf, norm_quantile};
use riskdiff_core::trialdata::stratify;
use riskdiff_core::{Covariate, Stratum, StratumTable, TrialDataset};

/// Dataset from explicit per-subject bits; keeps both arms and both
/// outcomes present.
fn dataset(rows: &[(u8, u8, u8, u8)]) -> Option<TrialDataset> {
    let y: Vec<u8> = rows.iter().map(|r| r.0).collect();
    let arm: Vec<u8> = rows.iter().map(|r| r.1).collect();
    let both = |v: &[u8]| v.contains(&0) && v.contains(&1);
    if !both(&y) || !both(&arm) || arm.iter().filter(|&&a| a == 1).count() < 2 || arm.iter().filter(|&&a| a == 0).count() < 2 {
        return None;
    }
    let x1 = rows.iter().map(|r| r.2).collect();
    let x2 = rows.iter().map(|r| r.3).collect();
    TrialDataset::new(y, arm, vec![Covariate::binary("X1", x1), Covariate::binary("X2", x2)]).ok()
}

fn rows(min: usize, max: usize) -> impl Strategy<Value = Vec<(u8, u8, u8, u8)>> {
    prop::collection::vec((0u8..2, 0u8..2, 0u8..2, 0u8..2), min..max)
}

fn stratum() -> impl Strategy<Value = Stratum> {
    (1u64..20, 1u64..20).prop_flat_map(|(n1, n0)| (0..=n1, 0..=n0).prop_map(move |(x1, x0)| Stratum::new(x1, n1, x0, n0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn quantile_inverts_cdf(z in -6.0f64..6.0) {
        prop_assert!((norm_quantile(norm_cdf(z)).unwrap() - z).abs() < 1e-8);
    }

    #[test]
    fn pascal_recurrence(n in 1u64..=60, k in 1u64..60) {
        prop_assume!(k < n);
        let lhs = log_choose(n, k).unwrap().exp();
        let rhs = log_choose(n - 1, k - 1).unwrap().exp() + log_choose(n - 1, k).unwrap().exp();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs);
    }

    #[test]
    fn strata_reproduce_counts(r in rows(4, 60)) {
        let Some(d) = dataset(&r) else { return Ok(()) };
        let t = stratify(&d, &["X1", "X2"]).unwrap();
        let (k1, k0) = d.responders();
        let (n1, n0) = d.arm_sizes();
        let s = |f: fn(&Stratum) -> u64| t.strata.iter().map(f).sum::<u64>() as usize;
        prop_assert_eq!((s(|s| s.x1), s(|s| s.x0), s(|s| s.n1), s(|s| s.n0)), (k1, k0, n1, n0));
    }

    #[test]
    fn ml_fit_invariants(r in rows(12, 80)) {
        let Some(d) = dataset(&r) else { return Ok(()) };
        let Ok(x) = DesignMatrix::from_dataset(&d, &["X1", "X2"]) else { return Ok(()) };
        prop_assume!(x.check_rank().is_ok());
        let fit = fit_ml(&x, d.y(), &FitOptions::default()).unwrap();
        prop_assume!(fit.converged);
        let p = x.p();
        let mut score = vec![0.0; p];
        for i in 0..x.n() {
            for j in 0..p {
                score[j] += x.row(i)[j] * (d.y()[i] as f64 - fit.fitted[i]);
            }
        }
        prop_assert!(score.iter().all(|s| s.abs() < 1e-6));
        // Separated fits saturate to 0 or 1 in double precision.
        if !fit.separation {
            prop_assert!(fit.fitted.iter().all(|&q| q > 0.0 && q < 1.0));
        }
        prop_assert!(fit.hat.iter().all(|&h| (0.0..=1.0).contains(&h)));
        prop_assert!((fit.hat.iter().sum::<f64>() - p as f64).abs() < 1e-6);
        let cf = standardize(&fit, &x);
        prop_assert!(cf.delta.abs() <= 1.0);
        if let Ok(parts) = var_liu_parts(&fit, &x, d.y(), &cf) {
            prop_assert!(parts.covariate >= 0.0 && parts.total() >= parts.sandwich);
        }
    }

    #[test]
    fn flic_matches_mean_outcome(r in rows(12, 80)) {
        let Some(d) = dataset(&r) else { return Ok(()) };
        let Ok(x) = DesignMatrix::from_dataset(&d, &["X1", "X2"]) else { return Ok(()) };
        prop_assume!(x.check_rank().is_ok());
        let fit = fit_firth_flic(&x, d.y(), &FitOptions::default()).unwrap();
        prop_assume!(fit.converged && !fit.flic_unbounded);
        let mean_y = d.y().iter().map(|&v| v as f64).sum::<f64>() / d.n() as f64;
        let mean_p = fit.fitted.iter().sum::<f64>() / d.n() as f64;
        prop_assert!((mean_y - mean_p).abs() < 1e-8);
    }

    #[test]
    fn exact_p_value_symmetries(n1 in 1u64..15, n0 in 1u64..15, a in 0u64..15, b in 0u64..15) {
        let (k1, k0) = (a.min(n1), b.min(n0));
        let r = ss_test(k1, n1, k0, n0, 200).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.p_value) && (0.0..=1.0).contains(&r.theta_argsup));
        let swapped = ss_test(k0, n0, k1, n1, 200).unwrap().p_value;
        let flipped = ss_test(n1 - k1, n1, n0 - k0, n0, 200).unwrap().p_value;
        prop_assert!((r.p_value - swapped).abs() < 1e-12);
        prop_assert!((r.p_value - flipped).abs() < 1e-12);
    }

    #[test]
    fn mh_estimate_is_a_convex_combination(strata in prop::collection::vec(stratum(), 1..8)) {
        let t = StratumTable::new(strata.clone()).unwrap();
        let est = mh_rd_estimate(&t).unwrap();
        let d: Vec<f64> = strata.iter().map(|s| s.x1 as f64 / s.n1 as f64 - s.x0 as f64 / s.n0 as f64).collect();
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(est >= lo - 1e-12 && est <= hi + 1e-12);
        let mut rev = strata;
        rev.reverse();
        let t2 = StratumTable::new(rev).unwrap();
        prop_assert_eq!(mh_rd_estimate(&t2).unwrap(), est);
        if let (Ok(a), Ok(b)) = (mh_test(&t), mh_test(&t2)) {
            prop_assert_eq!(a.chi2, b.chi2);
            prop_assert!((a.p_value - chisq1_sf(a.chi2).unwrap()).abs() == 0.0);
        }
        for kind in [MhVariance::Sato, MhVariance::ModifiedGr] {
            let r = mh_rd(&t, kind, 0.05).unwrap();
            prop_assert!(r.ci.0 <= r.estimate && r.estimate <= r.ci.1);
            prop_assert_eq!(r.estimand, kind.estimand());
        }
    }

    #[test]
    fn zhang_statistic_monotone(delta in -0.9f64..0.9, var in 1e-4f64..0.05, n in 10usize..400, a in 0.0f64..0.5, b in 0.0f64..0.5) {
        let (near, far) = (a.min(b), a.max(b));
        prop_assume!(far > near + 1e-9);
        let c_near = zhang_score(delta, var, n, delta - near).unwrap().chi2;
        let c_far = zhang_score(delta, var, n, delta - far).unwrap().chi2;
        prop_assert!(c_far > c_near);
        prop_assert!(c_far < far * far / var);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn inference_records_are_coherent(r in rows(20, 60)) {
        let Some(d) = dataset(&r) else { return Ok(()) };
        let opts = InferOptions { boot_b: 50, ..InferOptions::default() };
        let flipped = d.relabel_arms();
        for m in Method::ALL {
            let cols: &[&str] = if m.accepts_covariates() { &["X1", "X2"] } else { &[] };
            let Ok(res) = infer(&d, cols, m, 0.05, &opts) else { continue };
            prop_assert_eq!(res.estimand, m.estimand());
            prop_assert!((0.0..=1.0).contains(&res.p_value));
            if let (Some((lo, hi)), Some(e)) = (res.ci, res.estimate) {
                prop_assert!(-1.0 <= lo && lo <= hi && hi <= 1.0);
                if m != Method::Zhang {
                    prop_assert!(lo <= e && e <= hi);
                    prop_assert_eq!(res.p_value < 0.05, lo > 0.0 || hi < 0.0);
                }
            }
            if m == Method::Boot || m == Method::Firth {
                continue;
            }
            if let (Ok(other), Some(e)) = (infer(&flipped, cols, m, 0.05, &opts), res.estimate) {
                // Iterative fits agree to their convergence tolerance.
                let tol = if m.uses_ml_fit() { 1e-6 } else { 1e-12 };
                let o = other.estimate.unwrap();
                prop_assert!((o + e).abs() < tol, "{} {} {}", m, e, o);
                if let (Some(a), Some(b)) = (other.se, res.se) {
                    prop_assert!((a - b).abs() < tol);
                }
            }
        }
    }
}
