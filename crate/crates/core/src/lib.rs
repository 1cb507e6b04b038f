//! Estimation and testing of marginal risk differences in two-arm randomized
//! trials with a binary endpoint.
//!
//! The crate is `no_std` (with `alloc`) and contains only pure computation:
//! special functions, logistic working models, the exact unconditional test,
//! Mantel-Haenszel methods, g-computation with its variance estimators, the
//! simulation data-generating process and the per-replicate harness logic.
//! File formats, threading and the command line live in the `riskdiff` crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod analysis;
pub mod error;
pub mod exact;
pub mod gcomp;
pub mod glm;
pub mod harness;
pub mod mh;
pub mod numerics;
pub mod rng;
pub mod simgen;
pub mod trialdata;

pub use analysis::{infer, Estimand, InferOptions, InferenceFlags, Method, RiskDiffInference};
pub use error::{Error, Result};
pub use trialdata::{Covariate, CovariateKind, Stratum, StratumTable, TrialDataset};
