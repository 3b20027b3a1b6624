//! Differentially private non-convex optimization with a two-stage
//! warm-start pipeline, plus the benchmark harness that measures it.
//!
//! The crate is organized bottom-up:
//!
//! - [`rng`]: seeded, forkable random streams so every run is replayable;
//! - [`dataset`] and [`losses`]: unit-ball data, the benchmark losses, and
//!   their empirical objectives;
//! - [`certify`]: sampling-based checks that a loss's declared constants
//!   (Lipschitz, smoothness, and structure conditions) actually hold;
//! - [`budget`]: (epsilon, delta) arithmetic, composition rules, and the
//!   spend ledger every optimizer run carries;
//! - [`net`] and [`exp_mech`]: candidate grids over the feasible ball and
//!   exponential-mechanism selection;
//! - [`optimizers`]: noisy projected SGD and the variance-reduced
//!   stochastic-path optimizer;
//! - [`calibrate`]: noise levels from privacy budgets, including the
//!   per-step accountant used by the harness;
//! - [`warm_start`]: the two-stage pipeline (cheap private warm start, then
//!   a stationary-point finisher) and confidence boosting;
//! - [`eval`]: gradient norms, second-order stationarity checks, and
//!   optimality-gap estimates;
//! - [`experiment`]: the benchmark, grid search, and scaling sweep.
//!
//! Every randomized routine takes an explicit [`rng::RngStream`], and every
//! private routine returns its privacy spend in a [`budget::SpendLedger`]
//! that can be verified against the declared budget.

// Validation guards are written `!(x >= 0.0)` on purpose: unlike `x < 0.0`,
// the negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod budget;
pub mod calibrate;
pub mod certify;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exp_mech;
pub mod experiment;
pub mod losses;
pub mod net;
pub mod optimizers;
pub mod rng;
pub mod warm_start;

pub use budget::{
    advanced_compose, basic_compose, verify_budget, CompositionRule, LedgerEntry, PrivacyBudget,
    SpendLedger,
};
pub use calibrate::{
    calibrate_sgd_noise, calibrate_sgd_noise_steps, calibrate_spider_noise, gaussian_sigma_sq,
    per_step_budget, prop_style_step_size, PerStepBudget, SgdCalibration, SpiderCalibration,
};
pub use certify::{certify, CertificationReport, Condition};
pub use dataset::{sample_unit_ball, Dataset};
pub use error::{Error, Result};
pub use eval::{
    gap_estimate, grad_norm, sosp_check, sosp_check_obj, EvalReport, GapReference, SospReport,
};
pub use exp_mech::{exp_mech_probabilities, exp_mech_sample, exp_mech_sample_with};
pub use experiment::{
    grid_search, run_experiment, summarize, sweep_scaling, Algorithm, DeltaRule, ExperimentConfig,
    ExperimentResults, GridSelection, HyperGrid, HyperOverrides, ResultRow, SummaryRow,
    SweepConfig, SweepReport, TunedHypers,
};
pub use losses::{finite_diff_grad, EmpiricalLoss, LossKind, LossMetadata, LossModel, Objective};
pub use net::{build_net, CandidateNet};
pub use optimizers::{
    dp_sgd, dp_spider, project_ball, RunRecord, Selection, SgdConfig, SpiderConfig,
};
pub use rng::RngStream;
pub use warm_start::{
    boost_confidence, boost_run_count, exp_mech_warm_start, warm_start, BoostResult, BudgetSplit,
    FinishStage, WarmStage,
};
