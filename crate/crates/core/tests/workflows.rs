//! Cross-module workflows: calibrate → optimize → evaluate pipelines and
//! property tests for the contracts the modules share.

use approx::assert_abs_diff_eq;
use ndarray::Array1;
use proptest::prelude::*;

use dpopt_core::{
    advanced_compose, calibrate_sgd_noise, dp_sgd, exp_mech_probabilities, gap_estimate, grad_norm,
    project_ball, prop_style_step_size, sample_unit_ball, sosp_check, verify_budget, warm_start,
    BudgetSplit, FinishStage, GapReference, LossModel, PrivacyBudget, RngStream, SgdConfig,
    SpiderConfig, WarmStage,
};

/// Closed-form calibration, the step-size rule, and the analytic gap,
/// chained: doubling the sample count must shrink the mean optimality gap,
/// because the calibrated noise falls roughly as 1/n^2.
#[test]
fn doubling_n_shrinks_the_mean_gap() {
    let loss = LossModel::quadratic_pl();
    let meta = loss.metadata;
    let iterations = 50;
    let dim = 2;
    let seeds = 20;
    let mean_gap = |n: usize| -> f64 {
        let delta = (n as f64).powf(-1.5);
        let budget = PrivacyBudget::new(1.0, delta).unwrap();
        let sigma_sq = calibrate_sgd_noise(meta.lipschitz, iterations, n, &budget).unwrap();
        let eta =
            prop_style_step_size(meta.diameter, iterations, dim, sigma_sq, meta.lipschitz).unwrap();
        let mut total = 0.0;
        for seed in 0..seeds {
            let stream = RngStream::new(5000 + seed, 0);
            let data = sample_unit_ball(dim, n, &stream).unwrap();
            let cfg = SgdConfig::new(iterations, n, eta, sigma_sq, Array1::zeros(dim))
                .with_projection(meta.diameter / 2.0);
            let record = dp_sgd(&loss, &data, &cfg, &stream.substream(1)).unwrap();
            total +=
                gap_estimate(&loss, &data, record.output.view(), GapReference::Analytic).unwrap();
        }
        total / seeds as f64
    };
    let small = mean_gap(2000);
    let large = mean_gap(4000);
    assert!(
        large < small,
        "mean gap should fall when n doubles: n=2000 gives {small}, n=4000 gives {large}"
    );
}

/// Full pipeline: split a budget, calibrate both stages, run the two-stage
/// optimizer, then evaluate the output — the ledger must verify and every
/// evaluation must be finite.
#[test]
fn end_to_end_two_stage_run_evaluates_cleanly() {
    let loss = LossModel::sine_bowl();
    let n = 200;
    let dim = 10;
    let delta = (n as f64).powf(-1.5);
    let budget = PrivacyBudget::new(2.0, delta).unwrap();
    let split = BudgetSplit::even(&budget).unwrap();
    let stream = RngStream::new(41, 0);
    let data = sample_unit_ball(dim, n, &stream).unwrap();

    let a_cal =
        dpopt_core::calibrate_sgd_noise_steps(loss.metadata.lipschitz, 10, n, n, &split.stage_a)
            .unwrap();
    let a_cfg = SgdConfig::new(10, n, 0.01, a_cal.sigma_sq, Array1::zeros(dim))
        .with_projection(2.0)
        .with_ledger_entry(a_cal.entry("warm:sgd"));
    let b_cfg = SpiderConfig::new(10, 5, n, n, 0.01, 0.0, 0.0, 0.0, Array1::zeros(dim))
        .with_projection(2.0);
    let b_cal = dpopt_core::calibrate_spider_noise(
        loss.metadata.lipschitz,
        loss.metadata.smoothness,
        &b_cfg,
        n,
        &split.stage_b,
    )
    .unwrap();
    let b_cfg = b_cal.apply(b_cfg, "finish:spider");

    let record = warm_start(
        &loss,
        &data,
        &WarmStage::Sgd(a_cfg),
        &FinishStage::Spider(b_cfg),
        &split,
        &budget,
        &stream.substream(9),
    )
    .unwrap();

    assert!(verify_budget(&record.ledger, &budget));
    assert_eq!(record.ledger.entries().len(), 2);

    let gn = grad_norm(&loss, &data, record.output.view()).unwrap();
    assert!(gn.is_finite());
    let report = sosp_check(&loss, &data, record.output.view(), 1.0, 6.0).unwrap();
    assert!(report.grad_norm.is_finite());
    assert_abs_diff_eq!(report.grad_norm, gn, epsilon = 1e-12);
    let gap = gap_estimate(
        &loss,
        &data,
        record.output.view(),
        GapReference::Trace(&record.trace),
    )
    .unwrap();
    assert!(gap.is_finite());
    // the output is drawn from the trace, so it can never beat the best
    // trace point by more than rounding
    assert!(gap >= -1e-12);
}

proptest! {
    /// Fractional splits must partition the global budget exactly.
    #[test]
    fn split_fraction_partitions_the_budget(
        epsilon in 0.01f64..5.0,
        delta in 1e-9f64..0.1,
        frac in 0.01f64..0.99,
    ) {
        let global = PrivacyBudget::new(epsilon, delta).unwrap();
        let split = BudgetSplit::epsilon_fraction(&global, frac).unwrap();
        prop_assert!(split.stage_a.epsilon > 0.0);
        prop_assert!(split.stage_b.epsilon > 0.0);
        let total = split.total().unwrap();
        prop_assert!((total.epsilon - epsilon).abs() <= 1e-12 * epsilon.max(1.0));
        prop_assert!((total.delta - delta).abs() <= 1e-12 * delta.max(1.0));
        prop_assert!(total.fits_within(&PrivacyBudget::new(epsilon * (1.0 + 1e-9), delta * (1.0 + 1e-9)).unwrap()));
    }

    /// Projection always lands inside the ball, never moves interior
    /// points, and is idempotent.
    #[test]
    fn projection_contract(
        coords in prop::collection::vec(-10.0f64..10.0, 1..8),
        radius in 0.1f64..5.0,
    ) {
        let w = Array1::from(coords);
        let p = project_ball(w.view(), radius);
        let norm = p.dot(&p).sqrt();
        prop_assert!(norm <= radius * (1.0 + 1e-12) + 1e-12);
        let original = w.dot(&w).sqrt();
        if original <= radius {
            prop_assert_eq!(&p, &w);
        }
        let twice = project_ball(p.view(), radius);
        for (a, b) in p.iter().zip(twice.iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    /// Selection probabilities are a distribution and depend on scores only
    /// through their differences.
    #[test]
    fn exp_mech_probabilities_shift_invariant(
        scores in prop::collection::vec(-5.0f64..5.0, 1..8),
        shift in -10.0f64..10.0,
        sensitivity in 0.01f64..5.0,
        epsilon in 0.01f64..3.0,
    ) {
        let probs = exp_mech_probabilities(&scores, sensitivity, epsilon).unwrap();
        let total: f64 = probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let probs_shifted = exp_mech_probabilities(&shifted, sensitivity, epsilon).unwrap();
        for (a, b) in probs.iter().zip(&probs_shifted) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    /// Composed budgets only grow as steps accumulate.
    #[test]
    fn advanced_composition_grows_with_steps(
        eps0 in 0.001f64..0.2,
        delta0 in 1e-10f64..1e-4,
        steps in 1u64..200,
    ) {
        let per_step = PrivacyBudget::new(eps0, delta0).unwrap();
        let now = advanced_compose(&per_step, steps, 1e-6).unwrap();
        let next = advanced_compose(&per_step, steps + 1, 1e-6).unwrap();
        prop_assert!(next.epsilon >= now.epsilon);
        prop_assert!(next.delta >= now.delta);
        // and one step is never cheaper than the per-step budget itself
        let one = advanced_compose(&per_step, 1, 1e-6).unwrap();
        prop_assert!(one.epsilon >= eps0);
        prop_assert!(one.delta >= delta0);
    }
}
