//! Noise calibration: turning a privacy budget into Gaussian noise variances.
//!
//! Two routes are provided.
//!
//! * A closed-form whole-run rule for SGD, [`calibrate_sgd_noise`], which
//!   prices the entire run at its stated budget in one formula.
//! * A per-step accountant: [`per_step_budget`] inverts advanced composition
//!   to find the largest per-step budget whose `T`-fold composition stays
//!   within a stage budget, and [`calibrate_sgd_noise_steps`] /
//!   [`calibrate_spider_noise`] convert that per-step budget into noise
//!   variances through the Gaussian mechanism. Each calibration carries a
//!   ready-made ledger entry so runs can prove they fit their budget.
//!
//! Noise depends on the dataset size only through the batch sizes (the
//! sensitivities are `2L/b` for mean gradients and `2*beta*drift/b` for
//! mean gradient differences); callers that scale batches with `n` get the
//! usual `1/n` noise decay.

use crate::budget::{advanced_compose, CompositionRule, LedgerEntry, PrivacyBudget};
use crate::error::{Error, Result};
use crate::optimizers::SpiderConfig;

/// Variance of the Gaussian mechanism at sensitivity `delta_f`:
/// `sigma^2 = 2 ln(1.25/delta) delta_f^2 / epsilon^2`, valid for
/// `epsilon < 1`. Zero sensitivity needs no noise.
pub fn gaussian_sigma_sq(sensitivity: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if !(sensitivity >= 0.0) || !sensitivity.is_finite() {
        return Err(Error::invalid(format!(
            "sensitivity must be finite and >= 0, got {sensitivity}"
        )));
    }
    if sensitivity == 0.0 {
        return Ok(0.0);
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Calibration(format!(
            "the Gaussian mechanism bound needs epsilon in (0, 1), got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(2.0 * (1.25 / delta).ln() * sensitivity * sensitivity / (epsilon * epsilon))
}

/// Whole-run noise variance for projected noisy SGD:
/// `sigma^2 = 1000 L^2 T ln(1/delta) / (epsilon^2 n^2)`.
///
/// Zero Lipschitz constant means zero sensitivity and hence zero noise.
pub fn calibrate_sgd_noise(
    lipschitz: f64,
    iterations: usize,
    n: usize,
    budget: &PrivacyBudget,
) -> Result<f64> {
    if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
        return Err(Error::invalid(format!(
            "lipschitz must be finite and >= 0, got {lipschitz}"
        )));
    }
    if lipschitz == 0.0 {
        return Ok(0.0);
    }
    if iterations == 0 {
        return Err(Error::invalid("iteration count must be >= 1"));
    }
    if n == 0 {
        return Err(Error::invalid("dataset size must be >= 1"));
    }
    if !(budget.epsilon > 0.0) {
        return Err(Error::invalid(format!(
            "noise calibration needs epsilon > 0, got {}",
            budget.epsilon
        )));
    }
    if budget.delta <= 0.0 {
        return Err(Error::invalid("noise calibration needs delta > 0"));
    }
    let l2 = lipschitz * lipschitz;
    let t = iterations as f64;
    let nn = (n as f64) * (n as f64);
    Ok(1000.0 * l2 * t * (1.0 / budget.delta).ln() / (budget.epsilon * budget.epsilon * nn))
}

/// Step size `D / sqrt(T (L^2 + d sigma^2))` used with
/// [`calibrate_sgd_noise`].
pub fn prop_style_step_size(
    diameter: f64,
    iterations: usize,
    dim: usize,
    sigma_sq: f64,
    lipschitz: f64,
) -> Result<f64> {
    if !(diameter > 0.0) || !diameter.is_finite() {
        return Err(Error::invalid(format!(
            "diameter must be finite and > 0, got {diameter}"
        )));
    }
    if iterations == 0 || dim == 0 {
        return Err(Error::invalid(
            "step size needs iterations >= 1 and dim >= 1",
        ));
    }
    if !(sigma_sq >= 0.0) || !(lipschitz >= 0.0) {
        return Err(Error::invalid("sigma_sq and lipschitz must be >= 0"));
    }
    let denom = (iterations as f64) * (lipschitz * lipschitz + dim as f64 * sigma_sq);
    if denom <= 0.0 {
        return Err(Error::invalid(
            "step size undefined: L and sigma_sq are both zero",
        ));
    }
    Ok(diameter / denom.sqrt())
}

/// Per-step budget whose `steps`-fold advanced composition fits a stage
/// budget: `delta_prime = delta/2`, `delta0 = delta/(2 steps)`, and
/// `epsilon0` found by bisection (largest value in `(0, 1)` whose composed
/// total stays within the stage epsilon).
#[derive(Clone, Copy, Debug)]
pub struct PerStepBudget {
    pub epsilon0: f64,
    pub delta0: f64,
    pub delta_prime: f64,
    pub steps: u64,
}

impl PerStepBudget {
    pub fn per_step(&self) -> PrivacyBudget {
        PrivacyBudget::new(self.epsilon0, self.delta0)
            .expect("per-step budget is valid by construction")
    }

    /// Total spend after composing all steps.
    pub fn composed(&self) -> Result<PrivacyBudget> {
        advanced_compose(&self.per_step(), self.steps, self.delta_prime)
    }

    /// Ledger entry recording the per-step spend and the composition rule.
    pub fn entry(&self, stage: &str) -> LedgerEntry {
        LedgerEntry::new(
            stage,
            self.per_step(),
            CompositionRule::Advanced {
                steps: self.steps,
                delta_prime: self.delta_prime,
            },
        )
    }
}

/// Invert advanced composition: find the largest per-step epsilon in
/// `(0, 1)` whose composed total fits `stage`. Errors when the stage budget
/// is degenerate or so large that a sub-unit per-step epsilon cannot spend
/// it (the Gaussian mechanism needs per-step epsilon < 1).
pub fn per_step_budget(stage: &PrivacyBudget, steps: usize) -> Result<PerStepBudget> {
    if steps == 0 {
        return Err(Error::invalid("per-step budget needs at least one step"));
    }
    if !(stage.epsilon > 0.0) {
        return Err(Error::Calibration(
            "no finite noise achieves epsilon = 0; give the stage a positive epsilon".into(),
        ));
    }
    if stage.delta <= 0.0 {
        return Err(Error::Calibration(
            "per-step Gaussian noise needs a positive stage delta".into(),
        ));
    }
    let delta_prime = stage.delta / 2.0;
    let delta0 = stage.delta / (2.0 * steps as f64);
    let composed_eps = |eps0: f64| -> f64 {
        let t = steps as f64;
        (2.0 * t * (1.0 / delta_prime).ln()).sqrt() * eps0 + t * eps0 * (eps0.exp() - 1.0)
    };
    if composed_eps(1.0) <= stage.epsilon {
        return Err(Error::Calibration(format!(
            "stage budget epsilon = {} cannot be spent in {steps} steps with per-step epsilon < 1; \
             increase the step count or lower the stage budget",
            stage.epsilon
        )));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if composed_eps(mid) <= stage.epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(PerStepBudget {
        epsilon0: lo,
        delta0,
        delta_prime,
        steps: steps as u64,
    })
}

/// Per-step noise calibration for noisy SGD: mean-gradient sensitivity
/// `2L/b`, priced by [`per_step_budget`] and the Gaussian mechanism.
#[derive(Clone, Debug)]
pub struct SgdCalibration {
    pub sigma_sq: f64,
    pub per_step: PerStepBudget,
}

impl SgdCalibration {
    pub fn entry(&self, stage: &str) -> LedgerEntry {
        self.per_step.entry(stage)
    }
}

pub fn calibrate_sgd_noise_steps(
    lipschitz: f64,
    iterations: usize,
    batch: usize,
    n: usize,
    budget: &PrivacyBudget,
) -> Result<SgdCalibration> {
    if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
        return Err(Error::invalid(format!(
            "lipschitz must be finite and >= 0, got {lipschitz}"
        )));
    }
    if batch == 0 || batch > n {
        return Err(Error::invalid(format!(
            "batch size {batch} must lie in 1..={n}"
        )));
    }
    let per_step = per_step_budget(budget, iterations)?;
    let sigma_sq = gaussian_sigma_sq(
        2.0 * lipschitz / batch as f64,
        per_step.epsilon0,
        per_step.delta0,
    )?;
    Ok(SgdCalibration { sigma_sq, per_step })
}

/// Per-step noise calibration for the variance-reduced optimizer.
#[derive(Clone, Debug)]
pub struct SpiderCalibration {
    /// Refresh-step noise variance (sensitivity `2L/b1`).
    pub sigma1_sq: f64,
    /// Increment-step noise variance per unit drift (sensitivity
    /// `2 beta drift / b2`).
    pub sigma2_sq: f64,
    /// Cap on the increment variance. Finite only when the config projects
    /// onto a ball, in which case the drift can never exceed the ball's
    /// diameter.
    pub sigma2hat_sq: f64,
    pub per_step: PerStepBudget,
}

impl SpiderCalibration {
    pub fn entry(&self, stage: &str) -> LedgerEntry {
        self.per_step.entry(stage)
    }

    /// Copy the calibrated variances and ledger entry into a config.
    pub fn apply(&self, mut cfg: SpiderConfig, stage: &str) -> SpiderConfig {
        cfg.sigma1_sq = self.sigma1_sq;
        cfg.sigma2_sq = self.sigma2_sq;
        cfg.sigma2hat_sq = self.sigma2hat_sq;
        cfg.ledger_entry = Some(self.entry(stage));
        cfg
    }
}

pub fn calibrate_spider_noise(
    lipschitz: f64,
    smoothness: f64,
    cfg: &SpiderConfig,
    n: usize,
    budget: &PrivacyBudget,
) -> Result<SpiderCalibration> {
    for (name, v) in [("lipschitz", lipschitz), ("smoothness", smoothness)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!(
                "{name} must be finite and >= 0, got {v}"
            )));
        }
    }
    if cfg.iterations == 0 {
        return Err(Error::invalid("calibration needs at least one iteration"));
    }
    for (name, b) in [
        ("batch_full", cfg.batch_full),
        ("batch_increment", cfg.batch_increment),
    ] {
        if b == 0 || b > n {
            return Err(Error::invalid(format!("{name} = {b} must lie in 1..={n}")));
        }
    }
    if lipschitz > 0.0 && !(budget.epsilon > 0.0) {
        return Err(Error::Calibration(
            "no finite noise achieves epsilon = 0; give the stage a positive epsilon".into(),
        ));
    }
    let per_step = per_step_budget(budget, cfg.iterations)?;
    let sigma1_sq = gaussian_sigma_sq(
        2.0 * lipschitz / cfg.batch_full as f64,
        per_step.epsilon0,
        per_step.delta0,
    )?;
    let sigma2_sq = gaussian_sigma_sq(
        2.0 * smoothness / cfg.batch_increment as f64,
        per_step.epsilon0,
        per_step.delta0,
    )?;
    let sigma2hat_sq = match cfg.project_radius {
        // Both iterates live in the ball, so the drift is at most 2R.
        Some(r) => sigma2_sq * (2.0 * r) * (2.0 * r),
        None => f64::INFINITY,
    };
    Ok(SpiderCalibration {
        sigma1_sq,
        sigma2_sq,
        sigma2hat_sq,
        per_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budget::{verify_budget, SpendLedger};
    use approx::assert_abs_diff_eq;
    use ndarray::Array1;

    fn budget(eps: f64, delta: f64) -> PrivacyBudget {
        PrivacyBudget::new(eps, delta).unwrap()
    }

    fn spider_cfg(
        iterations: usize,
        q: usize,
        b1: usize,
        b2: usize,
        radius: Option<f64>,
    ) -> SpiderConfig {
        let mut cfg =
            SpiderConfig::new(iterations, q, b1, b2, 0.1, 0.0, 0.0, 0.0, Array1::zeros(3));
        cfg.project_radius = radius;
        cfg
    }

    #[test]
    fn closed_form_reproduces_the_unit_variance_case() {
        // L=1, T=100, ln(1/delta)=10, eps=1, n=1000:
        // 1000 * 1 * 100 * 10 / (1 * 10^6) = 1.
        let sigma_sq =
            calibrate_sgd_noise(1.0, 100, 1000, &budget(1.0, (-10.0_f64).exp())).unwrap();
        assert_abs_diff_eq!(sigma_sq, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_large_noise_case() {
        // L=5, T=50, n=100, delta=n^{-1.5}, eps=0.1:
        // 1000 * 25 * 50 * 1.5 ln(100) / (0.01 * 10^4) = 12500 * ln(100^1.5).
        let delta = (100.0_f64).powf(-1.5);
        let sigma_sq = calibrate_sgd_noise(5.0, 50, 100, &budget(0.1, delta)).unwrap();
        assert_abs_diff_eq!(sigma_sq, 86_346.940_987_276_72, epsilon = 1e-6);
    }

    #[test]
    fn closed_form_edge_cases() {
        assert_eq!(
            calibrate_sgd_noise(0.0, 100, 1000, &budget(1.0, 1e-5)).unwrap(),
            0.0
        );
        assert!(calibrate_sgd_noise(1.0, 100, 1000, &budget(1.0, 0.0)).is_err());
        assert!(calibrate_sgd_noise(1.0, 100, 1000, &budget(0.0, 1e-5)).is_err());
        assert!(calibrate_sgd_noise(1.0, 0, 1000, &budget(1.0, 1e-5)).is_err());
    }

    #[test]
    fn closed_form_scaling_laws() {
        let b = budget(1.0, 1e-6);
        let base = calibrate_sgd_noise(2.0, 50, 500, &b).unwrap();
        let n_doubled = calibrate_sgd_noise(2.0, 50, 1000, &b).unwrap();
        let t_doubled = calibrate_sgd_noise(2.0, 100, 500, &b).unwrap();
        assert_abs_diff_eq!(n_doubled / base, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(t_doubled / base, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_mechanism_variance_matches_hand_computation() {
        // sensitivity 1, eps 0.5, delta 0.25: sigma^2 = 2 ln(5) / 0.25.
        let sigma_sq = gaussian_sigma_sq(1.0, 0.5, 0.25).unwrap();
        assert_abs_diff_eq!(sigma_sq, 2.0 * 5.0_f64.ln() / 0.25, epsilon = 1e-12);
        assert_eq!(gaussian_sigma_sq(0.0, 0.5, 0.25).unwrap(), 0.0);
        assert!(matches!(
            gaussian_sigma_sq(1.0, 1.0, 0.25),
            Err(Error::Calibration(_))
        ));
        assert!(gaussian_sigma_sq(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn per_step_budget_composes_back_to_the_stage_budget() {
        let stage = budget(1.0, 1e-5);
        let per = per_step_budget(&stage, 50).unwrap();
        assert!(per.epsilon0 > 0.0 && per.epsilon0 < 1.0);
        assert_abs_diff_eq!(per.delta0, 1e-7, epsilon = 1e-20);
        assert_abs_diff_eq!(per.delta_prime, 5e-6, epsilon = 1e-20);
        let composed = per.composed().unwrap();
        assert!(composed.epsilon <= stage.epsilon);
        assert!(
            stage.epsilon - composed.epsilon < 1e-9,
            "bisection left slack: {}",
            composed.epsilon
        );
        assert_abs_diff_eq!(composed.delta, stage.delta, epsilon = 1e-20);
    }

    #[test]
    fn more_steps_mean_smaller_per_step_epsilon() {
        let stage = budget(1.0, 1e-5);
        let short = per_step_budget(&stage, 10).unwrap();
        let long = per_step_budget(&stage, 100).unwrap();
        assert!(long.epsilon0 < short.epsilon0);
    }

    #[test]
    fn oversized_stage_budget_is_a_calibration_error() {
        // Two steps at per-step epsilon < 1 cannot spend epsilon = 1000.
        match per_step_budget(&budget(1000.0, 1e-3), 2) {
            Err(Error::Calibration(msg)) => assert!(msg.contains("per-step epsilon < 1")),
            other => panic!("expected calibration error, got {other:?}"),
        }
    }

    #[test]
    fn zero_epsilon_is_a_calibration_error() {
        assert!(matches!(
            per_step_budget(&budget(0.0, 1e-5), 10),
            Err(Error::Calibration(_))
        ));
        let cfg = spider_cfg(10, 2, 100, 10, Some(2.0));
        assert!(matches!(
            calibrate_spider_noise(1.0, 1.0, &cfg, 100, &budget(0.0, 1e-5)),
            Err(Error::Calibration(_))
        ));
    }

    #[test]
    fn sgd_step_calibration_fits_its_stage_budget() {
        let stage = budget(0.5, 1e-6);
        let cal = calibrate_sgd_noise_steps(1.0, 25, 200, 200, &stage).unwrap();
        assert!(cal.sigma_sq > 0.0);
        let mut ledger = SpendLedger::new();
        ledger.push(cal.entry("sgd"));
        assert!(verify_budget(&ledger, &stage));
        // and the spend is essentially tight
        let total = ledger.total().unwrap();
        assert!(stage.epsilon - total.epsilon < 1e-9);
        assert_abs_diff_eq!(total.delta, stage.delta, epsilon = 1e-20);
    }

    #[test]
    fn sgd_step_noise_grows_with_step_count() {
        let stage = budget(0.5, 1e-6);
        let short = calibrate_sgd_noise_steps(1.0, 10, 100, 100, &stage).unwrap();
        let long = calibrate_sgd_noise_steps(1.0, 80, 100, 100, &stage).unwrap();
        assert!(long.sigma_sq > short.sigma_sq);
    }

    #[test]
    fn spider_calibration_fits_and_scales() {
        let stage = budget(1.0, 1e-5);
        let cfg = spider_cfg(30, 5, 1000, 100, Some(2.0));
        let cal = calibrate_spider_noise(1.0, 1.0, &cfg, 1000, &stage).unwrap();
        assert!(cal.sigma1_sq > 0.0 && cal.sigma2_sq > 0.0);
        // cap = sigma2^2 * (2R)^2 with R = 2
        assert_abs_diff_eq!(cal.sigma2hat_sq / cal.sigma2_sq, 16.0, epsilon = 1e-9);
        let mut ledger = SpendLedger::new();
        ledger.push(cal.entry("spider"));
        assert!(verify_budget(&ledger, &stage));

        // Doubling n with batches scaled alongside shrinks every variance.
        let cfg2 = spider_cfg(30, 5, 2000, 200, Some(2.0));
        let cal2 = calibrate_spider_noise(1.0, 1.0, &cfg2, 2000, &stage).unwrap();
        assert!(cal2.sigma1_sq < cal.sigma1_sq);
        assert!(cal2.sigma2_sq < cal.sigma2_sq);
        assert!(cal2.sigma2hat_sq < cal.sigma2hat_sq);
    }

    #[test]
    fn unprojected_spider_has_no_cap() {
        let cal = calibrate_spider_noise(
            1.0,
            1.0,
            &spider_cfg(10, 2, 100, 10, None),
            100,
            &budget(1.0, 1e-5),
        )
        .unwrap();
        assert!(cal.sigma2hat_sq.is_infinite());
    }

    #[test]
    fn step_size_formula() {
        // D=4, T=100, d=10, sigma^2=0.9, L=1: denom = 100*(1+9) = 1000.
        let eta = prop_style_step_size(4.0, 100, 10, 0.9, 1.0).unwrap();
        assert_abs_diff_eq!(eta, 4.0 / 1000.0_f64.sqrt(), epsilon = 1e-15);
        assert!(prop_style_step_size(4.0, 0, 10, 0.9, 1.0).is_err());
        assert!(prop_style_step_size(4.0, 100, 10, 0.0, 0.0).is_err());
    }

    #[test]
    fn calibration_errors_mention_batch_bounds() {
        let stage = budget(0.5, 1e-6);
        assert!(calibrate_sgd_noise_steps(1.0, 10, 0, 100, &stage).is_err());
        assert!(calibrate_sgd_noise_steps(1.0, 10, 101, 100, &stage).is_err());
        let cfg = spider_cfg(10, 2, 200, 10, None);
        assert!(calibrate_spider_noise(1.0, 1.0, &cfg, 100, &budget(1.0, 1e-5)).is_err());
    }
}
