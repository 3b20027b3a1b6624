//! Numerical certification of claimed function-class constants.
//!
//! Each condition is checked by sampling points (or point pairs) uniformly
//! from the ball of a given radius and evaluating the defining inequality
//! directly:
//!
//! * `lipschitz` — `|f(w,x) - f(w',x)| <= L ||w - w'||` for every sample x;
//! * `smooth` — `||grad f(w,x) - grad f(w',x)|| <= beta ||w - w'||` for every
//!   sample x;
//! * `quasar` — `F(w*) >= F(w) + (1/q) <grad F(w), w* - w>` for the empirical
//!   mean loss F and a supplied or analytic minimizer `w*`;
//! * `kl` — `F(w) - F* <= gamma^k ||grad F(w)||^k`.
//!
//! A report records the worst violation margin (signed residual beyond the
//! tolerance); sampling cannot prove a claim, but a failure is a concrete
//! counterexample. The default tolerance absorbs floating-point noise only.

use ndarray::{Array1, ArrayView1};

use crate::dataset::{unit_ball_point, Dataset};
use crate::error::{Error, Result};
use crate::losses::{EmpiricalLoss, LossModel, Objective};
use crate::rng::RngStream;

/// Residuals larger than this count as violations.
pub const CERTIFY_TOLERANCE: f64 = 1e-8;

/// The conditions [`certify`] can check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Condition {
    Lipschitz,
    Smooth,
    Quasar,
    Kl,
}

impl Condition {
    pub fn name(&self) -> &'static str {
        match self {
            Condition::Lipschitz => "lipschitz",
            Condition::Smooth => "smooth",
            Condition::Quasar => "quasar",
            Condition::Kl => "kl",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "lipschitz" => Ok(Condition::Lipschitz),
            "smooth" => Ok(Condition::Smooth),
            "quasar" => Ok(Condition::Quasar),
            "kl" => Ok(Condition::Kl),
            _ => Err(Error::invalid(format!(
                "unknown condition {name:?}; expected lipschitz, smooth, quasar, or kl"
            ))),
        }
    }
}

/// Outcome of a certification run.
///
/// `worst_violation` is `max(LHS - RHS) - tolerance` over all sampled
/// points/pairs; `pass` holds exactly when it is <= 0, i.e. no sampled
/// residual exceeded the tolerance.
#[derive(Clone, Debug)]
pub struct CertificationReport {
    pub condition: Condition,
    pub claimed: Vec<(String, f64)>,
    pub n_samples: usize,
    pub worst_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CertificationReport {
    fn from_residuals(
        condition: Condition,
        claimed: Vec<(String, f64)>,
        n_samples: usize,
        worst_residual: f64,
    ) -> Self {
        let worst_violation = worst_residual - CERTIFY_TOLERANCE;
        CertificationReport {
            condition,
            claimed,
            n_samples,
            worst_violation,
            tolerance: CERTIFY_TOLERANCE,
            pass: worst_violation <= 0.0,
        }
    }

    /// One-line human-readable summary.
    pub fn summary(&self) -> String {
        let claimed: Vec<String> = self
            .claimed
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!(
            "{}: {} ({}; samples={}, worst violation margin={:.3e})",
            self.condition.name(),
            if self.pass { "pass" } else { "FAIL" },
            claimed.join(", "),
            self.n_samples,
            self.worst_violation,
        )
    }
}

fn check_radius_and_samples(region_radius: f64, n_samples: usize) -> Result<()> {
    if !(region_radius > 0.0) || !region_radius.is_finite() {
        return Err(Error::invalid(format!(
            "region radius must be finite and > 0, got {region_radius}"
        )));
    }
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be >= 1"));
    }
    Ok(())
}

/// Check the condition claimed in `loss.metadata` on the ball of radius
/// `region_radius`, using `n_samples` sampled points or pairs.
///
/// The pairwise conditions (`lipschitz`, `smooth`) are checked per sample:
/// the reported residual for a pair is the worst over all rows of `data`.
/// The pointwise conditions (`quasar`, `kl`) apply to the empirical mean
/// loss and need a minimizer: pass one explicitly or rely on the loss's
/// analytic minimizer.
pub fn certify(
    loss: &LossModel,
    data: &Dataset,
    condition: Condition,
    region_radius: f64,
    n_samples: usize,
    rng: &RngStream,
    minimizer: Option<ArrayView1<f64>>,
) -> Result<CertificationReport> {
    check_radius_and_samples(region_radius, n_samples)?;
    loss.check_data(data)?;
    let d = data.dim();
    match condition {
        Condition::Lipschitz => {
            let l = loss.metadata.lipschitz;
            let mut r = rng.rng();
            let mut worst = f64::NEG_INFINITY;
            for _ in 0..n_samples {
                let w = unit_ball_point(d, &mut r) * region_radius;
                let w2 = unit_ball_point(d, &mut r) * region_radius;
                let dist = {
                    let diff = &w - &w2;
                    diff.dot(&diff).sqrt()
                };
                for i in 0..data.len() {
                    let fv = loss.sample_value(w.view(), data.row(i), data.label(i))?;
                    let fv2 = loss.sample_value(w2.view(), data.row(i), data.label(i))?;
                    worst = worst.max((fv - fv2).abs() - l * dist);
                }
            }
            Ok(CertificationReport::from_residuals(
                condition,
                vec![("L".into(), l)],
                n_samples,
                worst,
            ))
        }
        Condition::Smooth => {
            let beta = loss.metadata.smoothness;
            let mut r = rng.rng();
            let mut worst = f64::NEG_INFINITY;
            for _ in 0..n_samples {
                let w = unit_ball_point(d, &mut r) * region_radius;
                let w2 = unit_ball_point(d, &mut r) * region_radius;
                let dist = {
                    let diff = &w - &w2;
                    diff.dot(&diff).sqrt()
                };
                for i in 0..data.len() {
                    let g = loss.sample_grad(w.view(), data.row(i), data.label(i))?;
                    let g2 = loss.sample_grad(w2.view(), data.row(i), data.label(i))?;
                    let diff = &g - &g2;
                    worst = worst.max(diff.dot(&diff).sqrt() - beta * dist);
                }
            }
            Ok(CertificationReport::from_residuals(
                condition,
                vec![("beta".into(), beta)],
                n_samples,
                worst,
            ))
        }
        Condition::Quasar => {
            let q = loss
                .metadata
                .quasar
                .ok_or_else(|| Error::invalid("metadata claims no quasar parameter to certify"))?;
            let w_star = resolve_minimizer(loss, data, minimizer)?;
            let obj = EmpiricalLoss::new(loss, data)?;
            certify_quasar_obj(&obj, q, w_star.view(), region_radius, n_samples, rng)
        }
        Condition::Kl => {
            let (gamma, k) = loss
                .metadata
                .kl
                .ok_or_else(|| Error::invalid("metadata claims no KL pair to certify"))?;
            let w_star = resolve_minimizer(loss, data, minimizer)?;
            let obj = EmpiricalLoss::new(loss, data)?;
            let inf_value = obj.value(w_star.view());
            certify_kl_obj(&obj, gamma, k, inf_value, region_radius, n_samples, rng)
        }
    }
}

fn resolve_minimizer(
    loss: &LossModel,
    data: &Dataset,
    minimizer: Option<ArrayView1<f64>>,
) -> Result<Array1<f64>> {
    match minimizer {
        Some(w) => Ok(w.to_owned()),
        None => loss.analytic_minimizer(data).ok_or_else(|| {
            Error::invalid(format!(
                "loss {} has no analytic minimizer; pass one explicitly",
                loss.kind.name()
            ))
        }),
    }
}

/// Quasar-convexity check for an arbitrary objective: at sampled points `w`,
/// `F(w*) >= F(w) + (1/q) <grad F(w), w* - w>`.
pub fn certify_quasar_obj(
    obj: &impl Objective,
    q: f64,
    minimizer: ArrayView1<f64>,
    region_radius: f64,
    n_samples: usize,
    rng: &RngStream,
) -> Result<CertificationReport> {
    check_radius_and_samples(region_radius, n_samples)?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!(
            "quasar parameter must lie in (0,1], got {q}"
        )));
    }
    let f_star = obj.value(minimizer);
    let mut r = rng.rng();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n_samples {
        let w = unit_ball_point(obj.dim(), &mut r) * region_radius;
        let f = obj.value(w.view());
        let g = obj.gradient(w.view());
        let dir = &minimizer.to_owned() - &w;
        worst = worst.max(f + g.dot(&dir) / q - f_star);
    }
    Ok(CertificationReport::from_residuals(
        Condition::Quasar,
        vec![("q".into(), q)],
        n_samples,
        worst,
    ))
}

/// Kurdyka-Lojasiewicz check for an arbitrary objective: at sampled points,
/// `F(w) - inf F <= gamma^k ||grad F(w)||^k`.
pub fn certify_kl_obj(
    obj: &impl Objective,
    gamma: f64,
    k: f64,
    inf_value: f64,
    region_radius: f64,
    n_samples: usize,
    rng: &RngStream,
) -> Result<CertificationReport> {
    check_radius_and_samples(region_radius, n_samples)?;
    if !(gamma > 0.0) || !(1.0..=2.0).contains(&k) {
        return Err(Error::invalid(format!(
            "KL pair must satisfy gamma > 0 and k in [1,2], got ({gamma}, {k})"
        )));
    }
    let mut r = rng.rng();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n_samples {
        let w = unit_ball_point(obj.dim(), &mut r) * region_radius;
        let f = obj.value(w.view());
        let g = obj.gradient(w.view());
        let gnorm = g.dot(&g).sqrt();
        worst = worst.max(f - inf_value - gamma.powf(k) * gnorm.powf(k));
    }
    Ok(CertificationReport::from_residuals(
        Condition::Kl,
        vec![("gamma".into(), gamma), ("k".into(), k)],
        n_samples,
        worst,
    ))
}
