//! Noisy first-order optimizers.
//!
//! Both optimizers walk `T` steps from `w_init`, add centered Gaussian noise
//! to their gradient estimates, optionally project every iterate onto a ball,
//! and output a uniformly chosen trace point (drawn after the loop from the
//! run's own stream).
//!
//! * [`dp_sgd`] — each step averages per-sample gradients over a minibatch
//!   and perturbs the mean with `N(0, sigma^2 I)`.
//! * [`dp_spider`] — variance-reduced: every `restart_period` steps it takes
//!   a fresh full estimate with noise `N(0, sigma1^2 I)`; in between it
//!   updates the running estimate with a minibatch gradient *difference*
//!   between consecutive iterates, whose noise scales with the drift
//!   `||w_t - w_{t-1}||` (variance `min(sigma2^2 drift^2, sigma2hat^2)`).
//!
//! Minibatches of size `b < n` are drawn uniformly with replacement; `b = n`
//! means an exact full-batch pass (every row once, no randomness). Zero
//! noise variance likewise consumes no random draws, so noiseless full-batch
//! runs of the two algorithms consume randomness identically and can be
//! compared bit for bit.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::budget::{LedgerEntry, SpendLedger};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::losses::LossModel;
use crate::rng::RngStream;

/// Tolerance for the projection invariant `||w|| <= radius`.
pub const PROJECTION_TOLERANCE: f64 = 1e-12;

/// Project onto the centered ball of the given radius by radial scaling;
/// points already inside are returned unchanged.
pub fn project_ball(w: ArrayView1<f64>, radius: f64) -> Array1<f64> {
    let mut out = w.to_owned();
    project_ball_mut(&mut out, radius);
    out
}

pub(crate) fn project_ball_mut(w: &mut Array1<f64>, radius: f64) {
    let norm = w.dot(w).sqrt();
    if norm > radius {
        *w *= radius / norm;
    }
}

/// Configuration for [`dp_sgd`].
///
/// `iterations = 0` is permitted and returns the initial point unchanged
/// (used by warm-start stages that spend their whole step budget elsewhere);
/// `step_size = 0` is likewise permitted and leaves every iterate at
/// `w_init`.
#[derive(Clone, Debug)]
pub struct SgdConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub step_size: f64,
    pub noise_variance: f64,
    pub w_init: Array1<f64>,
    pub project_radius: Option<f64>,
    /// Privacy spend this run's noise was calibrated for; copied into the
    /// run's ledger. Runs without an entry (e.g. noiseless diagnostics)
    /// produce an empty ledger.
    pub ledger_entry: Option<LedgerEntry>,
}

impl SgdConfig {
    pub fn new(
        iterations: usize,
        batch_size: usize,
        step_size: f64,
        noise_variance: f64,
        w_init: Array1<f64>,
    ) -> Self {
        SgdConfig {
            iterations,
            batch_size,
            step_size,
            noise_variance,
            w_init,
            project_radius: None,
            ledger_entry: None,
        }
    }

    pub fn with_projection(mut self, radius: f64) -> Self {
        self.project_radius = Some(radius);
        self
    }

    pub fn with_ledger_entry(mut self, entry: LedgerEntry) -> Self {
        self.ledger_entry = Some(entry);
        self
    }

    fn validate(&self, data: &Dataset) -> Result<()> {
        validate_common(
            self.batch_size,
            self.step_size,
            &[("noise_variance", self.noise_variance)],
            &self.w_init,
            self.project_radius,
            data,
        )
    }
}

/// Configuration for [`dp_spider`].
#[derive(Clone, Debug)]
pub struct SpiderConfig {
    pub iterations: usize,
    /// Steps between full gradient refreshes; step `t` is a refresh when
    /// `t % restart_period == 0`, so the first step always is. May exceed
    /// `iterations`, in which case only the initial refresh happens.
    pub restart_period: usize,
    /// Batch size of refresh steps.
    pub batch_full: usize,
    /// Batch size of increment steps.
    pub batch_increment: usize,
    pub step_size: f64,
    /// Noise variance of refresh steps.
    pub sigma1_sq: f64,
    /// Per-unit-drift noise variance of increment steps.
    pub sigma2_sq: f64,
    /// Cap on the increment noise variance; `f64::INFINITY` disables the cap.
    pub sigma2hat_sq: f64,
    pub w_init: Array1<f64>,
    pub project_radius: Option<f64>,
    /// See [`SgdConfig::ledger_entry`].
    pub ledger_entry: Option<LedgerEntry>,
}

impl SpiderConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        iterations: usize,
        restart_period: usize,
        batch_full: usize,
        batch_increment: usize,
        step_size: f64,
        sigma1_sq: f64,
        sigma2_sq: f64,
        sigma2hat_sq: f64,
        w_init: Array1<f64>,
    ) -> Self {
        SpiderConfig {
            iterations,
            restart_period,
            batch_full,
            batch_increment,
            step_size,
            sigma1_sq,
            sigma2_sq,
            sigma2hat_sq,
            w_init,
            project_radius: None,
            ledger_entry: None,
        }
    }

    pub fn with_projection(mut self, radius: f64) -> Self {
        self.project_radius = Some(radius);
        self
    }

    pub fn with_ledger_entry(mut self, entry: LedgerEntry) -> Self {
        self.ledger_entry = Some(entry);
        self
    }

    fn validate(&self, data: &Dataset) -> Result<()> {
        if self.restart_period == 0 {
            return Err(Error::Config("restart period must be >= 1".into()));
        }
        if self.batch_increment == 0 || self.batch_increment > data.len() {
            return Err(Error::Config(format!(
                "increment batch size {} must lie in 1..={}",
                self.batch_increment,
                data.len()
            )));
        }
        for (name, v) in [
            ("sigma2_sq", self.sigma2_sq),
            ("sigma2hat_sq", self.sigma2hat_sq),
        ] {
            if v < 0.0 || v.is_nan() {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        validate_common(
            self.batch_full,
            self.step_size,
            &[("sigma1_sq", self.sigma1_sq)],
            &self.w_init,
            self.project_radius,
            data,
        )
    }
}

fn validate_common(
    batch_size: usize,
    step_size: f64,
    variances: &[(&str, f64)],
    w_init: &Array1<f64>,
    project_radius: Option<f64>,
    data: &Dataset,
) -> Result<()> {
    if batch_size == 0 || batch_size > data.len() {
        return Err(Error::Config(format!(
            "batch size {batch_size} must lie in 1..={}",
            data.len()
        )));
    }
    if !(step_size >= 0.0) || !step_size.is_finite() {
        return Err(Error::Config(format!(
            "step size must be finite and >= 0, got {step_size}"
        )));
    }
    for (name, v) in variances {
        if *v < 0.0 || v.is_nan() || (v.is_infinite() && *name != "sigma2hat_sq") {
            return Err(Error::Config(format!(
                "{name} must be finite and >= 0, got {v}"
            )));
        }
    }
    if w_init.len() != data.dim() {
        return Err(Error::Config(format!(
            "w_init has dimension {}, data has {}",
            w_init.len(),
            data.dim()
        )));
    }
    if w_init.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("w_init must be finite".into()));
    }
    if let Some(r) = project_radius {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Config(format!(
                "projection radius must be > 0, got {r}"
            )));
        }
    }
    Ok(())
}

/// How a run's output was chosen from its trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Uniformly random trace index, drawn after the loop.
    UniformIterate { index: usize },
    /// The final iterate (used by zero-step runs).
    Last,
    /// Winner of an exponential-mechanism selection among candidates.
    ExpMechWinner { index: usize },
}

/// Gradient-norm callback for [`RunRecord::trace_csv`].
pub type GradProbe<'a> = &'a dyn Fn(ArrayView1<f64>) -> f64;

/// The full history of one optimizer run.
///
/// `trace` holds the (projected) initial point followed by each post-step
/// iterate, so it has `iterations + 1` entries; `output` is always an element
/// of the trace (or the warm-start point for zero-step runs, which is the
/// same thing). `ledger` records the privacy spend the run's noise was
/// calibrated for.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub trace: Vec<Array1<f64>>,
    pub output: Array1<f64>,
    pub selection: Selection,
    pub ledger: SpendLedger,
}

impl RunRecord {
    /// CSV form of the trace: `step,grad_norm,iterate_norm`, with the
    /// gradient column filled by the optional probe.
    pub fn trace_csv(&self, grad_probe: Option<GradProbe>) -> String {
        let mut out = String::from("step,grad_norm,iterate_norm\n");
        for (t, w) in self.trace.iter().enumerate() {
            let norm = w.dot(w).sqrt();
            match grad_probe {
                Some(p) => out.push_str(&format!("{t},{},{norm}\n", p(w.view()))),
                None => out.push_str(&format!("{t},,{norm}\n")),
            }
        }
        out
    }

    fn from_trace(
        trace: Vec<Array1<f64>>,
        rng: &mut impl Rng,
        ledger_entry: &Option<LedgerEntry>,
    ) -> Self {
        let (selection, output) = if trace.len() == 1 {
            (Selection::Last, trace[0].clone())
        } else {
            let index = rng.random_range(0..trace.len());
            (Selection::UniformIterate { index }, trace[index].clone())
        };
        let mut ledger = SpendLedger::new();
        if let Some(entry) = ledger_entry {
            ledger.push(entry.clone());
        }
        RunRecord {
            trace,
            output,
            selection,
            ledger,
        }
    }
}

/// Mean gradient over a minibatch, written into `out`. `b == n` performs an
/// exact full-batch pass with no random draws; otherwise `b` rows are drawn
/// uniformly with replacement.
fn batch_mean_grad(
    loss: &LossModel,
    data: &Dataset,
    batch: usize,
    w: ArrayView1<f64>,
    out: &mut Array1<f64>,
    rng: &mut impl Rng,
) -> Result<()> {
    out.fill(0.0);
    let n = data.len();
    let coeff = 1.0 / batch as f64;
    if batch == n {
        for i in 0..n {
            loss.add_sample_grad(w, data.row(i), data.label(i), coeff, out)?;
        }
    } else {
        for _ in 0..batch {
            let i = rng.random_range(0..n);
            loss.add_sample_grad(w, data.row(i), data.label(i), coeff, out)?;
        }
    }
    Ok(())
}

/// Add `N(0, variance I)` to `v`; zero variance adds nothing and consumes no
/// randomness.
fn add_gaussian_noise(v: &mut Array1<f64>, variance: f64, rng: &mut impl Rng) {
    if variance > 0.0 {
        let sigma = variance.sqrt();
        for x in v.iter_mut() {
            *x += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// Increment-step noise variance: `min(sigma2_sq * drift^2, sigma2hat_sq)`.
pub fn increment_noise_variance(sigma2_sq: f64, sigma2hat_sq: f64, drift: f64) -> f64 {
    (sigma2_sq * drift * drift).min(sigma2hat_sq)
}

fn step_update(
    w: &mut Array1<f64>,
    grad: &Array1<f64>,
    step_size: f64,
    project_radius: Option<f64>,
    step: usize,
) -> Result<()> {
    w.scaled_add(-step_size, grad);
    if let Some(radius) = project_radius {
        project_ball_mut(w, radius);
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { step });
    }
    Ok(())
}

/// Noisy minibatch SGD. Deterministic given `(loss, data, cfg, rng)`.
pub fn dp_sgd(
    loss: &LossModel,
    data: &Dataset,
    cfg: &SgdConfig,
    rng: &RngStream,
) -> Result<RunRecord> {
    loss.check_data(data)?;
    cfg.validate(data)?;
    let mut r = rng.rng();
    let mut w = cfg.w_init.clone();
    if let Some(radius) = cfg.project_radius {
        project_ball_mut(&mut w, radius);
    }
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    trace.push(w.clone());
    let mut grad = Array1::zeros(data.dim());
    for t in 1..=cfg.iterations {
        batch_mean_grad(loss, data, cfg.batch_size, w.view(), &mut grad, &mut r)?;
        add_gaussian_noise(&mut grad, cfg.noise_variance, &mut r);
        step_update(&mut w, &grad, cfg.step_size, cfg.project_radius, t)?;
        trace.push(w.clone());
    }
    Ok(RunRecord::from_trace(trace, &mut r, &cfg.ledger_entry))
}

/// Noisy SPIDER: full gradient estimates on refresh steps, drift-scaled
/// gradient differences in between. Deterministic given
/// `(loss, data, cfg, rng)`.
pub fn dp_spider(
    loss: &LossModel,
    data: &Dataset,
    cfg: &SpiderConfig,
    rng: &RngStream,
) -> Result<RunRecord> {
    loss.check_data(data)?;
    cfg.validate(data)?;
    let mut r = rng.rng();
    let n = data.len();
    let d = data.dim();
    let mut w = cfg.w_init.clone();
    if let Some(radius) = cfg.project_radius {
        project_ball_mut(&mut w, radius);
    }
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    trace.push(w.clone());

    let mut w_prev: Array1<f64> = w.clone();
    let mut grad_est: Array1<f64> = Array1::zeros(d);
    let mut delta: Array1<f64> = Array1::zeros(d);
    for t in 0..cfg.iterations {
        if t % cfg.restart_period == 0 {
            batch_mean_grad(loss, data, cfg.batch_full, w.view(), &mut grad_est, &mut r)?;
            add_gaussian_noise(&mut grad_est, cfg.sigma1_sq, &mut r);
        } else {
            let drift = {
                let diff = &w - &w_prev;
                diff.dot(&diff).sqrt()
            };
            // Gradient difference over one shared batch for both iterates.
            delta.fill(0.0);
            let coeff = 1.0 / cfg.batch_increment as f64;
            if cfg.batch_increment == n {
                for i in 0..n {
                    loss.add_sample_grad(w.view(), data.row(i), data.label(i), coeff, &mut delta)?;
                    loss.add_sample_grad(
                        w_prev.view(),
                        data.row(i),
                        data.label(i),
                        -coeff,
                        &mut delta,
                    )?;
                }
            } else {
                for _ in 0..cfg.batch_increment {
                    let i = r.random_range(0..n);
                    loss.add_sample_grad(w.view(), data.row(i), data.label(i), coeff, &mut delta)?;
                    loss.add_sample_grad(
                        w_prev.view(),
                        data.row(i),
                        data.label(i),
                        -coeff,
                        &mut delta,
                    )?;
                }
            }
            let variance = increment_noise_variance(cfg.sigma2_sq, cfg.sigma2hat_sq, drift);
            add_gaussian_noise(&mut delta, variance, &mut r);
            grad_est += &delta;
        }
        w_prev.assign(&w);
        step_update(&mut w, &grad_est, cfg.step_size, cfg.project_radius, t + 1)?;
        trace.push(w.clone());
    }
    Ok(RunRecord::from_trace(trace, &mut r, &cfg.ledger_entry))
}
