//! Benchmark harness: the synthetic gradient-norm experiment, hyperparameter
//! grid search, and the privacy-cost scaling sweep.
//!
//! The main experiment compares three algorithms at several privacy levels
//! on freshly drawn unit-ball data: noisy SGD and the variance-reduced
//! optimizer as baselines (100 iterations each), and the two-stage
//! warm-start combination constrained to 50 total iterations with the
//! epsilon budget split across its stages. Every run's noise comes from the
//! per-step accountant, every run carries a verified ledger, and all outputs
//! (result rows, summaries, ledger text) are byte-deterministic given the
//! seed.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array1;

use crate::budget::{verify_budget, LedgerEntry, PrivacyBudget};
use crate::calibrate::{calibrate_sgd_noise_steps, calibrate_spider_noise};
use crate::dataset::{sample_unit_ball, Dataset};
use crate::error::{Error, Result};
use crate::eval::grad_norm;
use crate::losses::{sigmoid, LossModel};
use crate::optimizers::{dp_sgd, dp_spider, RunRecord, SgdConfig, SpiderConfig};
use crate::rng::RngStream;
use crate::warm_start::{warm_start, BudgetSplit, FinishStage, WarmStage};

/// How the experiment's delta is derived from the sample count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaRule {
    /// `n^(-power)`, e.g. the default `n^-1.5`.
    PowerN { power: f64 },
    /// A fixed literal value.
    Literal(f64),
}

impl DeltaRule {
    pub fn evaluate(&self, n: usize) -> Result<f64> {
        let delta = match self {
            DeltaRule::PowerN { power } => (n as f64).powf(-power),
            DeltaRule::Literal(v) => *v,
        };
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!(
                "delta rule {self:?} gives {delta} at n = {n}; delta must lie in (0, 1)"
            )));
        }
        Ok(delta)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if let Some(rest) = t.strip_prefix("n^-").or_else(|| t.strip_prefix("n^{-")) {
            let digits = rest.trim_end_matches('}');
            let power: f64 = digits
                .parse()
                .map_err(|_| Error::Config(format!("bad delta rule exponent in {text:?}")))?;
            if !(power > 0.0) {
                return Err(Error::Config(format!(
                    "delta rule exponent must be > 0 in {text:?}"
                )));
            }
            return Ok(DeltaRule::PowerN { power });
        }
        let v: f64 = t.parse().map_err(|_| {
            Error::Config(format!(
                "delta rule must be a number or n^-<p>, got {text:?}"
            ))
        })?;
        Ok(DeltaRule::Literal(v))
    }

    pub fn label(&self) -> String {
        match self {
            DeltaRule::PowerN { power } => format!("n^-{power}"),
            DeltaRule::Literal(v) => format!("{v}"),
        }
    }
}

/// The algorithms the harness can field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Sgd,
    Spider,
    WarmStart,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Spider => "spider",
            Algorithm::WarmStart => "warm_start",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim() {
            "sgd" => Ok(Algorithm::Sgd),
            "spider" => Ok(Algorithm::Spider),
            "warm_start" => Ok(Algorithm::WarmStart),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?}; expected sgd, spider, or warm_start"
            ))),
        }
    }
}

/// One epsilon level's hyperparameters: baseline step sizes and phase
/// length, plus the warm start's stage split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TunedHypers {
    /// Warm-start stage-A iteration count (stage B gets the remainder).
    pub warm_t1: usize,
    /// Baseline phase length between gradient refreshes.
    pub spider_q: usize,
    /// Warm-start stage-B phase length.
    pub warm_q: usize,
    pub sgd_eta: f64,
    pub spider_eta: f64,
    pub warm_sgd_eta: f64,
    pub warm_spider_eta: f64,
    /// Fraction of epsilon given to the warm stage.
    pub warm_eps1_frac: f64,
}

/// Tuned values for each benchmark epsilon, found by grid search on fresh
/// validation data. Exact matches return their row; other epsilons get the
/// nearest row on the log scale.
pub fn tuned_hypers(epsilon: f64) -> TunedHypers {
    const TABLE: [(f64, TunedHypers); 5] = [
        (
            0.1,
            TunedHypers {
                warm_t1: 50,
                spider_q: 10,
                warm_q: 100,
                sgd_eta: 0.0005,
                spider_eta: 0.005,
                warm_sgd_eta: 0.0005,
                warm_spider_eta: 0.005,
                warm_eps1_frac: 0.5,
            },
        ),
        (
            0.25,
            TunedHypers {
                warm_t1: 50,
                spider_q: 5,
                warm_q: 5,
                sgd_eta: 0.0005,
                spider_eta: 0.001,
                warm_sgd_eta: 0.05,
                warm_spider_eta: 0.0005,
                warm_eps1_frac: 0.25,
            },
        ),
        (
            1.0,
            TunedHypers {
                warm_t1: 1,
                spider_q: 10,
                warm_q: 10,
                sgd_eta: 0.0025,
                spider_eta: 0.0025,
                warm_sgd_eta: 0.001,
                warm_spider_eta: 0.0005,
                warm_eps1_frac: 0.25,
            },
        ),
        (
            2.0,
            TunedHypers {
                warm_t1: 50,
                spider_q: 5,
                warm_q: 5,
                sgd_eta: 0.0025,
                spider_eta: 0.0025,
                warm_sgd_eta: 0.0025,
                warm_spider_eta: 0.0025,
                warm_eps1_frac: 0.25,
            },
        ),
        (
            4.0,
            TunedHypers {
                warm_t1: 25,
                spider_q: 5,
                warm_q: 5,
                sgd_eta: 0.005,
                spider_eta: 0.005,
                warm_sgd_eta: 0.005,
                warm_spider_eta: 0.005,
                warm_eps1_frac: 0.01,
            },
        ),
    ];
    let mut best = TABLE[0];
    let mut best_dist = f64::INFINITY;
    for row in TABLE {
        let dist = (row.0.ln() - epsilon.ln()).abs();
        if dist < best_dist {
            best_dist = dist;
            best = row;
        }
    }
    best.1
}

/// Per-field overrides applied on top of [`tuned_hypers`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HyperOverrides {
    pub sgd_eta: Option<f64>,
    pub spider_eta: Option<f64>,
    pub spider_q: Option<usize>,
    pub warm_t1: Option<usize>,
    pub warm_q: Option<usize>,
    pub warm_sgd_eta: Option<f64>,
    pub warm_spider_eta: Option<f64>,
    pub warm_eps1_frac: Option<f64>,
}

impl HyperOverrides {
    fn apply(&self, mut h: TunedHypers) -> TunedHypers {
        if let Some(v) = self.sgd_eta {
            h.sgd_eta = v;
        }
        if let Some(v) = self.spider_eta {
            h.spider_eta = v;
        }
        if let Some(v) = self.spider_q {
            h.spider_q = v;
        }
        if let Some(v) = self.warm_t1 {
            h.warm_t1 = v;
        }
        if let Some(v) = self.warm_q {
            h.warm_q = v;
        }
        if let Some(v) = self.warm_sgd_eta {
            h.warm_sgd_eta = v;
        }
        if let Some(v) = self.warm_spider_eta {
            h.warm_spider_eta = v;
        }
        if let Some(v) = self.warm_eps1_frac {
            h.warm_eps1_frac = v;
        }
        h
    }
}

/// Candidate values for the grid search, one list per tunable. Empty lists
/// fall back to the tuned default for the epsilon under search.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HyperGrid {
    pub sgd_eta: Vec<f64>,
    pub spider_eta: Vec<f64>,
    pub spider_q: Vec<usize>,
    pub warm_t1: Vec<usize>,
    pub warm_q: Vec<usize>,
    pub warm_sgd_eta: Vec<f64>,
    pub warm_spider_eta: Vec<f64>,
    pub warm_eps1_frac: Vec<f64>,
}

/// Full harness configuration; [`ExperimentConfig::default`] reproduces the
/// benchmark setup (n = d = 100, delta = n^-1.5, five epsilon levels, ten
/// trials, all three algorithms).
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: usize,
    pub loss: String,
    pub delta_rule: DeltaRule,
    pub epsilons: Vec<f64>,
    pub trials: usize,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    pub output_dir: Option<String>,
    pub baseline_iters: usize,
    pub warm_total_iters: usize,
    pub project_radius: f64,
    pub overrides: HyperOverrides,
    pub grid: Option<HyperGrid>,
    /// Validation repeats per grid point.
    pub grid_repeats: usize,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 100,
            d: 100,
            loss: "sine_bowl".into(),
            delta_rule: DeltaRule::PowerN { power: 1.5 },
            epsilons: vec![0.1, 0.25, 1.0, 2.0, 4.0],
            trials: 10,
            algorithms: vec![Algorithm::Sgd, Algorithm::Spider, Algorithm::WarmStart],
            seed: 160,
            output_dir: None,
            baseline_iters: 100,
            warm_total_iters: 50,
            project_radius: 2.0,
            overrides: HyperOverrides::default(),
            grid: None,
            grid_repeats: 10,
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::Config("n and d must be >= 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.epsilons.is_empty() {
            return Err(Error::Config("epsilons must be nonempty".into()));
        }
        for &eps in &self.epsilons {
            if !(eps > 0.0) || !eps.is_finite() {
                return Err(Error::Config(format!(
                    "epsilon values must be finite and > 0, got {eps}"
                )));
            }
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithms must be nonempty".into()));
        }
        if self.baseline_iters == 0 || self.warm_total_iters == 0 {
            return Err(Error::Config("iteration counts must be >= 1".into()));
        }
        if !(self.project_radius > 0.0) {
            return Err(Error::Config("project_radius must be > 0".into()));
        }
        if self.grid_repeats == 0 {
            return Err(Error::Config("grid_repeats must be >= 1".into()));
        }
        LossModel::from_name(&self.loss)?;
        // Budget sanity before anything runs: the delta rule must give a
        // valid delta and the warm split must stay inside each epsilon.
        let delta = self.delta_rule.evaluate(self.n)?;
        for &eps in &self.epsilons {
            let h = self.overrides.apply(tuned_hypers(eps));
            if !(h.warm_eps1_frac > 0.0 && h.warm_eps1_frac < 1.0) {
                return Err(Error::Config(format!(
                    "warm_eps1_frac must lie in (0, 1), got {}",
                    h.warm_eps1_frac
                )));
            }
            if h.warm_t1 > self.warm_total_iters {
                return Err(Error::Config(format!(
                    "warm_t1 = {} exceeds warm_total_iters = {}",
                    h.warm_t1, self.warm_total_iters
                )));
            }
            if h.spider_q == 0 || h.warm_q == 0 {
                return Err(Error::Config("phase lengths must be >= 1".into()));
            }
            PrivacyBudget::new(eps, delta)?;
        }
        Ok(())
    }

    /// Parse a flat `key = value` config file; unset keys keep defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut grid = HyperGrid::default();
        let mut has_grid = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {lineno}: expected key = value, got {line:?}"))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad =
                |what: &str| Error::Config(format!("line {lineno}: bad {what} value {value:?}"));
            match key {
                "n" => cfg.n = value.parse().map_err(|_| bad("n"))?,
                "d" => cfg.d = value.parse().map_err(|_| bad("d"))?,
                "loss" => cfg.loss = value.to_string(),
                "delta_rule" => cfg.delta_rule = DeltaRule::parse(value)?,
                "epsilons" => cfg.epsilons = parse_f64_list(value).map_err(|_| bad("epsilons"))?,
                "trials" => cfg.trials = value.parse().map_err(|_| bad("trials"))?,
                "algorithms" => {
                    cfg.algorithms = value
                        .split(',')
                        .map(Algorithm::from_name)
                        .collect::<Result<Vec<_>>>()?;
                }
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "output_dir" => cfg.output_dir = Some(value.to_string()),
                "baseline_iters" => {
                    cfg.baseline_iters = value.parse().map_err(|_| bad("baseline_iters"))?
                }
                "warm_total_iters" => {
                    cfg.warm_total_iters = value.parse().map_err(|_| bad("warm_total_iters"))?
                }
                "project_radius" => {
                    cfg.project_radius = value.parse().map_err(|_| bad("project_radius"))?
                }
                "grid_repeats" => {
                    cfg.grid_repeats = value.parse().map_err(|_| bad("grid_repeats"))?
                }
                "sgd.eta" => {
                    cfg.overrides.sgd_eta = Some(value.parse().map_err(|_| bad("sgd.eta"))?)
                }
                "spider.eta" => {
                    cfg.overrides.spider_eta = Some(value.parse().map_err(|_| bad("spider.eta"))?)
                }
                "spider.q" => {
                    cfg.overrides.spider_q = Some(value.parse().map_err(|_| bad("spider.q"))?)
                }
                "warm.t1" => {
                    cfg.overrides.warm_t1 = Some(value.parse().map_err(|_| bad("warm.t1"))?)
                }
                "warm.q" => cfg.overrides.warm_q = Some(value.parse().map_err(|_| bad("warm.q"))?),
                "warm.eta_sgd" => {
                    cfg.overrides.warm_sgd_eta =
                        Some(value.parse().map_err(|_| bad("warm.eta_sgd"))?)
                }
                "warm.eta_spider" => {
                    cfg.overrides.warm_spider_eta =
                        Some(value.parse().map_err(|_| bad("warm.eta_spider"))?)
                }
                "warm.eps1_frac" => {
                    cfg.overrides.warm_eps1_frac =
                        Some(value.parse().map_err(|_| bad("warm.eps1_frac"))?)
                }
                "grid.sgd_eta" => {
                    grid.sgd_eta = parse_f64_list(value).map_err(|_| bad("grid.sgd_eta"))?;
                    has_grid = true;
                }
                "grid.spider_eta" => {
                    grid.spider_eta = parse_f64_list(value).map_err(|_| bad("grid.spider_eta"))?;
                    has_grid = true;
                }
                "grid.spider_q" => {
                    grid.spider_q = parse_usize_list(value).map_err(|_| bad("grid.spider_q"))?;
                    has_grid = true;
                }
                "grid.warm_t1" => {
                    grid.warm_t1 = parse_usize_list(value).map_err(|_| bad("grid.warm_t1"))?;
                    has_grid = true;
                }
                "grid.warm_q" => {
                    grid.warm_q = parse_usize_list(value).map_err(|_| bad("grid.warm_q"))?;
                    has_grid = true;
                }
                "grid.warm_eta_sgd" => {
                    grid.warm_sgd_eta =
                        parse_f64_list(value).map_err(|_| bad("grid.warm_eta_sgd"))?;
                    has_grid = true;
                }
                "grid.warm_eta_spider" => {
                    grid.warm_spider_eta =
                        parse_f64_list(value).map_err(|_| bad("grid.warm_eta_spider"))?;
                    has_grid = true;
                }
                "grid.warm_eps1_frac" => {
                    grid.warm_eps1_frac =
                        parse_f64_list(value).map_err(|_| bad("grid.warm_eps1_frac"))?;
                    has_grid = true;
                }
                "sweep.ns" => {
                    cfg.sweep.ns = parse_usize_list(value).map_err(|_| bad("sweep.ns"))?
                }
                "sweep.dim" => cfg.sweep.dim = value.parse().map_err(|_| bad("sweep.dim"))?,
                "sweep.epsilon" => {
                    cfg.sweep.epsilon = value.parse().map_err(|_| bad("sweep.epsilon"))?
                }
                "sweep.trials" => {
                    cfg.sweep.trials = value.parse().map_err(|_| bad("sweep.trials"))?
                }
                "sweep.loss" => cfg.sweep.loss = value.to_string(),
                "sweep.eta" => cfg.sweep.eta = value.parse().map_err(|_| bad("sweep.eta"))?,
                "sweep.t1" => cfg.sweep.t1 = value.parse().map_err(|_| bad("sweep.t1"))?,
                "sweep.t2" => cfg.sweep.t2 = value.parse().map_err(|_| bad("sweep.t2"))?,
                "sweep.q" => cfg.sweep.q = value.parse().map_err(|_| bad("sweep.q"))?,
                other => {
                    return Err(Error::Config(format!(
                        "line {lineno}: unknown config key {other:?}"
                    )))
                }
            }
        }
        if has_grid {
            cfg.grid = Some(grid);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_f64_list(value: &str) -> std::result::Result<Vec<f64>, std::num::ParseFloatError> {
    value.split(',').map(|v| v.trim().parse()).collect()
}

fn parse_usize_list(value: &str) -> std::result::Result<Vec<usize>, std::num::ParseIntError> {
    value.split(',').map(|v| v.trim().parse()).collect()
}

/// Draw a fresh dataset for the loss: unit-ball samples, plus synthetic
/// labels `y = s(x_0)` through the logistic link when the loss needs them.
pub fn synthesize_dataset(
    loss: &LossModel,
    d: usize,
    n: usize,
    stream: &RngStream,
) -> Result<Dataset> {
    let data = sample_unit_ball(d, n, stream)?;
    if !loss.requires_labels() {
        return Ok(data);
    }
    let labels: Array1<f64> = (0..n).map(|i| sigmoid(data.row(i)[0])).collect();
    Dataset::new(data.samples().clone(), Some(labels))
}

/// One run's measurements.
#[derive(Clone, Debug)]
pub struct ResultRow {
    pub epsilon: f64,
    pub algorithm: Algorithm,
    pub trial: usize,
    pub grad_norm_train: f64,
    pub grad_norm_test: f64,
    /// Compact `key=value;...` rendering of the hyperparameters used.
    pub hyperparameters: String,
    /// Wall-clock time of the run. Not serialized: the CSVs must be
    /// byte-identical across identical-seed executions.
    pub wall_time: Duration,
}

/// Mean and sample standard deviation over one (epsilon, algorithm) cell.
#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub epsilon: f64,
    pub algorithm: Algorithm,
    pub trials: usize,
    pub mean_grad_norm_train: f64,
    pub std_grad_norm_train: f64,
    pub mean_grad_norm_test: f64,
    pub std_grad_norm_test: f64,
}

/// Everything a benchmark execution produces.
#[derive(Clone, Debug)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
    pub summaries: Vec<SummaryRow>,
    /// One ledger report per (epsilon, algorithm), labeled by a header line.
    pub ledger_text: String,
}

impl ExperimentResults {
    pub fn results_csv(&self) -> String {
        let mut out = String::from(
            "epsilon,algorithm,trial,grad_norm_train,grad_norm_test,hyperparameters\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epsilon,
                r.algorithm.name(),
                r.trial,
                r.grad_norm_train,
                r.grad_norm_test,
                r.hyperparameters
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "epsilon,algorithm,trials,mean_grad_norm_train,std_grad_norm_train,mean_grad_norm_test,std_grad_norm_test\n",
        );
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.epsilon,
                s.algorithm.name(),
                s.trials,
                s.mean_grad_norm_train,
                s.std_grad_norm_train,
                s.mean_grad_norm_test,
                s.std_grad_norm_test
            );
        }
        out
    }

    /// Write `results.csv`, `summary.csv`, and `ledger.txt` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.csv"), self.results_csv())?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        std::fs::write(dir.join("ledger.txt"), &self.ledger_text)?;
        Ok(())
    }
}

/// Aggregate rows into per-(epsilon, algorithm) summaries. Sorts by
/// (epsilon, algorithm, trial) first, so any row order gives identical
/// output.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        a.epsilon
            .total_cmp(&b.epsilon)
            .then_with(|| a.algorithm.name().cmp(b.algorithm.name()))
            .then_with(|| a.trial.cmp(&b.trial))
    });
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len()
            && sorted[j].epsilon == sorted[i].epsilon
            && sorted[j].algorithm == sorted[i].algorithm
        {
            j += 1;
        }
        let cell = &sorted[i..j];
        let train: Vec<f64> = cell.iter().map(|r| r.grad_norm_train).collect();
        let test: Vec<f64> = cell.iter().map(|r| r.grad_norm_test).collect();
        let (mean_train, std_train) = mean_std(&train);
        let (mean_test, std_test) = mean_std(&test);
        out.push(SummaryRow {
            epsilon: sorted[i].epsilon,
            algorithm: sorted[i].algorithm,
            trials: cell.len(),
            mean_grad_norm_train: mean_train,
            std_grad_norm_train: std_train,
            mean_grad_norm_test: mean_test,
            std_grad_norm_test: std_test,
        });
        i = j;
    }
    out
}

/// Two-pass mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (values.len() - 1) as f64).sqrt())
}

/// Assemble one algorithm's run at a given budget. Returns the record and
/// the hyperparameter string for the result row.
fn run_algorithm(
    algorithm: Algorithm,
    loss: &LossModel,
    train: &Dataset,
    budget: &PrivacyBudget,
    hypers: &TunedHypers,
    cfg: &ExperimentConfig,
    stream: &RngStream,
) -> Result<(RunRecord, String)> {
    let l = loss.metadata.lipschitz;
    let beta = loss.metadata.smoothness;
    let n = train.len();
    let d = cfg.d;
    let radius = cfg.project_radius;
    match algorithm {
        Algorithm::Sgd => {
            let t = cfg.baseline_iters;
            let cal = calibrate_sgd_noise_steps(l, t, n, n, budget)?;
            let run_cfg = SgdConfig::new(t, n, hypers.sgd_eta, cal.sigma_sq, Array1::zeros(d))
                .with_projection(radius)
                .with_ledger_entry(cal.entry("sgd"));
            let record = dp_sgd(loss, train, &run_cfg, stream)?;
            let hy = format!("T={t};b={n};eta={}", hypers.sgd_eta);
            Ok((record, hy))
        }
        Algorithm::Spider => {
            let t = cfg.baseline_iters;
            let run_cfg = SpiderConfig::new(
                t,
                hypers.spider_q,
                n,
                n,
                hypers.spider_eta,
                0.0,
                0.0,
                0.0,
                Array1::zeros(d),
            )
            .with_projection(radius);
            let cal = calibrate_spider_noise(l, beta, &run_cfg, n, budget)?;
            let run_cfg = cal.apply(run_cfg, "spider");
            let record = dp_spider(loss, train, &run_cfg, stream)?;
            let hy = format!(
                "T={t};q={};b1={n};b2={n};eta={}",
                hypers.spider_q, hypers.spider_eta
            );
            Ok((record, hy))
        }
        Algorithm::WarmStart => {
            let t1 = hypers.warm_t1;
            let t2 = cfg.warm_total_iters - t1;
            let split = BudgetSplit::epsilon_fraction(budget, hypers.warm_eps1_frac)?;
            let stage_a = if t1 == 0 {
                WarmStage::None
            } else {
                let cal = calibrate_sgd_noise_steps(l, t1, n, n, &split.stage_a)?;
                let a_cfg =
                    SgdConfig::new(t1, n, hypers.warm_sgd_eta, cal.sigma_sq, Array1::zeros(d))
                        .with_projection(radius)
                        .with_ledger_entry(cal.entry("warm:sgd"));
                WarmStage::Sgd(a_cfg)
            };
            let b_cfg = SpiderConfig::new(
                t2,
                hypers.warm_q,
                n,
                n,
                hypers.warm_spider_eta,
                0.0,
                0.0,
                0.0,
                Array1::zeros(d),
            )
            .with_projection(radius);
            let b_cfg = if t2 == 0 {
                // A zero-step finisher runs no mechanism and spends nothing.
                b_cfg.with_ledger_entry(LedgerEntry::basic(
                    "finish:spider",
                    PrivacyBudget::new(0.0, 0.0)?,
                ))
            } else {
                let cal = calibrate_spider_noise(l, beta, &b_cfg, n, &split.stage_b)?;
                cal.apply(b_cfg, "finish:spider")
            };
            let record = warm_start(
                loss,
                train,
                &stage_a,
                &FinishStage::Spider(b_cfg),
                &split,
                budget,
                stream,
            )?;
            let hy = format!(
                "T1={t1};T2={t2};q={};eta_sgd={};eta_spider={};eps1={}",
                hypers.warm_q, hypers.warm_sgd_eta, hypers.warm_spider_eta, split.stage_a.epsilon
            );
            Ok((record, hy))
        }
    }
}

/// Run the full benchmark: for each epsilon and algorithm, `trials` runs on
/// freshly drawn train/test data, returning per-run rows, per-cell
/// summaries, and the ledger reports.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let loss = LossModel::from_name(&cfg.loss)?;
    let delta = cfg.delta_rule.evaluate(cfg.n)?;
    let base = RngStream::new(cfg.seed, 0);
    let mut rows = Vec::with_capacity(cfg.epsilons.len() * cfg.algorithms.len() * cfg.trials);
    let mut ledger_text = String::new();
    for (ei, &epsilon) in cfg.epsilons.iter().enumerate() {
        let hypers = cfg.overrides.apply(tuned_hypers(epsilon));
        for (ai, &algorithm) in cfg.algorithms.iter().enumerate() {
            let global = PrivacyBudget::new(epsilon, delta)?;
            for trial in 0..cfg.trials {
                // Data is shared across algorithms within a trial (paired
                // comparison); each run draws from its own stream.
                let train = synthesize_dataset(
                    &loss,
                    cfg.d,
                    cfg.n,
                    &base.fork(&[1, ei as u64, trial as u64, 0]),
                )?;
                let test = synthesize_dataset(
                    &loss,
                    cfg.d,
                    cfg.n,
                    &base.fork(&[1, ei as u64, trial as u64, 1]),
                )?;
                let run_stream = base.fork(&[2, ei as u64, ai as u64, trial as u64]);
                let started = Instant::now();
                let (record, hyper_string) =
                    run_algorithm(algorithm, &loss, &train, &global, &hypers, cfg, &run_stream)?;
                let wall_time = started.elapsed();
                if !verify_budget(&record.ledger, &global) {
                    return Err(Error::OverBudget(format!(
                        "run (epsilon={epsilon}, algorithm={}, trial={trial}) exceeds its budget:\n{}",
                        algorithm.name(),
                        record.ledger.report()
                    )));
                }
                if trial == 0 {
                    let _ = writeln!(
                        ledger_text,
                        "# epsilon={epsilon} algorithm={}\n{}",
                        algorithm.name(),
                        record.ledger.report()
                    );
                }
                let grad_norm_train = grad_norm(&loss, &train, record.output.view())?;
                let grad_norm_test = grad_norm(&loss, &test, record.output.view())?;
                rows.push(ResultRow {
                    epsilon,
                    algorithm,
                    trial,
                    grad_norm_train,
                    grad_norm_test,
                    hyperparameters: hyper_string,
                    wall_time,
                });
            }
        }
    }
    let summaries = summarize(&rows);
    Ok(ExperimentResults {
        rows,
        summaries,
        ledger_text,
    })
}

/// Winners of a grid search, per epsilon, plus a printable listing.
#[derive(Clone, Debug)]
pub struct GridSelection {
    pub per_epsilon: Vec<(f64, TunedHypers)>,
    pub listing: String,
}

impl GridSelection {
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("hyperparams.txt"), &self.listing)?;
        Ok(())
    }
}

fn non_empty<T: Copy>(grid: &[T], fallback: T) -> Vec<T> {
    if grid.is_empty() {
        vec![fallback]
    } else {
        grid.to_vec()
    }
}

const GRID_CAP: usize = 10_000;

/// Evaluate `candidates(h)` variants of the hypers and keep the one with the
/// lowest mean validation gradient norm; ties keep the earliest candidate.
fn argmin_over<S>(candidates: Vec<TunedHypers>, mut score: S) -> Result<TunedHypers>
where
    S: FnMut(&TunedHypers) -> Result<f64>,
{
    let mut best: Option<(f64, TunedHypers)> = None;
    for h in candidates {
        let s = score(&h)?;
        match &best {
            Some((b, _)) if s >= *b => {}
            _ => best = Some((s, h)),
        }
    }
    best.map(|(_, h)| h)
        .ok_or_else(|| Error::invalid("grid is empty"))
}

/// Grid-search each algorithm's hyperparameters per epsilon on fresh
/// validation data: `cfg.grid_repeats` runs per candidate, scored by mean
/// output gradient norm on the validation draw; ties broken by grid order.
pub fn grid_search(cfg: &ExperimentConfig, grid: &HyperGrid) -> Result<GridSelection> {
    cfg.validate()?;
    let loss = LossModel::from_name(&cfg.loss)?;
    let delta = cfg.delta_rule.evaluate(cfg.n)?;
    let base = RngStream::new(cfg.seed, 0);
    let mut per_epsilon = Vec::with_capacity(cfg.epsilons.len());
    let mut listing = String::new();
    for (ei, &epsilon) in cfg.epsilons.iter().enumerate() {
        let budget = PrivacyBudget::new(epsilon, delta)?;
        let defaults = cfg.overrides.apply(tuned_hypers(epsilon));
        // Validation data: one fresh draw per repeat, shared by every
        // candidate so comparisons are paired.
        let mut val_data = Vec::with_capacity(cfg.grid_repeats);
        for rep in 0..cfg.grid_repeats {
            val_data.push(synthesize_dataset(
                &loss,
                cfg.d,
                cfg.n,
                &base.fork(&[3, ei as u64, rep as u64]),
            )?);
        }
        let score = |algorithm: Algorithm, ai: u64, pi: usize, h: &TunedHypers| -> Result<f64> {
            let mut total = 0.0;
            for (rep, data) in val_data.iter().enumerate() {
                let stream = base.fork(&[4, ei as u64, ai, pi as u64, rep as u64]);
                let (record, _) = run_algorithm(algorithm, &loss, data, &budget, h, cfg, &stream)?;
                total += grad_norm(&loss, data, record.output.view())?;
            }
            Ok(total / cfg.grid_repeats as f64)
        };

        // SGD: step size only.
        let sgd_candidates: Vec<TunedHypers> = non_empty(&grid.sgd_eta, defaults.sgd_eta)
            .into_iter()
            .map(|eta| TunedHypers {
                sgd_eta: eta,
                ..defaults
            })
            .collect();
        let mut pi = 0;
        let sgd_best = argmin_over(sgd_candidates, |h| {
            let s = score(Algorithm::Sgd, 0, pi, h);
            pi += 1;
            s
        })?;

        // Variance-reduced baseline: step size x phase length.
        let mut spider_candidates = Vec::new();
        for &eta in &non_empty(&grid.spider_eta, defaults.spider_eta) {
            for &q in &non_empty(&grid.spider_q, defaults.spider_q) {
                spider_candidates.push(TunedHypers {
                    spider_eta: eta,
                    spider_q: q,
                    ..defaults
                });
            }
        }
        if spider_candidates.len() > GRID_CAP {
            return Err(Error::Feasibility(format!(
                "spider grid has {} points; cap is {GRID_CAP}",
                spider_candidates.len()
            )));
        }
        let mut pi = 0;
        let spider_best = argmin_over(spider_candidates, |h| {
            let s = score(Algorithm::Spider, 1, pi, h);
            pi += 1;
            s
        })?;

        // Warm start: stage split x step sizes x phase length x budget
        // fraction, in declared order.
        let mut warm_candidates = Vec::new();
        for &t1 in &non_empty(&grid.warm_t1, defaults.warm_t1) {
            for &eta_sgd in &non_empty(&grid.warm_sgd_eta, defaults.warm_sgd_eta) {
                for &eta_spider in &non_empty(&grid.warm_spider_eta, defaults.warm_spider_eta) {
                    for &q in &non_empty(&grid.warm_q, defaults.warm_q) {
                        for &frac in &non_empty(&grid.warm_eps1_frac, defaults.warm_eps1_frac) {
                            warm_candidates.push(TunedHypers {
                                warm_t1: t1,
                                warm_sgd_eta: eta_sgd,
                                warm_spider_eta: eta_spider,
                                warm_q: q,
                                warm_eps1_frac: frac,
                                ..defaults
                            });
                        }
                    }
                }
            }
        }
        if warm_candidates.len() > GRID_CAP {
            return Err(Error::Feasibility(format!(
                "warm-start grid has {} points; cap is {GRID_CAP}",
                warm_candidates.len()
            )));
        }
        for h in &warm_candidates {
            if h.warm_t1 > cfg.warm_total_iters {
                return Err(Error::Config(format!(
                    "grid warm_t1 = {} exceeds warm_total_iters = {}",
                    h.warm_t1, cfg.warm_total_iters
                )));
            }
        }
        let mut pi = 0;
        let warm_best = argmin_over(warm_candidates, |h| {
            let s = score(Algorithm::WarmStart, 2, pi, h);
            pi += 1;
            s
        })?;

        let chosen = TunedHypers {
            sgd_eta: sgd_best.sgd_eta,
            spider_eta: spider_best.spider_eta,
            spider_q: spider_best.spider_q,
            warm_t1: warm_best.warm_t1,
            warm_q: warm_best.warm_q,
            warm_sgd_eta: warm_best.warm_sgd_eta,
            warm_spider_eta: warm_best.warm_spider_eta,
            warm_eps1_frac: warm_best.warm_eps1_frac,
        };
        let _ = writeln!(
            listing,
            "epsilon = {epsilon}\n  sgd eta = {}\n  spider eta = {}\n  spider q = {}\n  warm t1 = {}\n  warm q = {}\n  warm eta_sgd = {}\n  warm eta_spider = {}\n  warm eps1_frac = {}\n",
            chosen.sgd_eta,
            chosen.spider_eta,
            chosen.spider_q,
            chosen.warm_t1,
            chosen.warm_q,
            chosen.warm_sgd_eta,
            chosen.warm_spider_eta,
            chosen.warm_eps1_frac
        );
        per_epsilon.push((epsilon, chosen));
    }
    Ok(GridSelection {
        per_epsilon,
        listing,
    })
}

/// Scaling-sweep configuration: warm-started runs on a fixed loss while the
/// sample count grows.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub loss: String,
    pub dim: usize,
    pub ns: Vec<usize>,
    pub epsilon: f64,
    pub delta_rule: DeltaRule,
    pub trials: usize,
    /// Warm (stage-A) and finisher (stage-B) iteration counts.
    pub t1: usize,
    pub t2: usize,
    pub q: usize,
    /// Step size used by both stages.
    pub eta: f64,
    pub project_radius: f64,
    /// Norm of the (axis-aligned) initial point; 0 starts at the origin.
    pub w_init_radius: f64,
    /// Disable all noise: a non-private control that isolates the
    /// statistical component of the measurement.
    pub noiseless: bool,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            loss: "quadratic_pl".into(),
            dim: 5,
            ns: vec![200, 400, 800, 1600, 3200],
            epsilon: 1.0,
            delta_rule: DeltaRule::PowerN { power: 1.5 },
            trials: 20,
            t1: 25,
            t2: 25,
            q: 5,
            eta: 0.01,
            project_radius: 2.0,
            w_init_radius: 0.0,
            noiseless: false,
            seed: 7,
        }
    }
}

/// One sweep measurement.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub n: usize,
    pub mean_grad_norm: f64,
}

/// Fitted privacy-cost scaling.
#[derive(Clone, Debug)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of log mean gradient norm against log n.
    pub slope: f64,
    pub r_squared: f64,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,mean_grad_norm\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{}", p.n, p.mean_grad_norm);
        }
        let _ = writeln!(out, "# slope={} r_squared={}", self.slope, self.r_squared);
        out
    }
}

/// Measure how the warm-started pipeline's output gradient norm scales with
/// the sample count: for each `n`, average over fresh trials, then fit a
/// log-log line.
pub fn sweep_scaling(cfg: &SweepConfig) -> Result<SweepReport> {
    let distinct: BTreeSet<usize> = cfg.ns.iter().copied().collect();
    if distinct.len() != cfg.ns.len() {
        return Err(Error::invalid("sweep sample counts must be distinct"));
    }
    if distinct.len() < 3 {
        return Err(Error::invalid(
            "sweep needs at least 3 distinct sample counts",
        ));
    }
    if cfg.trials == 0 {
        return Err(Error::invalid("sweep needs at least one trial"));
    }
    if cfg.t1 == 0 && cfg.t2 == 0 {
        return Err(Error::invalid(
            "sweep needs at least one iteration across the stages",
        ));
    }
    let loss = LossModel::from_name(&cfg.loss)?;
    let l = loss.metadata.lipschitz;
    let beta = loss.metadata.smoothness;
    let base = RngStream::new(cfg.seed, 0);
    let mut points = Vec::with_capacity(cfg.ns.len());
    for (ni, &n) in cfg.ns.iter().enumerate() {
        let delta = cfg.delta_rule.evaluate(n)?;
        let budget = PrivacyBudget::new(cfg.epsilon, delta)?;
        let split = BudgetSplit::even(&budget)?;
        let mut w_init = Array1::zeros(cfg.dim);
        w_init[0] = cfg.w_init_radius;
        let mut total = 0.0;
        for trial in 0..cfg.trials {
            let data =
                synthesize_dataset(&loss, cfg.dim, n, &base.fork(&[5, ni as u64, trial as u64]))?;
            let stage_a = if cfg.t1 == 0 {
                WarmStage::None
            } else {
                let mut a_cfg = SgdConfig::new(cfg.t1, n, cfg.eta, 0.0, w_init.clone())
                    .with_projection(cfg.project_radius);
                if cfg.noiseless {
                    a_cfg = a_cfg.with_ledger_entry(LedgerEntry::basic(
                        "warm:sgd",
                        PrivacyBudget::new(0.0, 0.0)?,
                    ));
                } else {
                    let cal = calibrate_sgd_noise_steps(l, cfg.t1, n, n, &split.stage_a)?;
                    a_cfg.noise_variance = cal.sigma_sq;
                    a_cfg = a_cfg.with_ledger_entry(cal.entry("warm:sgd"));
                }
                WarmStage::Sgd(a_cfg)
            };
            let mut b_cfg =
                SpiderConfig::new(cfg.t2, cfg.q, n, n, cfg.eta, 0.0, 0.0, 0.0, w_init.clone())
                    .with_projection(cfg.project_radius);
            if cfg.t2 == 0 || cfg.noiseless {
                b_cfg = b_cfg.with_ledger_entry(LedgerEntry::basic(
                    "finish:spider",
                    PrivacyBudget::new(0.0, 0.0)?,
                ));
            } else {
                let cal = calibrate_spider_noise(l, beta, &b_cfg, n, &split.stage_b)?;
                b_cfg = cal.apply(b_cfg, "finish:spider");
            }
            let record = warm_start(
                &loss,
                &data,
                &stage_a,
                &FinishStage::Spider(b_cfg),
                &split,
                &budget,
                &base.fork(&[6, ni as u64, trial as u64]),
            )?;
            total += grad_norm(&loss, &data, record.output.view())?;
        }
        points.push(SweepPoint {
            n,
            mean_grad_norm: total / cfg.trials as f64,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points
        .iter()
        .map(|p| p.mean_grad_norm.max(1e-300).ln())
        .collect();
    let (slope, r_squared) = fit_line(&xs, &ys);
    Ok(SweepReport {
        points,
        slope,
        r_squared,
    })
}

/// Least-squares slope and R^2 of y against x.
fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    (slope, r_squared)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            n: 30,
            d: 3,
            trials: 2,
            epsilons: vec![0.5],
            baseline_iters: 8,
            warm_total_iters: 6,
            overrides: HyperOverrides {
                warm_t1: Some(3),
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn delta_rule_evaluation_and_parsing() {
        let rule = DeltaRule::PowerN { power: 1.5 };
        assert_abs_diff_eq!(rule.evaluate(100).unwrap(), 1e-3, epsilon = 1e-18);
        assert_eq!(DeltaRule::parse("n^-1.5").unwrap(), rule);
        assert_eq!(
            DeltaRule::parse("0.001").unwrap(),
            DeltaRule::Literal(0.001)
        );
        assert!(DeltaRule::parse("x^2").is_err());
        // delta must land in (0, 1)
        assert!(DeltaRule::Literal(1.5).evaluate(10).is_err());
        assert!(DeltaRule::Literal(0.0).evaluate(10).is_err());
    }

    #[test]
    fn tuned_table_covers_the_benchmark_epsilons() {
        let h = tuned_hypers(0.1);
        assert_eq!((h.warm_t1, h.spider_q, h.warm_q), (50, 10, 100));
        assert_abs_diff_eq!(h.sgd_eta, 0.0005);
        assert_abs_diff_eq!(h.warm_eps1_frac, 0.5);
        let h = tuned_hypers(4.0);
        assert_eq!(h.warm_t1, 25);
        assert_abs_diff_eq!(h.warm_eps1_frac, 0.01);
        // off-table epsilons take the nearest row on the log scale
        assert_eq!(tuned_hypers(0.12), tuned_hypers(0.1));
        assert_eq!(tuned_hypers(3.0), tuned_hypers(4.0));
    }

    #[test]
    fn config_parsing_round_trip() {
        let text = "\
# benchmark shape
n = 40
d = 4
loss = sine_bowl
delta_rule = n^-1.5
epsilons = 0.5, 1
trials = 3
algorithms = sgd, warm_start
seed = 11
baseline_iters = 10
warm_total_iters = 8
warm.t1 = 4
project_radius = 1.5
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!((cfg.n, cfg.d, cfg.trials, cfg.seed), (40, 4, 3, 11));
        assert_eq!(cfg.epsilons, vec![0.5, 1.0]);
        assert_eq!(cfg.algorithms, vec![Algorithm::Sgd, Algorithm::WarmStart]);
        assert_eq!(cfg.overrides.warm_t1, Some(4));
        assert_abs_diff_eq!(cfg.project_radius, 1.5);
        assert!(cfg.grid.is_none());
    }

    #[test]
    fn config_parsing_rejects_bad_input() {
        assert!(
            matches!(ExperimentConfig::parse("unknown_key = 3"), Err(Error::Config(m)) if m.contains("unknown"))
        );
        assert!(ExperimentConfig::parse("n 40").is_err());
        assert!(ExperimentConfig::parse("trials = zero").is_err());
        assert!(ExperimentConfig::parse("algorithms = sgd, frog").is_err());
        // invariants checked after parsing
        assert!(ExperimentConfig::parse("trials = 0").is_err());
        assert!(ExperimentConfig::parse("epsilons = -1").is_err());
        assert!(ExperimentConfig::parse("warm.eps1_frac = 1.5").is_err());
    }

    #[test]
    fn grid_keys_parse_into_a_grid() {
        let cfg =
            ExperimentConfig::parse("grid.sgd_eta = 0.001, 0.01\ngrid.spider_q = 2, 4\n").unwrap();
        let grid = cfg.grid.unwrap();
        assert_eq!(grid.sgd_eta, vec![0.001, 0.01]);
        assert_eq!(grid.spider_q, vec![2, 4]);
        assert!(grid.warm_t1.is_empty());
    }

    #[test]
    fn small_experiment_has_the_expected_shape() {
        let cfg = tiny_config();
        let results = run_experiment(&cfg).unwrap();
        // 1 epsilon x 3 algorithms x 2 trials
        assert_eq!(results.rows.len(), 6);
        assert_eq!(results.summaries.len(), 3);
        for row in &results.rows {
            assert!(row.grad_norm_train.is_finite());
            assert!(row.grad_norm_test.is_finite());
            assert!(row.grad_norm_train >= 0.0);
        }
        for s in &results.summaries {
            assert_eq!(s.trials, 2);
            assert!(s.std_grad_norm_train >= 0.0);
        }
        // one ledger block per (epsilon, algorithm)
        assert_eq!(results.ledger_text.matches("# epsilon=").count(), 3);
        assert!(results.ledger_text.contains("algorithm=warm_start"));
    }

    #[test]
    fn identical_seeds_give_identical_csv_bytes() {
        let cfg = tiny_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.results_csv(), b.results_csv());
        assert_eq!(a.summary_csv(), b.summary_csv());
        assert_eq!(a.ledger_text, b.ledger_text);
        let mut other = cfg;
        other.seed = 8;
        let c = run_experiment(&other).unwrap();
        assert_ne!(a.results_csv(), c.results_csv());
    }

    #[test]
    fn summaries_are_order_independent() {
        let cfg = tiny_config();
        let results = run_experiment(&cfg).unwrap();
        let mut shuffled = results.rows.clone();
        shuffled.reverse();
        shuffled.swap(0, 3);
        let a = summarize(&results.rows);
        let b = summarize(&shuffled);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.epsilon, y.epsilon);
            assert_eq!(x.algorithm, y.algorithm);
            assert_eq!(
                x.mean_grad_norm_train.to_bits(),
                y.mean_grad_norm_train.to_bits()
            );
            assert_eq!(
                x.std_grad_norm_train.to_bits(),
                y.std_grad_norm_train.to_bits()
            );
        }
    }

    #[test]
    fn single_run_config_gives_one_row() {
        let cfg = ExperimentConfig {
            trials: 1,
            epsilons: vec![1.0],
            algorithms: vec![Algorithm::Sgd],
            ..tiny_config()
        };
        let results = run_experiment(&cfg).unwrap();
        assert_eq!(results.rows.len(), 1);
        assert_eq!(results.summaries.len(), 1);
        assert_eq!(results.summaries[0].std_grad_norm_train, 0.0);
    }

    #[test]
    fn glm_loss_gets_synthetic_labels() {
        let cfg = ExperimentConfig {
            loss: "glm_sigmoid_sq".into(),
            algorithms: vec![Algorithm::Sgd],
            trials: 1,
            epsilons: vec![1.0],
            ..tiny_config()
        };
        let results = run_experiment(&cfg).unwrap();
        assert_eq!(results.rows.len(), 1);
        let loss = LossModel::glm_sigmoid_sq();
        let data = synthesize_dataset(&loss, 3, 10, &RngStream::new(1, 0)).unwrap();
        assert!(data.has_labels());
        for i in 0..10 {
            let y = data.label(i).unwrap();
            assert!((0.0..=1.0).contains(&y));
        }
    }

    #[test]
    fn mean_std_basics() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_abs_diff_eq!(m, 2.0);
        assert_abs_diff_eq!(s, std::f64::consts::SQRT_2, epsilon = 1e-12);
        let (m1, s1) = mean_std(&[5.0]);
        assert_eq!((m1, s1), (5.0, 0.0));
    }

    #[test]
    fn grid_search_singleton_returns_the_grid_point() {
        let cfg = ExperimentConfig {
            grid_repeats: 2,
            ..tiny_config()
        };
        let grid = HyperGrid {
            sgd_eta: vec![0.003],
            spider_eta: vec![0.004],
            spider_q: vec![2],
            warm_t1: vec![2],
            warm_q: vec![3],
            warm_sgd_eta: vec![0.005],
            warm_spider_eta: vec![0.006],
            warm_eps1_frac: vec![0.5],
        };
        let sel = grid_search(&cfg, &grid).unwrap();
        assert_eq!(sel.per_epsilon.len(), 1);
        let h = sel.per_epsilon[0].1;
        assert_abs_diff_eq!(h.sgd_eta, 0.003);
        assert_abs_diff_eq!(h.spider_eta, 0.004);
        assert_eq!(h.spider_q, 2);
        assert_eq!(h.warm_t1, 2);
        assert_eq!(h.warm_q, 3);
        assert!(sel.listing.contains("sgd eta = 0.003"));
    }

    #[test]
    fn argmin_ties_keep_the_first_candidate() {
        let base = tuned_hypers(1.0);
        let first = TunedHypers {
            sgd_eta: 0.111,
            ..base
        };
        let second = TunedHypers {
            sgd_eta: 0.222,
            ..base
        };
        // equal scores: the earlier candidate must win
        let picked = argmin_over(vec![first, second], |_| Ok(1.0)).unwrap();
        assert_abs_diff_eq!(picked.sgd_eta, 0.111);
        // a strictly better later candidate still wins
        let picked = argmin_over(vec![first, second], |h| Ok(h.sgd_eta)).unwrap();
        assert_abs_diff_eq!(picked.sgd_eta, 0.111);
        let picked = argmin_over(vec![second, first], |h| Ok(h.sgd_eta)).unwrap();
        assert_abs_diff_eq!(picked.sgd_eta, 0.111);
    }

    #[test]
    fn grid_search_prefers_the_stable_step_size() {
        // 5.0 wildly overshoots on the quadratic (beta = 1), 0.05 converges;
        // the search must pick the stable one. A loose budget keeps the
        // noise small enough that the scores reflect the step sizes rather
        // than the draws.
        let cfg = ExperimentConfig {
            loss: "quadratic_pl".into(),
            epsilons: vec![10.0],
            grid_repeats: 4,
            algorithms: vec![Algorithm::Sgd],
            seed: 41,
            ..tiny_config()
        };
        let grid = HyperGrid {
            sgd_eta: vec![5.0, 0.05],
            ..Default::default()
        };
        let sel = grid_search(&cfg, &grid).unwrap();
        assert_abs_diff_eq!(sel.per_epsilon[0].1.sgd_eta, 0.05);
    }

    #[test]
    fn sweep_validates_its_inputs() {
        let mut cfg = SweepConfig {
            ns: vec![100, 100, 200],
            trials: 1,
            ..Default::default()
        };
        assert!(matches!(
            sweep_scaling(&cfg),
            Err(Error::InvalidArgument(_))
        ));
        cfg.ns = vec![100, 200];
        assert!(sweep_scaling(&cfg).is_err());
    }

    #[test]
    fn noiseless_sweep_from_a_fixed_start_is_flat() {
        // With noise off and a start far from the optimum, the measured
        // gradient norm is dominated by the deterministic descent path and
        // barely moves with n.
        let cfg = SweepConfig {
            ns: vec![50, 100, 200],
            trials: 3,
            t1: 10,
            t2: 10,
            noiseless: true,
            w_init_radius: 2.0,
            seed: 91,
            ..Default::default()
        };
        let report = sweep_scaling(&cfg).unwrap();
        assert!(
            report.slope.abs() < 0.15,
            "control slope {} should be near 0",
            report.slope
        );
    }

    #[test]
    fn noisy_sweep_slope_is_negative() {
        // Very small version of the scaling check: more samples means less
        // noise means smaller gradients.
        let cfg = SweepConfig {
            ns: vec![100, 400, 1600],
            trials: 4,
            ..Default::default()
        };
        let report = sweep_scaling(&cfg).unwrap();
        assert!(report.slope < -0.3, "slope {} not decreasing", report.slope);
        assert_eq!(report.points.len(), 3);
        assert!(report.to_csv().contains("# slope="));
    }

    #[test]
    fn fit_line_recovers_an_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.9 * x).collect();
        let (slope, r2) = fit_line(&xs, &ys);
        assert_abs_diff_eq!(slope, -0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn results_write_to_disk() {
        let cfg = ExperimentConfig {
            trials: 1,
            epsilons: vec![1.0],
            algorithms: vec![Algorithm::Sgd],
            ..tiny_config()
        };
        let results = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        results.write_to(dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert!(csv.starts_with("epsilon,algorithm,trial,"));
        assert!(dir.path().join("summary.csv").exists());
        assert!(dir.path().join("ledger.txt").exists());
    }
}
