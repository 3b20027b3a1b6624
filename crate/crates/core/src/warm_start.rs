//! Two-stage warm-started optimization and confidence boosting.
//!
//! [`warm_start`] runs a cheap private coarse search (stage A) to find an
//! initial point, then a private stationary-point finder (stage B) from that
//! point, with the two stage budgets composed additively into one ledger.
//! Stage A can be noisy SGD, an exponential-mechanism pick over a candidate
//! net, or nothing at all (which reduces the whole construction to stage B
//! alone, bit for bit).
//!
//! [`boost_confidence`] wraps any repeatable private run: it repeats the run
//! `k = ceil(log2(2/zeta))` times at budget `(eps/2k, delta/2k)` each and
//! selects among the outputs with an `(eps/2)`-private exponential mechanism,
//! so at least one good run survives except with probability `zeta`.

use ndarray::Array1;

use crate::budget::{basic_compose, verify_budget, LedgerEntry, PrivacyBudget, SpendLedger};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exp_mech::exp_mech_sample;
use crate::losses::{LossMetadata, LossModel};
use crate::net::CandidateNet;
use crate::optimizers::{dp_sgd, dp_spider, RunRecord, SgdConfig, SpiderConfig};
use crate::rng::RngStream;

/// Substream index stage A draws from (relative to the call's stream).
pub const STAGE_A_SUBSTREAM: u64 = 1;
/// Substream index stage B draws from. Running stage B's optimizer alone on
/// `rng.substream(STAGE_B_SUBSTREAM)` reproduces a `stage_a = None` run
/// exactly.
pub const STAGE_B_SUBSTREAM: u64 = 2;

/// The coarse search that produces the initial point.
#[derive(Clone, Debug)]
pub enum WarmStage {
    /// No warm start: stage B keeps its configured `w_init`.
    None,
    /// Noisy SGD under the stage-A budget.
    Sgd(SgdConfig),
    /// Exponential-mechanism pick over a candidate net, scored by empirical
    /// loss (a pure-epsilon mechanism; the stage-A delta goes unused).
    ExpMech(CandidateNet),
}

/// The finisher that runs from the warm point.
#[derive(Clone, Debug)]
pub enum FinishStage {
    Sgd(SgdConfig),
    Spider(SpiderConfig),
}

/// How the global budget is divided between the stages.
#[derive(Clone, Copy, Debug)]
pub struct BudgetSplit {
    pub stage_a: PrivacyBudget,
    pub stage_b: PrivacyBudget,
}

impl BudgetSplit {
    pub fn new(stage_a: PrivacyBudget, stage_b: PrivacyBudget) -> Self {
        BudgetSplit { stage_a, stage_b }
    }

    /// The classic halving: each stage gets `(eps/2, delta/2)`.
    pub fn even(global: &PrivacyBudget) -> Result<Self> {
        let half = global.split_even(2)?;
        Ok(BudgetSplit {
            stage_a: half,
            stage_b: half,
        })
    }

    /// Give stage A the fraction `frac_a` of epsilon; delta is still halved.
    pub fn epsilon_fraction(global: &PrivacyBudget, frac_a: f64) -> Result<Self> {
        if !(frac_a > 0.0 && frac_a < 1.0) {
            return Err(Error::invalid(format!(
                "stage-A fraction must lie in (0, 1), got {frac_a}"
            )));
        }
        let half_delta = global.delta / 2.0;
        Ok(BudgetSplit {
            stage_a: PrivacyBudget::new(global.epsilon * frac_a, half_delta)?,
            stage_b: PrivacyBudget::new(global.epsilon * (1.0 - frac_a), half_delta)?,
        })
    }

    /// Combined cost of both stages.
    pub fn total(&self) -> Result<PrivacyBudget> {
        basic_compose(&self.stage_a, &self.stage_b)
    }
}

/// Per-score sensitivity of empirical loss between neighboring datasets:
/// `2 L D / n`.
pub fn erm_score_sensitivity(metadata: &LossMetadata, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("sensitivity needs a non-empty dataset"));
    }
    Ok(2.0 * metadata.lipschitz * metadata.diameter / n as f64)
}

/// Pick a net point by the exponential mechanism, scoring each candidate by
/// its empirical loss (lower is better).
pub fn exp_mech_warm_start(
    loss: &LossModel,
    data: &Dataset,
    net: &CandidateNet,
    epsilon: f64,
    rng: &RngStream,
) -> Result<Array1<f64>> {
    if net.points().is_empty() {
        return Err(Error::invalid("candidate net is empty"));
    }
    let mut scores = Vec::with_capacity(net.points().len());
    for point in net.points() {
        scores.push(loss.empirical_value(data, point.view())?);
    }
    let sensitivity = erm_score_sensitivity(&loss.metadata, data.len())?;
    let winner = exp_mech_sample(&scores, sensitivity, epsilon, rng)?;
    Ok(net.points()[winner].clone())
}

/// Ledger entry for a stage: the calibrated entry the optimizer config
/// carried if it has one, otherwise the declared stage budget under basic
/// composition.
fn stage_entry(carried: Option<&LedgerEntry>, label: &str, declared: PrivacyBudget) -> LedgerEntry {
    match carried {
        Some(entry) => entry.relabeled(label),
        None => LedgerEntry::basic(label, declared),
    }
}

/// Run stage A under `split.stage_a`, feed its output into stage B's initial
/// point, run stage B under `split.stage_b`, and return stage B's record
/// with a two-entry ledger covering both stages.
///
/// The split is checked against `global` before any data touches an
/// optimizer, and the assembled ledger is re-verified afterwards.
pub fn warm_start(
    loss: &LossModel,
    data: &Dataset,
    stage_a: &WarmStage,
    stage_b: &FinishStage,
    split: &BudgetSplit,
    global: &PrivacyBudget,
    rng: &RngStream,
) -> Result<RunRecord> {
    let total = split.total()?;
    if !total.fits_within(global) {
        return Err(Error::Config(format!(
            "stage split spends ({}, {}) but the global budget is ({}, {})",
            total.epsilon, total.delta, global.epsilon, global.delta
        )));
    }

    let (warm_point, entry_a) = match stage_a {
        WarmStage::None => (
            None,
            LedgerEntry::basic("warm:none", PrivacyBudget::new(0.0, 0.0)?),
        ),
        WarmStage::Sgd(cfg) => {
            let record = dp_sgd(loss, data, cfg, &rng.substream(STAGE_A_SUBSTREAM))?;
            let entry = stage_entry(record.ledger.entries().first(), "warm:sgd", split.stage_a);
            (Some(record.output), entry)
        }
        WarmStage::ExpMech(net) => {
            let point = exp_mech_warm_start(
                loss,
                data,
                net,
                split.stage_a.epsilon,
                &rng.substream(STAGE_A_SUBSTREAM),
            )?;
            // The exponential mechanism is pure-epsilon.
            let entry = LedgerEntry::basic(
                "warm:exp-mech",
                PrivacyBudget::new(split.stage_a.epsilon, 0.0)?,
            );
            (Some(point), entry)
        }
    };

    let stage_b_rng = rng.substream(STAGE_B_SUBSTREAM);
    let (record, entry_b) = match stage_b {
        FinishStage::Sgd(cfg) => {
            let mut cfg = cfg.clone();
            if let Some(w0) = warm_point {
                cfg.w_init = w0;
            }
            let record = dp_sgd(loss, data, &cfg, &stage_b_rng)?;
            let entry = stage_entry(record.ledger.entries().first(), "finish:sgd", split.stage_b);
            (record, entry)
        }
        FinishStage::Spider(cfg) => {
            let mut cfg = cfg.clone();
            if let Some(w0) = warm_point {
                cfg.w_init = w0;
            }
            let record = dp_spider(loss, data, &cfg, &stage_b_rng)?;
            let entry = stage_entry(
                record.ledger.entries().first(),
                "finish:spider",
                split.stage_b,
            );
            (record, entry)
        }
    };

    let mut ledger = SpendLedger::new();
    ledger.push(entry_a);
    ledger.push(entry_b);
    if !verify_budget(&ledger, global) {
        return Err(Error::OverBudget(format!(
            "assembled ledger exceeds the global budget ({}, {}):\n{}",
            global.epsilon,
            global.delta,
            ledger.report()
        )));
    }
    Ok(RunRecord {
        trace: record.trace,
        output: record.output,
        selection: record.selection,
        ledger,
    })
}

/// Result of a boosted run: the selected point, all candidate outputs, the
/// winning index, and the combined ledger.
#[derive(Clone, Debug)]
pub struct BoostResult {
    pub output: Array1<f64>,
    pub candidates: Vec<Array1<f64>>,
    pub winner: usize,
    pub ledger: SpendLedger,
}

/// Number of repetitions needed for failure probability `zeta`.
pub fn boost_run_count(zeta: f64) -> Result<usize> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::invalid(format!(
            "zeta must lie in (0, 1), got {zeta}"
        )));
    }
    Ok((2.0 / zeta).log2().ceil() as usize)
}

/// Repeat a private run `k = ceil(log2(2/zeta))` times at `(eps/2k,
/// delta/2k)` each, then pick among the outputs with an `(eps/2)`-private
/// exponential mechanism scored by empirical loss. The runner receives its
/// run index, its per-run budget, and its own stream.
pub fn boost_confidence<F>(
    loss: &LossModel,
    data: &Dataset,
    zeta: f64,
    budget: &PrivacyBudget,
    rng: &RngStream,
    mut runner: F,
) -> Result<BoostResult>
where
    F: FnMut(usize, &PrivacyBudget, &RngStream) -> Result<Array1<f64>>,
{
    let k = boost_run_count(zeta)?;
    if !(budget.epsilon > 0.0) {
        return Err(Error::Config(
            "confidence boosting needs a positive epsilon to split across runs".into(),
        ));
    }
    let per_run = budget.split_even(2 * k as u64)?;
    let select_epsilon = budget.epsilon / 2.0;

    let mut ledger = SpendLedger::new();
    let mut candidates = Vec::with_capacity(k);
    let mut scores = Vec::with_capacity(k);
    for i in 0..k {
        let point = runner(i, &per_run, &rng.fork(&[1, i as u64]))?;
        if point.len() != data.dim() {
            return Err(Error::invalid(format!(
                "runner {i} returned a point of dimension {}, data has {}",
                point.len(),
                data.dim()
            )));
        }
        scores.push(loss.empirical_value(data, point.view())?);
        candidates.push(point);
        ledger.push(LedgerEntry::basic(format!("boost:run-{}", i + 1), per_run));
    }

    let sensitivity = erm_score_sensitivity(&loss.metadata, data.len())?;
    let winner = exp_mech_sample(&scores, sensitivity, select_epsilon, &rng.fork(&[2]))?;
    ledger.push(LedgerEntry::basic(
        "boost:select",
        PrivacyBudget::new(select_epsilon, 0.0)?,
    ));
    if !verify_budget(&ledger, budget) {
        return Err(Error::OverBudget(format!(
            "boost ledger exceeds its budget ({}, {}):\n{}",
            budget.epsilon,
            budget.delta,
            ledger.report()
        )));
    }
    Ok(BoostResult {
        output: candidates[winner].clone(),
        candidates,
        winner,
        ledger,
    })
}
