//! Privacy budgets, composition rules, and the spend ledger.
//!
//! A mechanism's privacy cost is an `(epsilon, delta)` pair. Two composition
//! rules are supported:
//!
//! * **basic** — costs add componentwise: running M1 at (e1,d1) and M2 at
//!   (e2,d2) costs (e1+e2, d1+d2);
//! * **advanced** — for T runs of the same (e,d) mechanism and a slack
//!   delta' in (0,1), the total is
//!   `(sqrt(2 T ln(1/delta')) * e + T * e * (exp(e) - 1), T*d + delta')`,
//!   which beats the basic T*e bound when e is small and T is large.
//!
//! Every private run carries a [`SpendLedger`]: an append-only list of
//! stage entries, each recording the stage's budget and the rule used to
//! compose it. [`verify_budget`] recomputes the total from the entries and
//! flags (never clamps) a ledger that exceeds its global budget.

use crate::error::{Error, Result};

/// An `(epsilon, delta)` differential-privacy budget.
///
/// `epsilon >= 0` and `0 <= delta < 1`; both finite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::invalid(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        if !delta.is_finite() || !(0.0..1.0).contains(&delta) {
            return Err(Error::invalid(format!(
                "delta must lie in [0,1), got {delta}"
            )));
        }
        Ok(PrivacyBudget { epsilon, delta })
    }

    /// Split evenly into `parts` equal shares.
    pub fn split_even(&self, parts: u64) -> Result<PrivacyBudget> {
        if parts == 0 {
            return Err(Error::invalid("cannot split a budget into 0 parts"));
        }
        PrivacyBudget::new(self.epsilon / parts as f64, self.delta / parts as f64)
    }

    /// Componentwise comparison: does this budget fit inside `other`?
    pub fn fits_within(&self, other: &PrivacyBudget) -> bool {
        self.epsilon <= other.epsilon && self.delta <= other.delta
    }
}

/// Basic composition: componentwise sum. Errors (rather than flags) when the
/// summed delta reaches 1, since the result is no longer a meaningful
/// guarantee.
pub fn basic_compose(a: &PrivacyBudget, b: &PrivacyBudget) -> Result<PrivacyBudget> {
    let delta = a.delta + b.delta;
    if delta >= 1.0 {
        return Err(Error::OverBudget(format!(
            "composed delta {} + {} >= 1",
            a.delta, b.delta
        )));
    }
    PrivacyBudget::new(a.epsilon + b.epsilon, delta)
}

/// Advanced composition of `steps` runs of a `per_step` mechanism with slack
/// `delta_prime in (0,1)`:
/// `epsilon' = sqrt(2 T ln(1/delta')) e + T e (exp(e) - 1)`, `delta' + T d`.
///
/// `steps = 0` composes to `(0, delta_prime)`.
pub fn advanced_compose(
    per_step: &PrivacyBudget,
    steps: u64,
    delta_prime: f64,
) -> Result<PrivacyBudget> {
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(Error::invalid(format!(
            "delta_prime must lie in (0,1), got {delta_prime}"
        )));
    }
    let (epsilon, delta) = advanced_compose_raw(per_step, steps, delta_prime);
    if delta >= 1.0 {
        return Err(Error::OverBudget(format!(
            "advanced composition over {steps} steps yields delta {delta} >= 1"
        )));
    }
    PrivacyBudget::new(epsilon, delta)
}

/// The advanced-composition arithmetic without budget validation; used by
/// [`verify_budget`] so an over-spent ledger is reported as a failure rather
/// than an error.
fn advanced_compose_raw(per_step: &PrivacyBudget, steps: u64, delta_prime: f64) -> (f64, f64) {
    let t = steps as f64;
    let e = per_step.epsilon;
    let epsilon = (2.0 * t * (1.0 / delta_prime).ln()).sqrt() * e + t * e * (e.exp() - 1.0);
    (epsilon, t * per_step.delta + delta_prime)
}

/// How a ledger entry's stage total is recomputed from its stored budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CompositionRule {
    /// The stored budget is the stage's total cost.
    Basic,
    /// The stored budget is per step; the stage ran `steps` of them and the
    /// total follows from advanced composition with slack `delta_prime`.
    Advanced { steps: u64, delta_prime: f64 },
}

impl CompositionRule {
    pub fn label(&self) -> String {
        match self {
            CompositionRule::Basic => "basic".into(),
            CompositionRule::Advanced { steps, delta_prime } => {
                format!("advanced(T={steps}, delta_prime={delta_prime})")
            }
        }
    }

    /// Parse the label form produced by [`CompositionRule::label`].
    pub fn from_label(label: &str) -> Result<Self> {
        let label = label.trim();
        if label == "basic" {
            return Ok(CompositionRule::Basic);
        }
        if let Some(body) = label
            .strip_prefix("advanced(")
            .and_then(|s| s.strip_suffix(')'))
        {
            let mut steps: Option<u64> = None;
            let mut delta_prime: Option<f64> = None;
            for part in body.split(',') {
                let part = part.trim();
                if let Some(v) = part.strip_prefix("T=") {
                    steps = v.parse().ok();
                } else if let Some(v) = part.strip_prefix("delta_prime=") {
                    delta_prime = v.parse().ok();
                }
            }
            if let (Some(steps), Some(delta_prime)) = (steps, delta_prime) {
                return Ok(CompositionRule::Advanced { steps, delta_prime });
            }
        }
        Err(Error::invalid(format!(
            "unknown composition rule label {label:?}"
        )))
    }
}

/// One stage of privacy spend: a label, the stored budget, and the rule that
/// turns the stored budget into the stage total.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerEntry {
    pub stage: String,
    pub budget: PrivacyBudget,
    pub rule: CompositionRule,
}

impl LedgerEntry {
    pub fn new(stage: impl Into<String>, budget: PrivacyBudget, rule: CompositionRule) -> Self {
        LedgerEntry {
            stage: stage.into(),
            budget,
            rule,
        }
    }

    pub fn basic(stage: impl Into<String>, budget: PrivacyBudget) -> Self {
        LedgerEntry {
            stage: stage.into(),
            budget,
            rule: CompositionRule::Basic,
        }
    }

    /// Same entry under a different stage label.
    pub fn relabeled(&self, stage: impl Into<String>) -> Self {
        LedgerEntry {
            stage: stage.into(),
            budget: self.budget,
            rule: self.rule,
        }
    }

    /// The stage's total cost under its rule, without validity checks.
    fn contribution_raw(&self) -> (f64, f64) {
        match self.rule {
            CompositionRule::Basic => (self.budget.epsilon, self.budget.delta),
            CompositionRule::Advanced { steps, delta_prime } => {
                advanced_compose_raw(&self.budget, steps, delta_prime)
            }
        }
    }

    /// The stage's total cost as a validated budget.
    pub fn contribution(&self) -> Result<PrivacyBudget> {
        let (epsilon, delta) = self.contribution_raw();
        PrivacyBudget::new(epsilon, delta)
    }
}

/// Append-only record of the privacy spend of a composite run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpendLedger {
    entries: Vec<LedgerEntry>,
}

impl SpendLedger {
    pub fn new() -> Self {
        SpendLedger::default()
    }

    pub fn push(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Raw componentwise total across stages (stages compose basically).
    fn total_raw(&self) -> (f64, f64) {
        self.entries.iter().fold((0.0, 0.0), |(e, d), entry| {
            let (ce, cd) = entry.contribution_raw();
            (e + ce, d + cd)
        })
    }

    /// Total spend as a validated budget; errors if the accumulated delta
    /// reaches 1.
    pub fn total(&self) -> Result<PrivacyBudget> {
        let (epsilon, delta) = self.total_raw();
        if delta >= 1.0 {
            return Err(Error::OverBudget(format!(
                "ledger delta total {delta} >= 1"
            )));
        }
        PrivacyBudget::new(epsilon, delta)
    }

    /// Human-readable report: one `stage, epsilon, delta, rule` line per
    /// entry, followed by the recomputed total.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&format!(
                "{}, {}, {}, {}\n",
                entry.stage,
                entry.budget.epsilon,
                entry.budget.delta,
                entry.rule.label()
            ));
        }
        let (e, d) = self.total_raw();
        out.push_str(&format!("total, {e}, {d}\n"));
        out
    }

    /// Parse a report produced by [`SpendLedger::report`]. Unknown rule
    /// labels are an error; the trailing total line is ignored (it is
    /// recomputed on demand).
    pub fn parse_report(text: &str) -> Result<SpendLedger> {
        let mut ledger = SpendLedger::new();
        for (idx, line) in text.lines().enumerate() {
            let row = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.splitn(4, ',').map(str::trim).collect();
            if fields.len() < 3 {
                return Err(Error::Parse {
                    row,
                    reason: format!("expected `stage, epsilon, delta, rule`, got {line:?}"),
                });
            }
            if fields[0] == "total" {
                continue;
            }
            let epsilon: f64 = fields[1].parse().map_err(|_| Error::Parse {
                row,
                reason: format!("bad epsilon {:?}", fields[1]),
            })?;
            let delta: f64 = fields[2].parse().map_err(|_| Error::Parse {
                row,
                reason: format!("bad delta {:?}", fields[2]),
            })?;
            let rule = if fields.len() == 4 {
                CompositionRule::from_label(fields[3])?
            } else {
                CompositionRule::Basic
            };
            ledger.push(LedgerEntry {
                stage: fields[0].to_string(),
                budget: PrivacyBudget::new(epsilon, delta)?,
                rule,
            });
        }
        Ok(ledger)
    }
}

/// Recompute the ledger total and check it fits within `global`
/// componentwise. An over-spent ledger returns `false`; it is never an
/// error, so callers can log and surface the overage.
pub fn verify_budget(ledger: &SpendLedger, global: &PrivacyBudget) -> bool {
    let (epsilon, delta) = ledger.total_raw();
    epsilon <= global.epsilon && delta <= global.delta
}
