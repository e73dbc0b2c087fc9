//! Answers to the driver's per-location questions.

use crate::engine::DiffKind;
use crate::miter::{CrossEq, NamedExpr, PartitionLedger, Provenance, RuleAction, RuleScope, Sidecar};
use serde::{Deserialize, Serialize};
use std::sync::mpsc::{Receiver, Sender};

/// An exclusion added by an invalid-counterexample decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Exclusion {
    Constraint(NamedExpr),
    Invariant(NamedExpr),
    CrossEq(CrossEq),
}

impl Exclusion {
    pub fn name(&self) -> &str {
        match self {
            Exclusion::Constraint(c) | Exclusion::Invariant(c) => &c.name,
            Exclusion::CrossEq(e) => &e.name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "kebab-case")]
pub enum Decision {
    ClassifyData,
    /// The location is a control signal, so the counterexample is a
    /// violation.
    ClassifyControl,
    InvalidCex { exclusions: Vec<Exclusion> },
}

/// One question: how should `location`, diverging in `cex_id`, be treated?
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub cex_id: String,
    pub location: String,
    pub cycle: usize,
    pub kind: DiffKind,
    /// The default answer: data for state, control for outputs.
    pub suggested: Decision,
}

impl Query {
    pub fn is_output(&self) -> bool {
        !matches!(self.kind, DiffKind::State | DiffKind::BoxInput) || self.suggested == Decision::ClassifyControl
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub decision: Decision,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("no rule matches `{0}`")]
    NoMatch(String),
    #[error("decision channel closed")]
    Closed,
    #[error("aborted: {0}")]
    Aborted(String),
}

pub trait DecisionProvider {
    fn decide(&mut self, q: &Query, ledger: &PartitionLedger) -> Result<Answer, ProviderError>;

    /// Called with the campaign state before each query.
    fn progress(&mut self, _session: &super::Session) {}

    /// Provenance recorded for classifications this provider makes.
    fn provenance(&self) -> Provenance {
        Provenance::UserDecision
    }
}

/// Answers from an ordered rule list: the first matching rule wins. An
/// `invalid:` rule whose exclusions are all in force already is skipped.
pub struct ScriptedProvider {
    sidecar: Sidecar,
}

impl ScriptedProvider {
    pub fn new(sidecar: Sidecar) -> Self {
        ScriptedProvider { sidecar }
    }

    fn resolve(&self, names: &[String], ledger: &PartitionLedger) -> Vec<Exclusion> {
        let s = &self.sidecar;
        names
            .iter()
            .filter(|n| !ledger.has_exclusion(n))
            .filter_map(|n| {
                if let Some(c) = s.constraints.iter().find(|c| &c.name == n) {
                    Some(Exclusion::Constraint(c.clone()))
                } else if let Some(c) = s.invariants.iter().find(|c| &c.name == n) {
                    Some(Exclusion::Invariant(c.clone()))
                } else {
                    s.cross_equalities.iter().find(|c| &c.name == n).map(|c| Exclusion::CrossEq(c.clone()))
                }
            })
            .collect()
    }
}

impl DecisionProvider for ScriptedProvider {
    fn decide(&mut self, q: &Query, ledger: &PartitionLedger) -> Result<Answer, ProviderError> {
        let output = q.is_output();
        for r in &self.sidecar.rules {
            let in_scope = match r.scope {
                RuleScope::OnOutput => output,
                RuleScope::Class | RuleScope::OnState => !output,
            };
            if !in_scope || !r.matches(&q.location) {
                continue;
            }
            let rationale = format!("rule at line {}", r.line);
            let decision = match &r.action {
                RuleAction::Data => Decision::ClassifyData,
                RuleAction::Control => Decision::ClassifyControl,
                RuleAction::Invalid(names) => {
                    let exclusions = self.resolve(names, ledger);
                    if exclusions.is_empty() {
                        continue;
                    }
                    Decision::InvalidCex { exclusions }
                }
            };
            return Ok(Answer { decision, rationale });
        }
        if output {
            return Ok(Answer {
                decision: Decision::ClassifyControl,
                rationale: "control output".into(),
            });
        }
        Err(ProviderError::NoMatch(q.location.clone()))
    }

    fn provenance(&self) -> Provenance {
        Provenance::ScriptedRule
    }
}

/// Replays a recorded decisions log in order.
pub struct ReplayProvider {
    answers: std::vec::IntoIter<(Query, Answer)>,
}

impl ReplayProvider {
    pub fn new(log: &[super::DecisionRecord]) -> Self {
        let answers: Vec<(Query, Answer)> = log
            .iter()
            .filter_map(|d| d.query.clone().map(|q| (q, d.answer.clone())))
            .collect();
        ReplayProvider {
            answers: answers.into_iter(),
        }
    }
}

impl DecisionProvider for ReplayProvider {
    fn decide(&mut self, q: &Query, _: &PartitionLedger) -> Result<Answer, ProviderError> {
        match self.answers.next() {
            Some((rq, a)) if rq.location == q.location && rq.cex_id == q.cex_id => Ok(a),
            Some((rq, _)) => Err(ProviderError::Aborted(format!(
                "log expects `{}` of {}, campaign asked for `{}` of {}",
                rq.location, rq.cex_id, q.location, q.cex_id
            ))),
            None => Err(ProviderError::NoMatch(q.location.clone())),
        }
    }
}

/// Forwards each query over a channel and blocks for the answer.
pub struct InteractiveProvider {
    queries: Sender<Query>,
    answers: Receiver<Answer>,
}

impl InteractiveProvider {
    pub fn new(queries: Sender<Query>, answers: Receiver<Answer>) -> Self {
        InteractiveProvider { queries, answers }
    }
}

impl DecisionProvider for InteractiveProvider {
    fn decide(&mut self, q: &Query, _: &PartitionLedger) -> Result<Answer, ProviderError> {
        self.queries.send(q.clone()).map_err(|_| ProviderError::Closed)?;
        self.answers.recv().map_err(|_| ProviderError::Closed)
    }
}
