//! Proof obligations over the miter: encoding, solving, and counterexample
//! extraction for the step, base, unrolled and per-signal templates.

mod cex;
mod encode;

pub use cex::{interface_signals, replay_cex, replay_counters, Counterexample, Diff, Instances};
pub use encode::{encode_plan, Aig, Encoded, Goal, Plan, Prepared, Start, Target};

use crate::miter::{coi_candidates, MiterError, MiterModel, PartitionLedger};
use crate::netlist::Role;
use crate::sat::{self, Budget, SolveResult, SolverChoice, SolverError};
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffKind {
    /// Register that may become a data register.
    State,
    /// Control register differing after reset.
    ControlState,
    /// Control output or observation point.
    Output,
    BoxInput,
    Invariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Candidate,
    Invariant,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "kebab-case")]
pub enum Status {
    Hold,
    Violated,
    CandidatePropagation,
    InvariantRefuted,
    Unknown(String),
}

impl Status {
    pub fn is_hold(&self) -> bool {
        *self == Status::Hold
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub solver: SolverChoice,
    pub budget: Budget,
    /// Obligations with more clauses than this are reported unknown.
    pub max_clauses: Option<usize>,
    /// Restrict step state goals to the cone of influence.
    pub coi: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            solver: SolverChoice::Embedded,
            budget: Budget::default(),
            max_clauses: Some(20_000_000),
            coi: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObligationKind {
    Step,
    Base { warmup: usize },
    UnrolledIo { k: usize },
    Unrolled { k: usize },
    PerSignal { z: String },
    Divergence,
}

/// What an obligation assumed and what it set out to prove.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObligationSpec {
    #[serde(flatten)]
    pub kind: ObligationKind,
    /// Registers assumed equal in the first frame.
    pub assumed_equal: Vec<String>,
    /// Registers whose equality is proven.
    pub state_goals: Vec<String>,
    pub constraints: Vec<String>,
    pub invariants: Vec<String>,
    pub cross_equalities: Vec<String>,
    pub box_obligations: Vec<String>,
}

impl ObligationSpec {
    pub fn label(&self) -> String {
        match &self.kind {
            ObligationKind::Step => "step".into(),
            ObligationKind::Base { warmup } => format!("base(r={warmup})"),
            ObligationKind::UnrolledIo { k } => format!("unrolled-io(k={k})"),
            ObligationKind::Unrolled { k } => format!("unrolled(k={k})"),
            ObligationKind::PerSignal { z } => format!("per-signal({z})"),
            ObligationKind::Divergence => "divergence".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub vars: u64,
    pub clauses: u64,
    pub solver_calls: u32,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofResult {
    #[serde(flatten)]
    pub status: Status,
    pub cex: Option<Counterexample>,
    pub obligation: ObligationSpec,
    pub stats: Stats,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Miter(#[from] MiterError),
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("internal error: counterexample does not replay ({0})")]
    Replay(String),
}

enum Outcome {
    Unsat,
    Unknown(String),
    Sat(Counterexample, Vec<Goal>),
}

fn run_plan(p: &Prepared, plan: &Plan, cfg: &EngineConfig, label: &str, stats: &mut Stats) -> Result<Outcome, EngineError> {
    let enc = encode_plan(p, plan);
    stats.vars += enc.aig.cnf.num_vars as u64;
    stats.clauses += enc.aig.cnf.clauses.len() as u64;
    if !enc.has_goal {
        return Ok(Outcome::Unsat);
    }
    if let Some(max) = cfg.max_clauses {
        if enc.aig.cnf.clauses.len() > max {
            return Ok(Outcome::Unknown(format!(
                "{} clauses exceed the budget of {max}",
                enc.aig.cnf.clauses.len()
            )));
        }
    }
    let t0 = Instant::now();
    let r = sat::solve(&enc.aig.cnf, &cfg.solver, &cfg.budget)?;
    stats.solve_ms += t0.elapsed().as_secs_f64() * 1e3;
    stats.solver_calls += 1;
    match r {
        SolveResult::Unsat => Ok(Outcome::Unsat),
        SolveResult::Unknown(why) => Ok(Outcome::Unknown(why)),
        SolveResult::Sat(model) => {
            let (cex, failed) = cex::extract(p, &enc, &model, &plan.goals, label);
            let ok = !failed.is_empty() && replay_cex(&p.m.base, &cex);
            cex::record_replay(ok);
            if !ok {
                return Err(EngineError::Replay(format!("{label} on `{}`", p.m.base.name)));
            }
            Ok(Outcome::Sat(cex, failed))
        }
    }
}

fn status_of(failed: &[Goal]) -> Status {
    match failed.iter().map(|g| g.severity).max() {
        Some(Severity::Violation) => Status::Violated,
        Some(Severity::Invariant) => Status::InvariantRefuted,
        _ => Status::CandidatePropagation,
    }
}

fn pair(loc: &str, frame: usize, kind: DiffKind, severity: Severity) -> Goal {
    Goal {
        loc: loc.to_string(),
        frame,
        kind,
        severity,
        target: Target::Pair(loc.to_string()),
    }
}

fn output_goals(m: &MiterModel, frame: usize, out: &mut Vec<Goal>) {
    for o in m.base.outputs_with(Role::Control) {
        out.push(pair(&o.name, frame, DiffKind::Output, Severity::Violation));
    }
    for o in &m.base.observations {
        out.push(pair(o, frame, DiffKind::Output, Severity::Violation));
    }
}

/// Box input obligations. Data pins are included when `data` accepts them.
fn box_goals(m: &MiterModel, frame: usize, data: &dyn Fn(&str) -> bool, data_severity: Severity, out: &mut Vec<Goal>) {
    for (pin, role) in m.box_obligations() {
        match role {
            Role::Control => out.push(pair(&pin, frame, DiffKind::BoxInput, Severity::Violation)),
            Role::Data if data(&pin) => out.push(pair(&pin, frame, DiffKind::BoxInput, data_severity)),
            Role::Data => {}
        }
    }
}

fn invariant_goals(ledger: &PartitionLedger, frame: usize, out: &mut Vec<Goal>) {
    for inv in &ledger.invariants {
        out.push(Goal {
            loc: inv.name.clone(),
            frame,
            kind: DiffKind::Invariant,
            severity: Severity::Invariant,
            target: Target::Invariant(inv.name.clone()),
        });
    }
}

fn spec(m: &MiterModel, ledger: &PartitionLedger, kind: ObligationKind, assumed: Vec<String>, goals: Vec<String>, boxes: bool) -> ObligationSpec {
    ObligationSpec {
        kind,
        assumed_equal: assumed,
        state_goals: goals,
        constraints: ledger.phi.iter().map(|c| c.name.clone()).collect(),
        invariants: ledger.invariants.iter().map(|c| c.name.clone()).collect(),
        cross_equalities: ledger.cross_equalities.iter().map(|c| c.name.clone()).collect(),
        box_obligations: if boxes { m.box_obligations().into_iter().map(|(p, _)| p).collect() } else { vec![] },
    }
}

fn finish(outcome: Outcome, obligation: ObligationSpec, stats: Stats) -> ProofResult {
    let (status, cex) = match outcome {
        Outcome::Unsat => (Status::Hold, None),
        Outcome::Unknown(why) => (Status::Unknown(why), None),
        Outcome::Sat(cex, failed) => (status_of(&failed), Some(cex)),
    };
    ProofResult { status, cex, obligation, stats }
}

/// Registers proven by the step: the cone-of-influence candidates or all of
/// Z_C.
pub fn step_goal_registers(m: &MiterModel, ledger: &PartitionLedger, cfg: &EngineConfig) -> Vec<String> {
    if cfg.coi {
        coi_candidates(m, ledger)
    } else {
        m.candidate_states.clone()
    }
}

fn step_plan(m: &MiterModel, ledger: &PartitionLedger, regs: &[String], data_pins: &dyn Fn(&str) -> bool) -> Plan {
    let mut goals = Vec::new();
    for f in 0..2 {
        output_goals(m, f, &mut goals);
        box_goals(m, f, data_pins, Severity::Candidate, &mut goals);
    }
    for r in regs {
        goals.push(pair(r, 1, DiffKind::State, Severity::Candidate));
    }
    invariant_goals(ledger, 1, &mut goals);
    Plan {
        frames: 2,
        start: Start::Aliased(m.candidate_states.clone()),
        assume_invariants: true,
        goals,
    }
}

/// Single-cycle inductive step: Z_C equal and invariants at t imply Z_C
/// equal and invariants at t+1, with control outputs and box obligations
/// equal at t and t+1.
pub fn check_step(m: &MiterModel, ledger: &PartitionLedger, cfg: &EngineConfig) -> Result<ProofResult, EngineError> {
    let regs = step_goal_registers(m, ledger, cfg);
    let p = Prepared::new(m, ledger)?;
    let plan = step_plan(m, ledger, &regs, &|_| true);
    let mut stats = Stats::default();
    let out = run_plan(&p, &plan, cfg, "step", &mut stats)?;
    let o = spec(m, ledger, ObligationKind::Step, m.candidate_states.clone(), regs, true);
    Ok(finish(out, o, stats))
}

/// Step obligation restricted to one register (or one data box input),
/// together with the control outputs, control box inputs and invariants.
pub fn check_signal(m: &MiterModel, ledger: &PartitionLedger, z: &str, cfg: &EngineConfig) -> Result<ProofResult, EngineError> {
    let is_reg = m.candidate_states.iter().any(|r| r == z);
    let is_pin = m.box_obligations().iter().any(|(p, r)| p == z && *r == Role::Data);
    if !is_reg && !is_pin {
        return Err(EngineError::Precondition(format!("`{z}` is not a propagation candidate")));
    }
    let p = Prepared::new(m, ledger)?;
    let regs: Vec<String> = if is_reg { vec![z.to_string()] } else { vec![] };
    let plan = step_plan(m, ledger, &regs, &|pin| pin == z);
    let mut stats = Stats::default();
    let kind = ObligationKind::PerSignal { z: z.to_string() };
    let label = format!("per-signal({z})");
    let out = run_plan(&p, &plan, cfg, &label, &mut stats)?;
    let o = spec(m, ledger, kind, m.candidate_states.clone(), regs, true);
    Ok(finish(out, o, stats))
}

/// Every register (and data box input) that can diverge at t+1 under the
/// step assumptions, found by repeated solving with blocking.
pub fn step_divergence_set(m: &MiterModel, ledger: &PartitionLedger, cfg: &EngineConfig) -> Result<Vec<String>, EngineError> {
    let p = Prepared::new(m, ledger)?;
    let mut remaining: Vec<String> = m.candidate_states.clone();
    remaining.extend(m.box_obligations().into_iter().filter(|(_, r)| *r == Role::Data).map(|(p, _)| p));
    let mut found = Vec::new();
    let mut stats = Stats::default();
    loop {
        let goals: Vec<Goal> = remaining.iter().map(|r| pair(r, 1, DiffKind::State, Severity::Candidate)).collect();
        let plan = Plan {
            frames: 2,
            start: Start::Aliased(m.candidate_states.clone()),
            assume_invariants: true,
            goals,
        };
        match run_plan(&p, &plan, cfg, "divergence", &mut stats)? {
            Outcome::Unsat => break,
            Outcome::Unknown(why) => return Err(EngineError::Precondition(format!("divergence search incomplete: {why}"))),
            Outcome::Sat(_, failed) => {
                for g in failed {
                    remaining.retain(|r| *r != g.loc);
                    found.push(g.loc);
                }
            }
        }
    }
    let order: Vec<&String> = m.candidate_states.iter().collect();
    found.sort_by_key(|r| order.iter().position(|o| *o == r).unwrap_or(usize::MAX));
    Ok(found)
}

/// Induction base: from reset, after `warmup` cycles, Z_C is equal, the
/// invariants hold and the control outputs agree.
pub fn check_base(m: &MiterModel, ledger: &PartitionLedger, warmup: usize, cfg: &EngineConfig) -> Result<ProofResult, EngineError> {
    let p = Prepared::new(m, ledger)?;
    let mut goals = Vec::new();
    for r in &m.candidate_states {
        goals.push(pair(r, warmup, DiffKind::ControlState, Severity::Violation));
    }
    invariant_goals(ledger, warmup, &mut goals);
    output_goals(m, warmup, &mut goals);
    box_goals(m, warmup, &|_| true, Severity::Violation, &mut goals);
    let plan = Plan {
        frames: warmup + 1,
        start: Start::Reset,
        assume_invariants: false,
        goals,
    };
    let mut stats = Stats::default();
    let kind = ObligationKind::Base { warmup };
    let out = run_plan(&p, &plan, cfg, &format!("base(r={warmup})"), &mut stats)?;
    let o = spec(m, ledger, kind, vec![], m.candidate_states.clone(), true);
    Ok(finish(out, o, stats))
}

fn deepen(
    p: &Prepared,
    k: usize,
    cfg: &EngineConfig,
    label: &str,
    goals_at: &dyn Fn(usize) -> Vec<Goal>,
    stats: &mut Stats,
) -> Result<Outcome, EngineError> {
    let all: Vec<String> = p.m.base.regs.iter().map(|r| r.name.clone()).collect();
    for j in 0..=k {
        let plan = Plan {
            frames: j + 1,
            start: Start::Aliased(all.clone()),
            assume_invariants: false,
            goals: goals_at(j),
        };
        match run_plan(p, &plan, cfg, label, stats)? {
            Outcome::Unsat => continue,
            other => return Ok(other),
        }
    }
    Ok(Outcome::Unsat)
}

/// All state equal at t; control outputs equal during t..t+k. Reports the
/// earliest failing cycle.
pub fn check_unrolled_io(m: &MiterModel, ledger: &PartitionLedger, k: usize, cfg: &EngineConfig) -> Result<ProofResult, EngineError> {
    if k == 0 {
        return Err(EngineError::Precondition("k must be at least 1".into()));
    }
    let p = Prepared::new(m, ledger)?;
    let mut stats = Stats::default();
    let label = format!("unrolled-io(k={k})");
    let out = deepen(
        &p,
        k,
        cfg,
        &label,
        &|j| {
            let mut g = Vec::new();
            output_goals(m, j, &mut g);
            box_goals(m, j, &|_| false, Severity::Candidate, &mut g);
            g
        },
        &mut stats,
    )?;
    let all: Vec<String> = m.base.regs.iter().map(|r| r.name.clone()).collect();
    let mut o = spec(m, ledger, ObligationKind::UnrolledIo { k }, all, vec![], false);
    o.invariants.clear();
    o.box_obligations = m.box_obligations().into_iter().filter(|(_, r)| *r == Role::Control).map(|(p, _)| p).collect();
    Ok(finish(out, o, stats))
}

/// As [`check_unrolled_io`], additionally proving Z_C equal during t..t+k.
pub fn check_unrolled(m: &MiterModel, ledger: &PartitionLedger, k: usize, cfg: &EngineConfig) -> Result<ProofResult, EngineError> {
    if k == 0 {
        return Err(EngineError::Precondition("k must be at least 1".into()));
    }
    let p = Prepared::new(m, ledger)?;
    let mut stats = Stats::default();
    let label = format!("unrolled(k={k})");
    let out = deepen(
        &p,
        k,
        cfg,
        &label,
        &|j| {
            let mut g = Vec::new();
            output_goals(m, j, &mut g);
            box_goals(m, j, &|_| true, Severity::Candidate, &mut g);
            if j > 0 {
                for r in &m.candidate_states {
                    g.push(pair(r, j, DiffKind::State, Severity::Candidate));
                }
            }
            g
        },
        &mut stats,
    )?;
    let all: Vec<String> = m.base.regs.iter().map(|r| r.name.clone()).collect();
    let mut o = spec(m, ledger, ObligationKind::Unrolled { k }, all, m.candidate_states.clone(), true);
    o.invariants.clear();
    Ok(finish(out, o, stats))
}
