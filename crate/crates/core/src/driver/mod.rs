//! The refinement loop: prove, ask about diverging locations, reclassify,
//! repeat. Also session persistence, the per-signal scheduler and the
//! simulation oracles.

mod oracle;
mod provider;

pub use oracle::{oracle_exhaustive, oracle_random, OracleError, OracleVerdict, RandomReport, Witness};
pub use provider::{
    Answer, Decision, DecisionProvider, Exclusion, InteractiveProvider, ProviderError, Query, ReplayProvider,
    ScriptedProvider,
};

use crate::engine::{
    check_base, check_signal, check_step, check_unrolled, step_goal_registers, Counterexample, Diff, DiffKind,
    EngineConfig, EngineError, ObligationSpec, ProofResult, Stats, Status,
};
use crate::miter::{build_miter, MiterError, MiterModel, PartitionLedger, Provenance, Sidecar};
use crate::netlist::{Netlist, Role};
use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

pub const SCHEMA: &str = "dit-session/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Mode {
    /// Single-cycle step plus base, iterated to a fixpoint.
    Inductive,
    /// The same loop with the unrolled template of depth `k`.
    Unrolled { k: usize },
    /// One unrolled proof with a user-supplied control set. Never yields a
    /// proof of obliviousness.
    BugHunt { control: Vec<String>, k: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriverConfig {
    pub engine: EngineConfig,
    /// Cycles after reset at which the base is checked.
    pub warmup: usize,
    /// Treat every output divergence as a violation without asking.
    pub strict_alg1: bool,
    pub max_iterations: usize,
    /// Split the step into one obligation per candidate, run on this many
    /// threads.
    pub workers: Option<usize>,
}

impl Default for DriverConfig {
    fn default() -> Self {
        DriverConfig {
            engine: EngineConfig::default(),
            warmup: 0,
            strict_alg1: false,
            max_iterations: 1000,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Pending,
    Do,
    DoPhi {
        constraints: Vec<String>,
        invariants: Vec<String>,
        cross_equalities: Vec<String>,
    },
    Violation {
        cex: String,
    },
    Unknown {
        reason: String,
    },
    /// Bug hunting found nothing. Not a proof.
    NoViolationFound,
}

impl Verdict {
    pub fn is_oblivious(&self) -> bool {
        matches!(self, Verdict::Do | Verdict::DoPhi { .. })
    }

    pub fn is_violation(&self) -> bool {
        matches!(self, Verdict::Violation { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObligationRecord {
    pub iteration: usize,
    pub spec: ObligationSpec,
    #[serde(flatten)]
    pub status: Status,
    pub cex: Option<String>,
    pub diffs: Vec<Diff>,
    /// |Z_C| when the obligation was posed.
    pub candidates: usize,
    pub stats: Stats,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub iteration: usize,
    /// `None` for ledger edits made outside a query.
    pub query: Option<Query>,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub schema: String,
    pub design: String,
    pub netlist_hash: String,
    pub netlist_path: Option<String>,
    pub ledger: PartitionLedger,
    pub mode: Mode,
    pub config: DriverConfig,
    pub obligations: Vec<ObligationRecord>,
    pub decisions: Vec<DecisionRecord>,
    pub cexs: IndexMap<String, Counterexample>,
    pub verdict: Verdict,
    pub seed: u64,
    pub iterations: usize,
    /// How often Z_C was reset after an invalid counterexample.
    pub resets: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session was recorded for netlist {expected}, found {found}")]
    HashMismatch { expected: String, found: String },
    #[error("unsupported session schema `{0}`, expected `{SCHEMA}`")]
    Schema(String),
    #[error("malformed session: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, thiserror::Error)]
pub enum DriverError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Miter(#[from] MiterError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("invalid decision for `{location}`: {msg}")]
    BadDecision { location: String, msg: String },
}

impl Session {
    /// A fresh session. Exclusions of `sidecar` that no `invalid:` rule
    /// refers to are applied up front, as are its box modes.
    pub fn new(n: &Netlist, sidecar: Option<&Sidecar>, mode: Mode, config: DriverConfig) -> Result<Self, DriverError> {
        let mut ledger = PartitionLedger::new(n);
        if let Some(s) = sidecar {
            let deferred = s.deferred();
            for c in s.constraints.iter().filter(|c| !deferred.contains(&c.name)) {
                ledger.add_constraint(n, c.clone())?;
            }
            for c in s.invariants.iter().filter(|c| !deferred.contains(&c.name)) {
                ledger.add_invariant(n, c.clone())?;
            }
            for c in s.cross_equalities.iter().filter(|c| !deferred.contains(&c.name)) {
                ledger.add_cross_equality(n, c.clone())?;
            }
            for (b, m) in &s.box_modes {
                ledger.set_box_mode(n, b, *m)?;
            }
        }
        Ok(Session {
            schema: SCHEMA.into(),
            design: n.name.clone(),
            netlist_hash: n.content_hash(),
            netlist_path: None,
            ledger,
            mode,
            config,
            obligations: Vec::new(),
            decisions: Vec::new(),
            cexs: IndexMap::new(),
            verdict: Verdict::Pending,
            seed: 0,
            iterations: 0,
            resets: 0,
        })
    }

    pub fn check_netlist(&self, n: &Netlist) -> Result<(), SessionError> {
        let found = n.content_hash();
        if found != self.netlist_hash {
            return Err(SessionError::HashMismatch {
                expected: self.netlist_hash.clone(),
                found,
            });
        }
        Ok(())
    }

    /// Digest of the obligations log without timing fields.
    pub fn obligations_hash(&self) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            iteration: usize,
            spec: &'a ObligationSpec,
            status: &'a Status,
            cex: &'a Option<String>,
            diffs: &'a [Diff],
            candidates: usize,
            vars: u64,
            clauses: u64,
        }
        let mut h = Sha256::new();
        for r in &self.obligations {
            let v = View {
                iteration: r.iteration,
                spec: &r.spec,
                status: &r.status,
                cex: &r.cex,
                diffs: &r.diffs,
                candidates: r.candidates,
                vars: r.stats.vars,
                clauses: r.stats.clauses,
            };
            h.update(serde_json::to_vec(&v).expect("record serializes"));
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SessionError> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        match v.get("schema").and_then(|s| s.as_str()) {
            Some(SCHEMA) => Ok(serde_json::from_value(v)?),
            other => Err(SessionError::Schema(other.unwrap_or("").to_string())),
        }
    }

    fn store_cex(&mut self, cex: Counterexample) -> String {
        let id = format!("cex-{}", self.cexs.len() + 1);
        self.cexs.insert(id.clone(), cex);
        id
    }

    /// Appends `r` to the obligations log, storing its counterexample.
    pub fn record(&mut self, r: &ProofResult, wall_ms: f64) -> Option<String> {
        let cex = r.cex.clone().map(|c| self.store_cex(c));
        self.obligations.push(ObligationRecord {
            iteration: self.iterations,
            spec: r.obligation.clone(),
            status: r.status.clone(),
            cex: cex.clone(),
            diffs: r.cex.as_ref().map(|c| c.diffs.clone()).unwrap_or_default(),
            candidates: self.ledger.z_c().len(),
            stats: r.stats.clone(),
            wall_ms,
        });
        cex
    }

    fn finish(&mut self, v: Verdict) {
        log::info!("{}: verdict {:?} after {} iterations", self.design, v, self.iterations);
        self.verdict = v;
    }
}

/// Writes `s` to `path` through a temporary file and a rename.
pub fn save_session(s: &Session, path: &Path) -> Result<(), SessionError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, s.to_json())?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a session and checks it against the netlist it was recorded for.
pub fn load_session(path: &Path, n: &Netlist) -> Result<Session, SessionError> {
    let s = read_session(path)?;
    s.check_netlist(n)?;
    Ok(s)
}

/// Reads a session without a netlist check.
pub fn read_session(path: &Path) -> Result<Session, SessionError> {
    Session::from_json(&std::fs::read_to_string(path)?)
}

/// Per-signal obligations for every propagation candidate, run on
/// `workers` threads. Keys are in candidate order.
pub fn schedule_parallel(
    m: &MiterModel,
    ledger: &PartitionLedger,
    cfg: &EngineConfig,
    workers: usize,
) -> Result<IndexMap<String, ProofResult>, EngineError> {
    if workers == 0 {
        return Err(EngineError::Precondition("at least one worker is required".into()));
    }
    let cands = parallel_candidates(m, ledger, cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| EngineError::Precondition(e.to_string()))?;
    let results: Vec<ProofResult> = pool.install(|| {
        cands
            .par_iter()
            .map(|z| check_signal(m, ledger, z, cfg))
            .collect::<Result<_, _>>()
    })?;
    Ok(cands.into_iter().zip(results).collect())
}

fn parallel_candidates(m: &MiterModel, ledger: &PartitionLedger, cfg: &EngineConfig) -> Vec<String> {
    let mut c = step_goal_registers(m, ledger, cfg);
    c.extend(m.box_obligations().into_iter().filter(|(_, r)| *r == Role::Data).map(|(p, _)| p));
    c
}

/// Combined status of a set of per-signal results, most severe first.
pub fn aggregate_status<'a>(results: impl IntoIterator<Item = &'a ProofResult>) -> Status {
    let mut out = Status::Hold;
    for r in results {
        let rank = |s: &Status| match s {
            Status::Hold => 0,
            Status::CandidatePropagation => 1,
            Status::InvariantRefuted => 2,
            Status::Violated => 3,
            Status::Unknown(_) => 4,
        };
        if rank(&r.status) > rank(&out) {
            out = r.status.clone();
        }
    }
    out
}

enum Step {
    Continue,
    Done,
}

fn violation_kind(m: &MiterModel, d: &Diff) -> bool {
    match d.kind {
        DiffKind::Output | DiffKind::ControlState => true,
        DiffKind::BoxInput => m.box_obligations().iter().any(|(p, r)| *p == d.loc && *r == Role::Control),
        DiffKind::State | DiffKind::Invariant => false,
    }
}

/// Runs the refinement loop on `s` until it reaches a verdict. A session
/// with a verdict other than pending is returned unchanged.
pub fn run_upec_dit(s: &mut Session, n: Arc<Netlist>, provider: &mut dyn DecisionProvider) -> Result<(), DriverError> {
    s.check_netlist(&n)?;
    if s.verdict != Verdict::Pending {
        return Ok(());
    }
    if let Mode::BugHunt { control, k } = s.mode.clone() {
        return bug_hunt(s, n, &control, k);
    }
    loop {
        if s.iterations >= s.config.max_iterations {
            s.finish(Verdict::Unknown {
                reason: format!("iteration cap of {} reached", s.config.max_iterations),
            });
            return Ok(());
        }
        s.iterations += 1;
        let m = build_miter(n.clone(), &s.ledger);
        let results = prove_iteration(s, &m)?;
        let mut failing = Vec::new();
        for (r, wall) in results {
            let id = s.record(&r, wall);
            if let Status::Unknown(reason) = &r.status {
                s.finish(Verdict::Unknown { reason: reason.clone() });
                return Ok(());
            }
            if let (Some(id), Some(cex)) = (id, r.cex) {
                failing.push((id, cex.diffs));
            }
        }
        if failing.is_empty() {
            return base(s, &m);
        }
        if let Step::Done = refine(s, &n, &m, &failing, provider)? {
            return Ok(());
        }
    }
}

fn prove_iteration(s: &Session, m: &MiterModel) -> Result<Vec<(ProofResult, f64)>, EngineError> {
    let cfg = &s.config.engine;
    let t0 = Instant::now();
    let ms = |t: Instant| t.elapsed().as_secs_f64() * 1e3;
    match (&s.mode, s.config.workers) {
        (Mode::Unrolled { k }, _) => Ok(vec![(check_unrolled(m, &s.ledger, *k, cfg)?, ms(t0))]),
        (_, Some(w)) if !parallel_candidates(m, &s.ledger, cfg).is_empty() => {
            let map = schedule_parallel(m, &s.ledger, cfg, w)?;
            let each = ms(t0) / map.len() as f64;
            Ok(map.into_values().map(|r| (r, each)).collect())
        }
        _ => Ok(vec![(check_step(m, &s.ledger, cfg)?, ms(t0))]),
    }
}

fn ask(
    s: &mut Session,
    provider: &mut dyn DecisionProvider,
    cex_id: &str,
    d: &Diff,
    output: bool,
) -> Result<Decision, DriverError> {
    let q = Query {
        cex_id: cex_id.to_string(),
        location: d.loc.clone(),
        cycle: d.cycle,
        kind: d.kind,
        suggested: if output { Decision::ClassifyControl } else { Decision::ClassifyData },
    };
    provider.progress(s);
    let answer = provider.decide(&q, &s.ledger)?;
    s.decisions.push(DecisionRecord {
        iteration: s.iterations,
        query: Some(q),
        answer: answer.clone(),
    });
    Ok(answer.decision)
}

/// Adds the exclusions of an invalid-counterexample decision and resets
/// Z_C.
pub fn apply_exclusions(ledger: &mut PartitionLedger, n: &Netlist, ex: &[Exclusion]) -> Result<(), DriverError> {
    if ex.is_empty() {
        return Err(DriverError::BadDecision {
            location: String::new(),
            msg: "an invalid counterexample must add at least one exclusion".into(),
        });
    }
    for e in ex {
        match e {
            Exclusion::Constraint(c) => ledger.add_constraint(n, c.clone())?,
            Exclusion::Invariant(c) => ledger.add_invariant(n, c.clone())?,
            Exclusion::CrossEq(c) => ledger.add_cross_equality(n, c.clone())?,
        }
    }
    Ok(())
}

fn invalidate(s: &mut Session, n: &Netlist, cex_id: &str, ex: &[Exclusion]) -> Result<Step, DriverError> {
    apply_exclusions(&mut s.ledger, n, ex)?;
    s.ledger.reset_control(cex_id);
    s.resets += 1;
    Ok(Step::Continue)
}

fn refine(
    s: &mut Session,
    n: &Netlist,
    m: &MiterModel,
    failing: &[(String, Vec<Diff>)],
    provider: &mut dyn DecisionProvider,
) -> Result<Step, DriverError> {
    // Output divergences first: they end the campaign unless the
    // counterexample is declared invalid.
    for (id, diffs) in failing {
        for d in diffs.iter().filter(|d| violation_kind(m, d)) {
            if s.config.strict_alg1 {
                s.finish(Verdict::Violation { cex: id.clone() });
                return Ok(Step::Done);
            }
            match ask(s, provider, id, d, true)? {
                Decision::InvalidCex { exclusions } => return invalidate(s, n, id, &exclusions),
                Decision::ClassifyControl => {
                    s.finish(Verdict::Violation { cex: id.clone() });
                    return Ok(Step::Done);
                }
                Decision::ClassifyData => {
                    return Err(DriverError::BadDecision {
                        location: d.loc.clone(),
                        msg: "outputs cannot be classified data".into(),
                    })
                }
            }
        }
    }
    for (id, diffs) in failing {
        for d in diffs.iter().filter(|d| d.kind == DiffKind::Invariant) {
            match ask(s, provider, id, d, true)? {
                Decision::InvalidCex { exclusions } => return invalidate(s, n, id, &exclusions),
                _ => {
                    s.finish(Verdict::Unknown {
                        reason: format!("invariant `{}` is not inductive", d.loc),
                    });
                    return Ok(Step::Done);
                }
            }
        }
    }
    for (id, diffs) in failing {
        for d in diffs.iter().filter(|d| !violation_kind(m, d) && d.kind != DiffKind::Invariant) {
            let already = s.ledger.state_class.get(&d.loc).or(s.ledger.box_input_class.get(&d.loc));
            if already.is_some_and(|e| e.class == Role::Data) {
                continue;
            }
            match ask(s, provider, id, d, false)? {
                Decision::ClassifyData => s.ledger.classify(&d.loc, Role::Data, provider.provenance())?,
                Decision::ClassifyControl => {
                    s.finish(Verdict::Violation { cex: id.clone() });
                    return Ok(Step::Done);
                }
                Decision::InvalidCex { exclusions } => return invalidate(s, n, id, &exclusions),
            }
        }
    }
    Ok(Step::Continue)
}

fn base(s: &mut Session, m: &MiterModel) -> Result<(), DriverError> {
    let t0 = Instant::now();
    let r = check_base(m, &s.ledger, s.config.warmup, &s.config.engine)?;
    let id = s.record(&r, t0.elapsed().as_secs_f64() * 1e3);
    let v = match r.status {
        Status::Hold if s.ledger.unconstrained() => Verdict::Do,
        Status::Hold => Verdict::DoPhi {
            constraints: s.ledger.phi.iter().map(|c| c.name.clone()).collect(),
            invariants: s.ledger.invariants.iter().map(|c| c.name.clone()).collect(),
            cross_equalities: s.ledger.cross_equalities.iter().map(|c| c.name.clone()).collect(),
        },
        Status::Unknown(reason) => Verdict::Unknown { reason },
        Status::InvariantRefuted => Verdict::Unknown {
            reason: "an invariant does not hold after reset".into(),
        },
        Status::Violated | Status::CandidatePropagation => Verdict::Violation {
            cex: id.expect("failed base has a counterexample"),
        },
    };
    s.finish(v);
    Ok(())
}

fn bug_hunt(s: &mut Session, n: Arc<Netlist>, control: &[String], k: usize) -> Result<(), DriverError> {
    for r in n.regs.iter().filter(|r| !control.contains(&r.name)) {
        s.ledger.classify(&r.name, Role::Data, Provenance::UserDecision)?;
    }
    s.iterations += 1;
    let m = build_miter(n, &s.ledger);
    let t0 = Instant::now();
    let r = check_unrolled(&m, &s.ledger, k, &s.config.engine)?;
    let id = s.record(&r, t0.elapsed().as_secs_f64() * 1e3);
    let v = match r.status {
        Status::Hold => Verdict::NoViolationFound,
        Status::Unknown(reason) => Verdict::Unknown { reason },
        _ => Verdict::Violation {
            cex: id.expect("failed proof has a counterexample"),
        },
    };
    s.finish(v);
    Ok(())
}
