//! HTTP session service.
//!
//! One session per server. Reads are served from the last snapshot, every
//! mutation takes the state lock, updates the session and writes it back to
//! disk. A campaign runs on its own thread and parks at each query until a
//! `POST /api/decision` answers it.

use crate::app::{prove_once, ProveMode};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ditcheck::driver::{
    apply_exclusions, load_session, run_upec_dit, save_session, Answer, Decision, DecisionProvider, DecisionRecord,
    Exclusion, ProviderError, Query, Session, Verdict,
};
use ditcheck::engine::{DiffKind, ProofResult};
use ditcheck::miter::{CrossEq, Instance, MiterError, NamedExpr, PartitionLedger, Provenance, SigRef, Sidecar};
use ditcheck::netlist::{parse_expr, Netlist, Role};
use futures::Stream;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::convert::Infallible;
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc, Mutex, MutexGuard};
use std::time::Duration;
use tokio::sync::{broadcast, watch};

/// How long `POST /api/decision` waits for the campaign to take its next
/// step before answering anyway.
const DECISION_WAIT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ApiEvent {
    Job { id: String, status: JobStatus },
    Cex { id: String },
    Query { query: Query },
    Session { verdict: Verdict, iterations: usize },
}

impl ApiEvent {
    fn name(&self) -> &'static str {
        match self {
            ApiEvent::Job { .. } => "job",
            ApiEvent::Cex { .. } => "cex",
            ApiEvent::Query { .. } => "query",
            ApiEvent::Session { .. } => "session",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Job {
    pub id: String,
    pub mode: String,
    pub status: JobStatus,
    pub result: Option<Value>,
    pub error: Option<String>,
}

struct Pending {
    query: Query,
    reply: mpsc::Sender<Answer>,
}

struct Inner {
    session: Arc<Session>,
    pending: Option<Pending>,
    /// Exclusions posted while a campaign runs, consumed by the next
    /// invalid-counterexample decision.
    staged: Vec<Exclusion>,
    jobs: IndexMap<String, Job>,
    campaign: bool,
}

struct Shared {
    netlist: Arc<Netlist>,
    path: PathBuf,
    inner: Mutex<Inner>,
    events: broadcast::Sender<ApiEvent>,
    generation: watch::Sender<u64>,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    /// Opens the session at `path`, creating it from `sidecar` when the
    /// file does not exist yet.
    pub fn open(n: Netlist, sidecar: Option<Sidecar>, path: &Path) -> Result<Self, String> {
        let session = if path.exists() {
            load_session(path, &n).map_err(|e| e.to_string())?
        } else {
            let s = Session::new(&n, sidecar.as_ref(), ditcheck::driver::Mode::Inductive, Default::default()).map_err(|e| e.to_string())?;
            save_session(&s, path).map_err(|e| e.to_string())?;
            s
        };
        Ok(Self::with_session(n, session, path))
    }

    pub fn with_session(n: Netlist, session: Session, path: &Path) -> Self {
        AppState(Arc::new(Shared {
            netlist: Arc::new(n),
            path: path.to_path_buf(),
            inner: Mutex::new(Inner {
                session: Arc::new(session),
                pending: None,
                staged: Vec::new(),
                jobs: IndexMap::new(),
                campaign: false,
            }),
            events: broadcast::channel(256).0,
            generation: watch::channel(0).0,
        }))
    }

    /// Current session snapshot.
    pub fn session(&self) -> Arc<Session> {
        self.0.lock().session.clone()
    }
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn emit(&self, e: ApiEvent) {
        let _ = self.events.send(e);
    }

    fn bump(&self) {
        self.generation.send_modify(|g| *g += 1);
    }

    /// Installs `s` as the new snapshot and writes it to disk.
    fn publish(&self, g: &mut Inner, s: Session) {
        for id in s.cexs.keys().filter(|id| !g.session.cexs.contains_key(*id)) {
            self.emit(ApiEvent::Cex { id: id.clone() });
        }
        if let Err(e) = save_session(&s, &self.path) {
            log::error!("cannot save {}: {e}", self.path.display());
        }
        self.emit(ApiEvent::Session {
            verdict: s.verdict.clone(),
            iterations: s.iterations,
        });
        g.session = Arc::new(s);
    }
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError(StatusCode::UNPROCESSABLE_ENTITY, r.body_text())
    }
}

fn not_found(what: &str, id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("unknown {what} `{id}`"))
}

fn unprocessable(msg: impl ToString) -> ApiError {
    ApiError(StatusCode::UNPROCESSABLE_ENTITY, msg.to_string())
}

fn conflict(msg: impl ToString) -> ApiError {
    ApiError(StatusCode::CONFLICT, msg.to_string())
}

fn miter_error(e: MiterError) -> ApiError {
    match e {
        MiterError::Duplicate(_) => conflict(e),
        _ => unprocessable(e),
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/session", get(get_session))
        .route("/api/cex/{id}", get(get_cex))
        .route("/api/trace/{id}", get(get_trace))
        .route("/api/decision", post(post_decision))
        .route("/api/constraint", post(post_constraint))
        .route("/api/invariant", post(post_invariant))
        .route("/api/crosseq", post(post_crosseq))
        .route("/api/prove", post(post_prove))
        .route("/api/job/{id}", get(get_job))
        .route("/api/events", get(get_events))
        .with_state(state)
}

fn session_view(g: &Inner) -> Value {
    json!({
        "session": &*g.session,
        "pending": g.pending.as_ref().map(|p| &p.query),
        "staged": &g.staged,
        "campaign": g.campaign,
        "zC": g.session.ledger.z_c(),
        "zD": g.session.ledger.z_d(),
    })
}

async fn get_session(State(st): State<AppState>) -> Json<Value> {
    Json(session_view(&st.0.lock()))
}

async fn get_cex(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let s = st.session();
    let c = s.cexs.get(&id).ok_or_else(|| not_found("counterexample", &id))?;
    Ok(Json(serde_json::to_value(c).expect("cex serializes")))
}

#[derive(Debug, Serialize)]
struct Lane<'a> {
    signal: &'a str,
    a: &'a [u64],
    b: &'a [u64],
    diff_cycles: Vec<usize>,
}

async fn get_trace(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let s = st.session();
    let c = s.cexs.get(&id).ok_or_else(|| not_found("counterexample", &id))?;
    let lanes: Vec<Lane> = c
        .instances
        .a
        .iter()
        .map(|(sig, a)| {
            let b = c.instances.b.get(sig).map_or(&[][..], Vec::as_slice);
            let diff_cycles = (0..a.len().min(b.len())).filter(|&i| a[i] != b[i]).collect();
            Lane {
                signal: sig,
                a,
                b,
                diff_cycles,
            }
        })
        .collect();
    Ok(Json(json!({
        "id": id,
        "design": c.design,
        "obligation": c.obligation,
        "k": c.k,
        "diffs": c.diffs,
        "lanes": lanes,
    })))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecisionBody {
    pub cex_id: String,
    pub location: String,
    pub decision: String,
    #[serde(default)]
    pub exclusions: Vec<Exclusion>,
    #[serde(default)]
    pub rationale: Option<String>,
}

fn parse_decision(body: &DecisionBody, staged: &[Exclusion]) -> ApiResult<Decision> {
    match body.decision.as_str() {
        "classify-data" | "data" => Ok(Decision::ClassifyData),
        "classify-control" | "control" => Ok(Decision::ClassifyControl),
        "invalid-cex" | "invalid" => {
            let mut ex = body.exclusions.clone();
            ex.extend(staged.iter().cloned());
            if ex.is_empty() {
                return Err(unprocessable("an invalid counterexample needs at least one exclusion"));
            }
            Ok(Decision::InvalidCex { exclusions: ex })
        }
        other => Err(unprocessable(format!("unknown decision `{other}`"))),
    }
}

fn check_exclusions(n: &Netlist, ledger: &PartitionLedger, d: &Decision) -> ApiResult<()> {
    if let Decision::InvalidCex { exclusions } = d {
        let mut l = ledger.clone();
        for e in exclusions {
            match e {
                Exclusion::Constraint(c) => l.add_constraint(n, c.clone()),
                Exclusion::Invariant(c) => l.add_invariant(n, c.clone()),
                Exclusion::CrossEq(c) => l.add_cross_equality(n, c.clone()),
            }
            .map_err(miter_error)?;
        }
    }
    Ok(())
}

async fn post_decision(
    State(st): State<AppState>,
    body: Result<Json<DecisionBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(body) = body?;
    let sh = &st.0;
    let mut gen = sh.generation.subscribe();
    {
        let mut g = sh.lock();
        let cex = g
            .session
            .cexs
            .get(&body.cex_id)
            .ok_or_else(|| not_found("counterexample", &body.cex_id))?
            .clone();
        if g.campaign {
            let p = g
                .pending
                .as_ref()
                .ok_or_else(|| conflict("the campaign has no pending query"))?;
            if p.query.cex_id != body.cex_id || p.query.location != body.location {
                return Err(conflict(format!(
                    "`{}` of {} is not the pending query (pending: `{}` of {})",
                    body.location, body.cex_id, p.query.location, p.query.cex_id
                )));
            }
            let decision = parse_decision(&body, &g.staged)?;
            if decision == Decision::ClassifyData && p.query.is_output() {
                return Err(unprocessable(format!("`{}` is observable and cannot be data", body.location)));
            }
            check_exclusions(&sh.netlist, &g.session.ledger, &decision)?;
            if matches!(decision, Decision::InvalidCex { .. }) {
                g.staged.clear();
            }
            let p = g.pending.take().expect("checked above");
            let answer = Answer {
                decision,
                rationale: body.rationale.clone().unwrap_or_else(|| "api".into()),
            };
            if p.reply.send(answer).is_err() {
                return Err(ApiError(StatusCode::INTERNAL_SERVER_ERROR, "campaign thread is gone".into()));
            }
        } else {
            let diff = cex
                .diffs
                .iter()
                .find(|d| d.loc == body.location)
                .ok_or_else(|| unprocessable(format!("`{}` does not diverge in {}", body.location, body.cex_id)))?;
            let mut s = (*g.session).clone();
            if s.ledger.state_class.get(&body.location).map(|e| e.class) == Some(Role::Data)
                || s.ledger.box_input_class.get(&body.location).map(|e| e.class) == Some(Role::Data)
            {
                return Err(conflict(format!("`{}` is already classified data", body.location)));
            }
            if s.verdict.is_violation() {
                return Err(conflict("the session already ended in a violation"));
            }
            let decision = parse_decision(&body, &g.staged)?;
            check_exclusions(&sh.netlist, &s.ledger, &decision)?;
            let output = !matches!(diff.kind, DiffKind::State | DiffKind::BoxInput);
            match &decision {
                Decision::ClassifyData if output || !s.ledger.is_classifiable(&body.location) => {
                    return Err(unprocessable(format!("`{}` cannot be classified data", body.location)));
                }
                Decision::ClassifyData => {
                    s.ledger
                        .classify(&body.location, Role::Data, Provenance::UserDecision)
                        .map_err(miter_error)?;
                    s.verdict = Verdict::Pending;
                }
                Decision::ClassifyControl => {
                    s.verdict = Verdict::Violation {
                        cex: body.cex_id.clone(),
                    };
                }
                Decision::InvalidCex { exclusions } => {
                    apply_exclusions(&mut s.ledger, &sh.netlist, exclusions).map_err(unprocessable)?;
                    s.ledger.reset_control(&body.cex_id);
                    s.resets += 1;
                    s.verdict = Verdict::Pending;
                    g.staged.clear();
                }
            }
            s.decisions.push(DecisionRecord {
                iteration: s.iterations,
                query: Some(Query {
                    cex_id: body.cex_id.clone(),
                    location: body.location.clone(),
                    cycle: diff.cycle,
                    kind: diff.kind,
                    suggested: if output { Decision::ClassifyControl } else { Decision::ClassifyData },
                }),
                answer: Answer {
                    decision,
                    rationale: body.rationale.clone().unwrap_or_else(|| "api".into()),
                },
            });
            sh.publish(&mut g, s);
            drop(g);
            sh.bump();
        }
    }
    // Let the campaign run to its next query or its verdict, so that the
    // caller sees the effect of the decision.
    let _ = tokio::time::timeout(DECISION_WAIT, gen.changed()).await;
    Ok(Json(session_view(&sh.lock())))
}

#[derive(Debug, Deserialize)]
pub struct NamedBody {
    pub name: String,
    pub expr: String,
}

#[derive(Debug, Deserialize)]
pub struct CrossEqBody {
    pub name: String,
    pub a: String,
    pub b: String,
}

fn add_exclusion(st: &AppState, e: Exclusion) -> ApiResult<Json<Value>> {
    let sh = &st.0;
    let mut g = sh.lock();
    let mut ledger = g.session.ledger.clone();
    let staged_names = g.staged.iter().any(|s| s.name() == e.name());
    if staged_names {
        return Err(conflict(format!("`{}` is already staged", e.name())));
    }
    apply_exclusions(&mut ledger, &sh.netlist, std::slice::from_ref(&e)).map_err(|err| match err {
        ditcheck::driver::DriverError::Miter(m) => miter_error(m),
        other => unprocessable(other),
    })?;
    if g.campaign {
        g.staged.push(e);
        return Ok(Json(json!({ "staged": true, "pending": g.pending.as_ref().map(|p| &p.query) })));
    }
    let mut s = (*g.session).clone();
    s.ledger = ledger;
    s.verdict = Verdict::Pending;
    s.decisions.push(DecisionRecord {
        iteration: s.iterations,
        query: None,
        answer: Answer {
            decision: Decision::InvalidCex { exclusions: vec![e] },
            rationale: "api".into(),
        },
    });
    sh.publish(&mut g, s);
    drop(g);
    sh.bump();
    Ok(Json(json!({ "staged": false })))
}

fn named(body: NamedBody) -> ApiResult<NamedExpr> {
    let expr = parse_expr(&body.expr).map_err(|e| unprocessable(format!("malformed expression: {e}")))?;
    Ok(NamedExpr { name: body.name, expr })
}

async fn post_constraint(
    State(st): State<AppState>,
    body: Result<Json<NamedBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(body) = body?;
    add_exclusion(&st, Exclusion::Constraint(named(body)?))
}

async fn post_invariant(
    State(st): State<AppState>,
    body: Result<Json<NamedBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(body) = body?;
    add_exclusion(&st, Exclusion::Invariant(named(body)?))
}

async fn post_crosseq(
    State(st): State<AppState>,
    body: Result<Json<CrossEqBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(body) = body?;
    add_exclusion(
        &st,
        Exclusion::CrossEq(CrossEq {
            name: body.name,
            a: SigRef::parse(&body.a, Instance::A),
            b: SigRef::parse(&body.b, Instance::B),
        }),
    )
}

#[derive(Debug, Deserialize)]
pub struct ProveBody {
    pub mode: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub warmup: usize,
    #[serde(default)]
    pub signal: Option<String>,
}

fn default_k() -> usize {
    4
}

async fn post_prove(
    State(st): State<AppState>,
    body: Result<Json<ProveBody>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let Json(body) = body?;
    let mode = match body.mode.as_str() {
        "campaign" => None,
        "step" => Some(ProveMode::Step),
        "base" => Some(ProveMode::Base),
        "unrolled-io" => Some(ProveMode::UnrolledIo),
        "unrolled" => Some(ProveMode::Unrolled),
        "per-signal" if body.signal.is_some() => Some(ProveMode::PerSignal),
        "per-signal" => return Err(unprocessable("per-signal needs `signal`")),
        other => return Err(unprocessable(format!("unknown mode `{other}`"))),
    };
    let sh = st.0.clone();
    let id = {
        let mut g = sh.lock();
        if g.campaign {
            return Err(conflict("a campaign is running"));
        }
        let id = format!("job-{}", g.jobs.len() + 1);
        g.jobs.insert(
            id.clone(),
            Job {
                id: id.clone(),
                mode: body.mode.clone(),
                status: JobStatus::Running,
                result: None,
                error: None,
            },
        );
        if mode.is_none() {
            g.campaign = true;
        }
        id
    };
    sh.emit(ApiEvent::Job {
        id: id.clone(),
        status: JobStatus::Running,
    });
    match mode {
        None => {
            let job = id.clone();
            std::thread::spawn(move || campaign(sh, job));
        }
        Some(mode) => {
            let job = id.clone();
            tokio::task::spawn_blocking(move || {
                let s = sh.lock().session.clone();
                let r = prove_once(
                    &sh.netlist,
                    &s.ledger,
                    mode,
                    body.k,
                    body.warmup,
                    body.signal.as_deref(),
                    &s.config.engine,
                );
                finish_prove(&sh, &job, r.map_err(|e| e.msg));
            });
        }
    }
    Ok((StatusCode::ACCEPTED, Json(json!({ "jobId": id }))))
}

fn finish_prove(sh: &Shared, job: &str, r: Result<ProofResult, String>) {
    let mut g = sh.lock();
    let status = match r {
        Ok(r) => {
            let mut s = (*g.session).clone();
            let cex = s.record(&r, r.stats.solve_ms);
            sh.publish(&mut g, s);
            let j = &mut g.jobs[job];
            j.status = JobStatus::Done;
            j.result = Some(json!({
                "status": r.status,
                "obligation": r.obligation.label(),
                "cexId": cex,
                "stats": r.stats,
            }));
            JobStatus::Done
        }
        Err(e) => {
            let j = &mut g.jobs[job];
            j.status = JobStatus::Failed;
            j.error = Some(e);
            JobStatus::Failed
        }
    };
    drop(g);
    sh.emit(ApiEvent::Job {
        id: job.to_string(),
        status,
    });
    sh.bump();
}

struct ApiProvider {
    shared: Arc<Shared>,
}

impl DecisionProvider for ApiProvider {
    fn progress(&mut self, s: &Session) {
        let mut g = self.shared.lock();
        self.shared.publish(&mut g, s.clone());
    }

    fn decide(&mut self, q: &Query, _: &PartitionLedger) -> Result<Answer, ProviderError> {
        let (tx, rx) = mpsc::channel();
        {
            let mut g = self.shared.lock();
            g.pending = Some(Pending {
                query: q.clone(),
                reply: tx,
            });
        }
        self.shared.emit(ApiEvent::Query { query: q.clone() });
        self.shared.bump();
        rx.recv().map_err(|_| ProviderError::Closed)
    }
}

fn campaign(sh: Arc<Shared>, job: String) {
    let mut s = (*sh.lock().session).clone();
    let mut p = ApiProvider { shared: sh.clone() };
    let r = run_upec_dit(&mut s, sh.netlist.clone(), &mut p);
    let mut g = sh.lock();
    g.campaign = false;
    g.pending = None;
    let verdict = s.verdict.clone();
    sh.publish(&mut g, s);
    let j = &mut g.jobs[&job];
    let status = match r {
        Ok(()) => {
            j.status = JobStatus::Done;
            j.result = Some(json!({ "verdict": verdict }));
            JobStatus::Done
        }
        Err(e) => {
            j.status = JobStatus::Failed;
            j.error = Some(e.to_string());
            JobStatus::Failed
        }
    };
    drop(g);
    sh.emit(ApiEvent::Job { id: job, status });
    sh.bump();
}

async fn get_job(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Job>> {
    st.0.lock().jobs.get(&id).cloned().map(Json).ok_or_else(|| not_found("job", &id))
}

async fn get_events(State(st): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = st.0.events.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(e) => {
                    let ev = Event::default().event(e.name()).json_data(&e).expect("event serializes");
                    return Some((Ok(ev), rx));
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}
