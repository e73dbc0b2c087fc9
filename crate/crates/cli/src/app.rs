//! Subcommand dispatch.

use crate::{report, server, stimuli};
use clap::{Parser, Subcommand, ValueEnum};
use ditcheck::driver::{
    load_session, oracle_exhaustive, oracle_random, run_upec_dit, save_session, Answer, Decision, DecisionProvider,
    DriverConfig, Exclusion, Mode, OracleVerdict, ProviderError, Query, ScriptedProvider, Session, Verdict,
};
use ditcheck::engine::{
    check_base, check_signal, check_step, check_unrolled, check_unrolled_io, EngineConfig, ProofResult, Status,
};
use ditcheck::miter::{build_miter, parse_sidecar, PartitionLedger, Sidecar};
use ditcheck::netlist::{apply_role_sidecar, import_aiger, parse_netlist, pretty_print, simulate, Netlist};
use ditcheck::sat::{parse_dimacs, solve, Budget, SolveResult, SolverChoice};
use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_UNKNOWN: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NOINPUT: i32 = 66;
pub const EXIT_SOFTWARE: i32 = 70;
pub const EXIT_IO: i32 = 74;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub msg: String,
}

impl CliError {
    pub fn new(code: i32, msg: impl Into<String>) -> Self {
        CliError { code, msg: msg.into() }
    }

    fn data(msg: impl std::fmt::Display) -> Self {
        CliError::new(EXIT_DATA, msg.to_string())
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Parser, Debug)]
#[command(name = "ditcheck", version, about = "Check synchronous netlists for data-independent timing")]
pub struct Cli {
    /// Increase log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(clap::Args, Debug, Clone, Default)]
pub struct SolverArgs {
    /// External DIMACS solver command line, e.g. "kissat -q".
    #[arg(long)]
    pub solver: Option<String>,
    /// Per-call solver timeout in milliseconds.
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    /// Disable cone-of-influence reduction.
    #[arg(long)]
    pub no_coi: bool,
}

impl SolverArgs {
    fn engine(&self) -> EngineConfig {
        let mut cfg = EngineConfig {
            coi: !self.no_coi,
            ..Default::default()
        };
        if let Some(cmd) = &self.solver {
            cfg.solver = SolverChoice::External(cmd.split_whitespace().map(String::from).collect());
        }
        if let Some(t) = self.timeout_ms {
            cfg.budget = Budget {
                timeout_ms: Some(t),
                ..cfg.budget
            };
        }
        cfg
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProveMode {
    Step,
    Base,
    UnrolledIo,
    Unrolled,
    PerSignal,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum CampaignMode {
    Inductive,
    Unrolled,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Md,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse and validate a netlist, print its canonical form.
    Parse {
        file: PathBuf,
        /// Port roles for AIGER input (`role <glob> control|data`).
        #[arg(long)]
        roles: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Simulate one instance and print the trace.
    Simulate {
        file: PathBuf,
        #[arg(long)]
        stimuli: PathBuf,
        #[arg(long)]
        roles: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run a single proof obligation.
    Prove {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "step")]
        mode: ProveMode,
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// Constraints, invariants and box modes to apply.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Take the partition and exclusions from a session file instead.
        #[arg(long, conflicts_with = "rules")]
        session: Option<PathBuf>,
        /// Target of a per-signal obligation.
        #[arg(long)]
        signal: Option<String>,
        #[arg(long, default_value_t = 0)]
        warmup: usize,
        #[arg(long)]
        roles: Option<PathBuf>,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run the refinement loop to a verdict.
    Run {
        file: PathBuf,
        #[arg(long, required_unless_present_any = ["interactive", "resume"])]
        rules: Option<PathBuf>,
        /// Answer each query on stdin: `d`, `c` or `i <directive> | ...`.
        #[arg(long, conflicts_with = "rules")]
        interactive: bool,
        #[arg(long, value_enum, default_value = "inductive")]
        mode: CampaignMode,
        #[arg(long, default_value_t = 6)]
        k: usize,
        /// Bug hunting: the given registers are control, all others data.
        #[arg(long, value_delimiter = ',')]
        control: Option<Vec<String>>,
        /// Split each step into per-signal obligations on N threads.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value_t = 0)]
        warmup: usize,
        /// Treat every control-output divergence as a violation without asking.
        #[arg(long)]
        strict_alg1: bool,
        #[arg(long, default_value_t = 1000)]
        max_iterations: usize,
        /// Write the session here.
        #[arg(long)]
        session: Option<PathBuf>,
        /// Continue a saved session.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Directory for counterexample files.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        roles: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Simulation oracles.
    Oracle {
        file: PathBuf,
        #[arg(long, conflicts_with = "random", required_unless_present = "random")]
        exhaustive: bool,
        #[arg(long)]
        random: bool,
        #[arg(long, default_value_t = 8)]
        cycles: usize,
        #[arg(long, default_value_t = 1 << 24)]
        budget: u64,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 50)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Constraints of this rules file restrict the inputs.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        roles: Option<PathBuf>,
    },
    /// Serve a session over HTTP.
    Serve {
        file: PathBuf,
        #[arg(long)]
        session: PathBuf,
        #[arg(long, default_value_t = 8642)]
        port: u16,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        roles: Option<PathBuf>,
    },
    /// Render a session.
    Report {
        session: PathBuf,
        #[arg(long, value_enum, default_value = "md")]
        format: ReportFormat,
        /// Netlist for the design summary and operation classes.
        #[arg(long)]
        netlist: Option<PathBuf>,
        /// Rules file with `opclass` lines.
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        roles: Option<PathBuf>,
    },
    /// Solve a DIMACS formula from stdin with the embedded solver.
    #[command(hide = true)]
    SolveDimacs,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::new(EXIT_NOINPUT, format!("{}: {e}", path.display())))
}

pub fn load_netlist(path: &Path, roles: Option<&Path>) -> Result<Netlist> {
    let shown = path.display();
    let mut n = if path.extension().is_some_and(|e| e == "aag" || e == "aig") {
        let bytes = std::fs::read(path).map_err(|e| CliError::new(EXIT_NOINPUT, format!("{shown}: {e}")))?;
        import_aiger(&bytes).map_err(|e| CliError::data(format!("{shown}: {e}")))?
    } else {
        parse_netlist(&read(path)?).map_err(|e| CliError::data(format!("{shown}:{e}")))?
    };
    if let Some(r) = roles {
        apply_role_sidecar(&mut n, &read(r)?).map_err(|e| CliError::data(format!("{}: {e}", r.display())))?;
    }
    Ok(n)
}

pub fn load_rules(path: &Path) -> Result<Sidecar> {
    parse_sidecar(&read(path)?).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn verdict_code(v: &Verdict) -> i32 {
    match v {
        Verdict::Do | Verdict::DoPhi { .. } | Verdict::NoViolationFound => EXIT_OK,
        Verdict::Violation { .. } => EXIT_VIOLATION,
        Verdict::Unknown { .. } | Verdict::Pending => EXIT_UNKNOWN,
    }
}

pub fn status_code(s: &Status) -> i32 {
    match s {
        Status::Hold | Status::CandidatePropagation => EXIT_OK,
        Status::Violated => EXIT_VIOLATION,
        Status::InvariantRefuted | Status::Unknown(_) => EXIT_UNKNOWN,
    }
}

/// One-line rendering of a verdict.
pub fn verdict_line(v: &Verdict) -> String {
    match v {
        Verdict::Pending => "pending".into(),
        Verdict::Do => "do".into(),
        Verdict::DoPhi {
            constraints,
            invariants,
            cross_equalities,
        } => {
            let mut parts = Vec::new();
            for (label, l) in [("constraints", constraints), ("invariants", invariants), ("crosseq", cross_equalities)] {
                if !l.is_empty() {
                    parts.push(format!("{label}: {}", l.join(", ")));
                }
            }
            format!("do-phi [{}]", parts.join("; "))
        }
        Verdict::Violation { cex } => format!("violation ({cex})"),
        Verdict::Unknown { reason } => format!("unknown: {reason}"),
        Verdict::NoViolationFound => "no violation found (bug hunting, not a proof)".into(),
    }
}

/// Parses and runs `args` (including the program name). Never exits the
/// process.
pub fn run(args: Vec<OsString>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.cmd, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.msg);
            e.code
        }
    }
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

fn io(e: std::io::Error) -> CliError {
    CliError::new(EXIT_IO, e.to_string())
}

fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Parse { file, roles, json } => {
            let n = load_netlist(&file, roles.as_deref())?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&n).expect("netlist serializes")).map_err(io)?;
            } else {
                write!(out, "{}", pretty_print(&n)).map_err(io)?;
            }
            Ok(EXIT_OK)
        }
        Command::Simulate {
            file,
            stimuli: stim_path,
            roles,
            json,
        } => {
            let n = load_netlist(&file, roles.as_deref())?;
            let stim = stimuli::parse_stimuli(&read(&stim_path)?, &n)
                .map_err(|e| CliError::data(format!("{}: {e}", stim_path.display())))?;
            let trace = simulate(&n, &stim).map_err(CliError::data)?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&trace).expect("trace serializes")).map_err(io)?;
            } else {
                write!(out, "{}", report::trace_table(&n, &trace)).map_err(io)?;
            }
            Ok(EXIT_OK)
        }
        Command::Prove {
            file,
            mode,
            k,
            rules,
            session,
            signal,
            warmup,
            roles,
            json,
            solver,
        } => {
            let n = Arc::new(load_netlist(&file, roles.as_deref())?);
            let ledger = match (&rules, &session) {
                (_, Some(p)) => load_session(p, &n).map_err(CliError::data)?.ledger,
                (Some(r), None) => {
                    let sc = load_rules(r)?;
                    let mut l = PartitionLedger::new(&n);
                    for c in &sc.constraints {
                        l.add_constraint(&n, c.clone()).map_err(CliError::data)?;
                    }
                    for c in &sc.invariants {
                        l.add_invariant(&n, c.clone()).map_err(CliError::data)?;
                    }
                    for c in &sc.cross_equalities {
                        l.add_cross_equality(&n, c.clone()).map_err(CliError::data)?;
                    }
                    for (b, m) in &sc.box_modes {
                        l.set_box_mode(&n, b, *m).map_err(CliError::data)?;
                    }
                    l
                }
                (None, None) => PartitionLedger::new(&n),
            };
            let r = prove_once(&n, &ledger, mode, k, warmup, signal.as_deref(), &solver.engine())?;
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&r).expect("result serializes")).map_err(io)?;
            } else {
                write!(out, "{}", report::proof_summary(&r)).map_err(io)?;
            }
            Ok(status_code(&r.status))
        }
        Command::Run {
            file,
            rules,
            interactive,
            mode,
            k,
            control,
            workers,
            warmup,
            strict_alg1,
            max_iterations,
            session,
            resume,
            out_dir,
            roles,
            solver,
        } => {
            let n = Arc::new(load_netlist(&file, roles.as_deref())?);
            let sidecar = rules.as_deref().map(load_rules).transpose()?;
            let mut s = match &resume {
                Some(p) => load_session(p, &n).map_err(CliError::data)?,
                None => {
                    let mode = match (control, mode) {
                        (Some(control), _) => Mode::BugHunt { control, k },
                        (None, CampaignMode::Inductive) => Mode::Inductive,
                        (None, CampaignMode::Unrolled) => Mode::Unrolled { k },
                    };
                    let cfg = DriverConfig {
                        engine: solver.engine(),
                        warmup,
                        strict_alg1,
                        max_iterations,
                        workers,
                    };
                    let mut s = Session::new(&n, sidecar.as_ref(), mode, cfg).map_err(CliError::data)?;
                    s.netlist_path = Some(file.display().to_string());
                    s
                }
            };
            let result = if interactive {
                let stdin = std::io::stdin();
                let mut p = StdinProvider {
                    input: stdin.lock(),
                    prompt: err,
                };
                run_upec_dit(&mut s, n.clone(), &mut p)
            } else if let Some(sc) = sidecar {
                run_upec_dit(&mut s, n.clone(), &mut ScriptedProvider::new(sc))
            } else {
                run_upec_dit(&mut s, n.clone(), &mut ScriptedProvider::new(Sidecar::default()))
            };
            let save_to = session.or(resume);
            if let Some(p) = &save_to {
                save_session(&s, p).map_err(|e| CliError::new(EXIT_IO, e.to_string()))?;
            }
            if let Err(e) = result {
                return Err(CliError::data(format!("campaign stopped: {e}")));
            }
            writeln!(out, "verdict: {}", verdict_line(&s.verdict)).map_err(io)?;
            writeln!(out, "iterations: {}, resets: {}", s.iterations, s.resets).map_err(io)?;
            if let Verdict::Violation { cex } = &s.verdict {
                let path = out_dir.join(format!("{}.{cex}.json", s.design));
                std::fs::write(&path, s.cexs[cex].to_json()).map_err(io)?;
                writeln!(out, "cex: {}", path.display()).map_err(io)?;
            }
            if let Some(p) = &save_to {
                writeln!(out, "session: {}", p.display()).map_err(io)?;
            }
            Ok(verdict_code(&s.verdict))
        }
        Command::Oracle {
            file,
            exhaustive,
            random: _,
            cycles,
            budget,
            trials,
            horizon,
            seed,
            rules,
            roles,
        } => {
            let n = load_netlist(&file, roles.as_deref())?;
            let phi = match &rules {
                Some(r) => load_rules(r)?.constraints,
                None => Vec::new(),
            };
            if exhaustive {
                match oracle_exhaustive(&n, cycles, &phi, budget) {
                    Ok(OracleVerdict::Do) => {
                        writeln!(out, "verdict: do (all control sequences up to {cycles} cycles)").map_err(io)?;
                        Ok(EXIT_OK)
                    }
                    Ok(OracleVerdict::Violation(w)) => {
                        writeln!(out, "verdict: violation: `{}` differs at cycle {}", w.signal, w.cycle).map_err(io)?;
                        writeln!(out, "{}", serde_json::to_string_pretty(&*w).expect("witness serializes")).map_err(io)?;
                        Ok(EXIT_VIOLATION)
                    }
                    Err(e) => {
                        writeln!(err, "{e}").map_err(io)?;
                        Ok(EXIT_UNKNOWN)
                    }
                }
            } else {
                let r = oracle_random(&n, &phi, trials, horizon, seed).map_err(CliError::data)?;
                writeln!(out, "trials: {}, cycles: {}, divergences: {}", r.trials, r.cycles, r.divergences.len())
                    .map_err(io)?;
                for d in r.divergences.iter().take(10) {
                    writeln!(out, "  trial {}: `{}` at cycle {}", d.trial, d.signal, d.cycle).map_err(io)?;
                }
                Ok(if r.divergences.is_empty() { EXIT_OK } else { EXIT_VIOLATION })
            }
        }
        Command::Serve {
            file,
            session,
            port,
            rules,
            roles,
        } => {
            let n = load_netlist(&file, roles.as_deref())?;
            let sidecar = rules.as_deref().map(load_rules).transpose()?;
            let state = server::AppState::open(n, sidecar, &session).map_err(CliError::data)?;
            let rt = tokio::runtime::Runtime::new().map_err(io)?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
                log::warn!("serving {} on http://{}", session.display(), listener.local_addr()?);
                axum::serve(listener, server::router(state)).await
            })
            .map_err(io)?;
            Ok(EXIT_OK)
        }
        Command::Report {
            session,
            format,
            netlist,
            rules,
            roles,
        } => {
            let s = ditcheck::driver::read_session(&session).map_err(CliError::data)?;
            let n = match &netlist {
                Some(p) => {
                    let n = load_netlist(p, roles.as_deref())?;
                    s.check_netlist(&n).map_err(CliError::data)?;
                    Some(n)
                }
                None => None,
            };
            let sc = rules.as_deref().map(load_rules).transpose()?;
            let r = report::build(&s, n.as_ref(), sc.as_ref());
            match format {
                ReportFormat::Md => write!(out, "{}", report::markdown(&r)).map_err(io)?,
                ReportFormat::Json => {
                    writeln!(out, "{}", serde_json::to_string_pretty(&r).expect("report serializes")).map_err(io)?
                }
            }
            Ok(EXIT_OK)
        }
        Command::SolveDimacs => {
            let mut text = String::new();
            std::io::Read::read_to_string(&mut std::io::stdin(), &mut text).map_err(io)?;
            let cnf = parse_dimacs(&text).map_err(CliError::data)?;
            let r = solve(&cnf, &SolverChoice::Embedded, &Budget::default()).map_err(CliError::data)?;
            match r {
                SolveResult::Sat(model) => {
                    writeln!(out, "s SATISFIABLE").map_err(io)?;
                    let lits: Vec<String> = model
                        .iter()
                        .enumerate()
                        .map(|(i, b)| if *b { format!("{}", i + 1) } else { format!("-{}", i + 1) })
                        .collect();
                    writeln!(out, "v {} 0", lits.join(" ")).map_err(io)?;
                    Ok(10)
                }
                SolveResult::Unsat => {
                    writeln!(out, "s UNSATISFIABLE").map_err(io)?;
                    Ok(20)
                }
                SolveResult::Unknown(_) => {
                    writeln!(out, "s UNKNOWN").map_err(io)?;
                    Ok(0)
                }
            }
        }
    }
}

/// Runs one obligation of the given template.
pub fn prove_once(
    n: &Arc<Netlist>,
    ledger: &PartitionLedger,
    mode: ProveMode,
    k: usize,
    warmup: usize,
    signal: Option<&str>,
    cfg: &EngineConfig,
) -> Result<ProofResult> {
    let m = build_miter(n.clone(), ledger);
    let r = match mode {
        ProveMode::Step => check_step(&m, ledger, cfg),
        ProveMode::Base => check_base(&m, ledger, warmup, cfg),
        ProveMode::UnrolledIo => check_unrolled_io(&m, ledger, k, cfg),
        ProveMode::Unrolled => check_unrolled(&m, ledger, k, cfg),
        ProveMode::PerSignal => {
            let z = signal.ok_or_else(|| CliError::new(EXIT_USAGE, "--mode per-signal needs --signal"))?;
            check_signal(&m, ledger, z, cfg)
        }
    };
    r.map_err(CliError::data)
}

/// Turns sidecar directive lines (`constraint`, `invariant`, `crosseq`)
/// into exclusions.
pub fn parse_exclusions(text: &str) -> Result<Vec<Exclusion>, String> {
    let sc = parse_sidecar(text).map_err(|e| e.to_string())?;
    if !sc.rules.is_empty() || !sc.box_modes.is_empty() || !sc.opclasses.is_empty() {
        return Err("only constraint, invariant and crosseq lines are allowed".into());
    }
    let mut out: Vec<Exclusion> = sc.constraints.into_iter().map(Exclusion::Constraint).collect();
    out.extend(sc.invariants.into_iter().map(Exclusion::Invariant));
    out.extend(sc.cross_equalities.into_iter().map(Exclusion::CrossEq));
    Ok(out)
}

struct StdinProvider<'a, R: BufRead> {
    input: R,
    prompt: &'a mut dyn Write,
}

impl<R: BufRead> DecisionProvider for StdinProvider<'_, R> {
    fn decide(&mut self, q: &Query, ledger: &PartitionLedger) -> Result<Answer, ProviderError> {
        loop {
            let _ = writeln!(
                self.prompt,
                "{}: `{}` ({:?}) differs at cycle {}. [d]ata, [c]ontrol, [i] <directive> | ...",
                q.cex_id, q.location, q.kind, q.cycle
            );
            let mut line = String::new();
            match self.input.read_line(&mut line) {
                Ok(0) | Err(_) => return Err(ProviderError::Closed),
                Ok(_) => {}
            }
            let line = line.trim();
            let decision = match line.split_once(' ').map_or((line, ""), |(a, b)| (a, b)) {
                ("d", _) if !q.is_output() => Decision::ClassifyData,
                ("c", _) => Decision::ClassifyControl,
                ("i", rest) => match parse_exclusions(&rest.replace('|', "\n")) {
                    Ok(ex) if !ex.is_empty() && ex.iter().all(|e| !ledger.has_exclusion(e.name())) => {
                        Decision::InvalidCex { exclusions: ex }
                    }
                    Ok(_) => {
                        let _ = writeln!(self.prompt, "need at least one new exclusion");
                        continue;
                    }
                    Err(e) => {
                        let _ = writeln!(self.prompt, "{e}");
                        continue;
                    }
                },
                ("q", _) => return Err(ProviderError::Aborted("quit".into())),
                _ => {
                    let _ = writeln!(self.prompt, "unrecognized answer `{line}`");
                    continue;
                }
            };
            return Ok(Answer {
                decision,
                rationale: "interactive".into(),
            });
        }
    }
}
