mod common;

use common::*;
use ditcheck::driver::{
    aggregate_status, load_session, oracle_exhaustive, oracle_random, read_session, run_upec_dit, save_session,
    schedule_parallel, Answer, Decision, DecisionProvider, DriverConfig, Mode, OracleVerdict, ProviderError, Query,
    ReplayProvider, ScriptedProvider, Session, SessionError, Verdict,
};
use ditcheck::engine::{check_step, replay_cex, EngineConfig, Status};
use ditcheck::miter::{build_miter, PartitionLedger, Sidecar};
use ditcheck::netlist::{parse_netlist, simulate, Role};
use std::sync::Arc;

fn verdict_cex(s: &Session) -> &ditcheck::engine::Counterexample {
    match &s.verdict {
        Verdict::Violation { cex } => &s.cexs[cex],
        v => panic!("{}: expected a violation, got {v:?}", s.design),
    }
}

#[test]
fn ct_alu_reaches_do() {
    let s = campaign("fx_ct_alu");
    assert_eq!(s.verdict, Verdict::Do);
    assert_eq!(s.ledger.z_c(), ["valid_pipe"]);
    assert_eq!(s.resets, 0);
}

#[test]
fn ct_alu_split_campaign_takes_three_iterations() {
    let cfg = DriverConfig { workers: Some(1), ..Default::default() };
    let s = campaign_with("fx_ct_alu", &rules("fx_ct_alu"), Mode::Inductive, cfg);
    assert_eq!(s.verdict, Verdict::Do);
    assert_eq!(s.iterations, 3);
    assert_eq!(s.ledger.z_c(), ["valid_pipe"]);
}

#[test]
fn leaking_fixtures_end_in_violation() {
    for name in ["fx_mul_zeroskip", "fx_serial_shift", "fx_div_early"] {
        let s = campaign(name);
        let cex = verdict_cex(&s);
        assert!(replay_cex(&fixture(name), cex), "{name}");
        // Every diff is on a control output or a register left in Z_C.
        let zc = s.ledger.z_c();
        assert!(!cex.diffs.is_empty());
        assert!(cex.diffs.iter().all(|d| d.loc == "done" || zc.contains(&d.loc)), "{name}: {:?}", cex.diffs);
    }
}

#[test]
fn oblivious_fixtures_reach_do() {
    for name in ["fx_ct_alu", "fx_sha_like", "fx_pass", "fx_rounds8"] {
        assert_eq!(campaign(name).verdict, Verdict::Do, "{name}");
    }
}

#[test]
fn tiny_cpu_needs_phi() {
    let s = campaign("fx_tiny_cpu");
    match &s.verdict {
        Verdict::DoPhi { constraints, .. } => assert_eq!(constraints, &["no_branch_div"]),
        v => panic!("{v:?}"),
    }
    assert!(s.resets >= 1);

    let s = campaign_with("fx_tiny_cpu", &rules("fx_tiny_cpu_nophi"), Mode::Inductive, DriverConfig::default());
    let cex = verdict_cex(&s);
    assert!(cex.diffs.iter().any(|d| d.loc == "flush_q"));
    // A branch in execute whose operand is zero in one instance only.
    let (a, b) = (&cex.instances.a, &cex.instances.b);
    assert_eq!(a["ex_op"][0], 2);
    assert_ne!(a["ex_a"][0] == 0, b["ex_a"][0] == 0);
}

#[test]
fn div_early_with_phi_reaches_do_phi() {
    let s = campaign_with("fx_div_early", &rules("fx_div_early_phi"), Mode::Inductive, DriverConfig::default());
    assert!(matches!(s.verdict, Verdict::DoPhi { .. }), "{:?}", s.verdict);
}

#[test]
fn invalid_cex_resets_candidates() {
    let n = fixture("fx_tiny_cpu");
    let s = campaign("fx_tiny_cpu");
    let mut seen = 0;
    for d in &s.decisions {
        if let Decision::InvalidCex { .. } = d.answer.decision {
            let next = s.obligations.iter().find(|o| o.iteration == d.iteration + 1).expect("next iteration");
            assert_eq!(next.candidates, n.regs.len());
            seen += 1;
        }
    }
    assert_eq!(seen, s.resets);
}

#[test]
fn decisions_log_replays_to_same_obligations() {
    for name in ["fx_ct_alu", "fx_tiny_cpu", "fx_mul_zeroskip"] {
        let first = campaign(name);
        let n = Arc::new(fixture(name));
        let sc = rules(name);
        let mut again = Session::new(&n, Some(&sc), Mode::Inductive, DriverConfig::default()).unwrap();
        run_upec_dit(&mut again, n, &mut ReplayProvider::new(&first.decisions)).unwrap();
        assert_eq!(again.obligations_hash(), first.obligations_hash(), "{name}");
        assert_eq!(again.verdict, first.verdict);
    }
}

#[test]
fn empty_rules_abort() {
    let n = Arc::new(fixture("fx_ct_alu"));
    let mut s = Session::new(&n, None, Mode::Inductive, DriverConfig::default()).unwrap();
    let empty = Sidecar::default();
    assert!(run_upec_dit(&mut s, n, &mut ScriptedProvider::new(empty)).is_err());
}

#[test]
fn parallel_schedule_is_worker_independent() {
    let n = Arc::new(fixture("fx_rounds8"));
    let l = PartitionLedger::new(&n);
    let m = build_miter(n, &l);
    let cfg = EngineConfig::default();
    let one = schedule_parallel(&m, &l, &cfg, 1).unwrap();
    let four = schedule_parallel(&m, &l, &cfg, 4).unwrap();
    assert_eq!(one.len(), 8);
    let strip = |r: &ditcheck::engine::ProofResult| (r.status.clone(), r.cex.clone(), r.obligation.clone());
    for ((ka, a), (kb, b)) in one.iter().zip(&four) {
        assert_eq!(ka, kb);
        assert_eq!(strip(a), strip(b));
    }
    assert!(schedule_parallel(&m, &l, &cfg, 0).is_err());

    let n = Arc::new(fixture("fx_pass"));
    let l = PartitionLedger::new(&n);
    assert!(schedule_parallel(&build_miter(n, &l), &l, &cfg, 4).unwrap().is_empty());
}

#[test]
fn aggregate_prefers_violation() {
    let n = Arc::new(fixture("fx_comb_leak"));
    let l = PartitionLedger::new(&n);
    let bad = check_step(&build_miter(n, &l), &l, &EngineConfig::default()).unwrap();
    assert_eq!(bad.status, Status::Violated);
    let n = Arc::new(fixture("fx_pass"));
    let l = PartitionLedger::new(&n);
    let good = check_step(&build_miter(n, &l), &l, &EngineConfig::default()).unwrap();
    assert_eq!(aggregate_status([&good, &bad, &good]), Status::Violated);
    assert_eq!(aggregate_status([&good]), Status::Hold);
    assert_eq!(aggregate_status([]), Status::Hold);
}

#[test]
fn exhaustive_oracle_examples() {
    let n = fixture("fx_mul_zeroskip");
    let OracleVerdict::Violation(w) = oracle_exhaustive(&n, 8, &[], 1 << 24).unwrap() else {
        panic!("expected a violation")
    };
    let a0 = w.a.inputs.iter().zip(&w.b.inputs).any(|(fa, fb)| fa["start"] == 1 && (fa["a"] == 0) != (fb["a"] == 0));
    assert!(a0, "{w:?}");
    let (ta, tb) = (simulate(&n, &w.a).unwrap(), simulate(&n, &w.b).unwrap());
    assert_ne!(ta.get(&w.signal, w.cycle), tb.get(&w.signal, w.cycle));
    for (fa, fb) in w.a.inputs.iter().zip(&w.b.inputs) {
        assert_eq!(fa["start"], fb["start"]);
    }

    assert_eq!(oracle_exhaustive(&fixture("fx_pass"), 4, &[], 1 << 24).unwrap(), OracleVerdict::Do);
    assert_eq!(oracle_exhaustive(&fixture("fx_sha_like"), 12, &[], 1 << 24).unwrap(), OracleVerdict::Do);
    assert!(oracle_exhaustive(&fixture("fx_tiny_cpu"), 12, &[], 1 << 10).is_err());
}

#[test]
fn random_oracle_examples() {
    let n = fixture("fx_ct_alu");
    let r = oracle_random(&n, &[], 0, 50, 1).unwrap();
    assert_eq!((r.trials, r.cycles, r.divergences.len()), (0, 0, 0));
    let r = oracle_random(&n, &[], 2000, 50, 1).unwrap();
    assert!(r.divergences.is_empty());
    assert_eq!(oracle_random(&n, &[], 300, 20, 9).unwrap(), oracle_random(&n, &[], 300, 20, 9).unwrap());
    // A violating design treated as if it had been proven.
    let r = oracle_random(&fixture("fx_serial_shift"), &[], 2000, 50, 1).unwrap();
    assert!(!r.divergences.is_empty());
}

#[test]
fn session_round_trip_and_guards() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let s = campaign("fx_tiny_cpu");
    save_session(&s, &path).unwrap();
    let n = fixture("fx_tiny_cpu");
    assert_eq!(load_session(&path, &n).unwrap(), s);

    let mut changed = n.clone();
    changed.regs[0].name.push('x');
    let text = ditcheck::netlist::pretty_print(&n).replace("reg ex_valid 1 init 0", "reg ex_valid 1 init 1");
    let changed_init = parse_netlist(&text).unwrap();
    assert!(matches!(load_session(&path, &changed_init), Err(SessionError::HashMismatch { .. })));

    let raw = std::fs::read_to_string(&path).unwrap().replace("dit-session/1", "dit-session/0");
    std::fs::write(&path, raw).unwrap();
    assert!(matches!(read_session(&path), Err(SessionError::Schema(_))));
}

/// Scripted answers until `left` runs out, then aborts.
struct Flaky {
    inner: ScriptedProvider,
    left: usize,
}

impl DecisionProvider for Flaky {
    fn decide(&mut self, q: &Query, l: &PartitionLedger) -> Result<Answer, ProviderError> {
        if self.left == 0 {
            return Err(ProviderError::Aborted("interrupted".into()));
        }
        self.left -= 1;
        self.inner.decide(q, l)
    }
}

#[test]
fn resumed_campaign_matches_uninterrupted() {
    for name in ["fx_tiny_cpu", "fx_ct_alu", "fx_mul_zeroskip"] {
        let full = campaign(name);
        let n = Arc::new(fixture(name));
        let sc = rules(name);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let mut s = Session::new(&n, Some(&sc), Mode::Inductive, DriverConfig::default()).unwrap();
        let mut p = Flaky { inner: ScriptedProvider::new(sc.clone()), left: 2 };
        assert!(run_upec_dit(&mut s, n.clone(), &mut p).is_err());
        assert_eq!(s.verdict, Verdict::Pending);
        save_session(&s, &path).unwrap();
        let mut s = load_session(&path, &n).unwrap();
        run_upec_dit(&mut s, n, &mut ScriptedProvider::new(sc)).unwrap();
        assert_eq!(std::mem::discriminant(&s.verdict), std::mem::discriminant(&full.verdict), "{name}");
        if let (Verdict::Violation { cex: a }, Verdict::Violation { cex: b }) = (&s.verdict, &full.verdict) {
            assert_eq!(s.cexs[a].diffs, full.cexs[b].diffs, "{name}");
        } else {
            assert_eq!(s.verdict, full.verdict, "{name}");
        }
        let sorted = |mut v: Vec<String>| {
            v.sort();
            v
        };
        assert_eq!(sorted(s.ledger.z_d()), sorted(full.ledger.z_d()), "{name}");
    }
}

#[test]
fn adversarial_labels_still_find_violations() {
    for name in ["fx_mul_zeroskip", "fx_serial_shift", "fx_div_early"] {
        let s = campaign_with(name, &adversarial(), Mode::Inductive, DriverConfig::default());
        assert!(replay_cex(&fixture(name), verdict_cex(&s)), "{name}");
    }
}

#[test]
fn iteration_cap_gives_unknown() {
    let cfg = DriverConfig { max_iterations: 1, ..Default::default() };
    let s = campaign_with("fx_ct_alu", &rules("fx_ct_alu"), Mode::Inductive, cfg);
    assert!(matches!(s.verdict, Verdict::Unknown { .. }));
}

#[test]
fn clause_budget_gives_unknown() {
    let cfg = DriverConfig {
        engine: EngineConfig { max_clauses: Some(10), ..Default::default() },
        ..Default::default()
    };
    let s = campaign_with("fx_ct_alu", &rules("fx_ct_alu"), Mode::Inductive, cfg);
    assert!(matches!(s.verdict, Verdict::Unknown { .. }), "{:?}", s.verdict);
}

#[test]
fn bug_hunt_modes() {
    let ctrl = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mode = Mode::BugHunt { control: ctrl(&["busy", "first", "cnt", "wb", "done_q"]), k: 6 };
    let s = campaign_with("fx_mul_zeroskip", &rules("fx_mul_zeroskip"), mode, DriverConfig::default());
    assert!(s.verdict.is_violation());

    let mode = Mode::BugHunt { control: ctrl(&["valid_pipe"]), k: 6 };
    let s = campaign_with("fx_ct_alu", &rules("fx_ct_alu"), mode, DriverConfig::default());
    assert_eq!(s.verdict, Verdict::NoViolationFound);
}

#[test]
fn unrolled_mode_agrees_with_inductive() {
    for name in ["fx_ct_alu", "fx_mul_zeroskip", "fx_serial_shift", "fx_pass"] {
        let ind = campaign(name);
        let unr = campaign_with(name, &rules(name), Mode::Unrolled { k: 6 }, DriverConfig::default());
        assert_eq!(ind.verdict.is_violation(), unr.verdict.is_violation(), "{name}");
    }
}

#[test]
fn scripted_classifications_carry_rule_provenance() {
    let s = campaign("fx_ct_alu");
    for z in s.ledger.z_d() {
        assert_eq!(s.ledger.state_class[&z].provenance, ditcheck::miter::Provenance::ScriptedRule);
        assert_eq!(s.ledger.state_class[&z].class, Role::Data);
    }
}
