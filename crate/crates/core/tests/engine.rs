mod common;

use common::*;
use ditcheck::driver::{run_upec_dit, DecisionProvider, Mode, DriverConfig, Query, Answer, ProviderError, ScriptedProvider, Session};
use ditcheck::engine::{
    check_base, check_signal, check_step, check_unrolled, check_unrolled_io, encode_plan, replay_cex,
    step_divergence_set, step_goal_registers, Aig, DiffKind, EngineConfig, EngineError, Goal, Plan, Prepared,
    Severity, Start, Status, Target,
};
use ditcheck::fixtures;
use ditcheck::miter::{build_miter, PartitionLedger, Provenance};
use ditcheck::netlist::{Netlist, Role};
use ditcheck::sat::{solve, Budget, Cnf, Lit, SolveResult, SolverChoice};
use std::collections::BTreeSet;
use std::sync::Arc;

fn cfg() -> EngineConfig {
    EngineConfig::default()
}

fn ledger_with(n: &Netlist, data: &[&str]) -> PartitionLedger {
    let mut l = PartitionLedger::new(n);
    for d in data {
        l.classify(d, Role::Data, Provenance::UserDecision).unwrap();
    }
    l
}

fn setup(name: &str, data: &[&str]) -> (Arc<Netlist>, PartitionLedger) {
    let n = Arc::new(fixture(name));
    let l = ledger_with(&n, data);
    (n, l)
}

fn sat(cnf: &Cnf) -> bool {
    match solve(cnf, &SolverChoice::Embedded, &Budget::default()).unwrap() {
        SolveResult::Sat(m) => {
            assert!(cnf.satisfied_by(&m));
            true
        }
        SolveResult::Unsat => false,
        SolveResult::Unknown(w) => panic!("unknown: {w}"),
    }
}

#[test]
fn and_gate_is_three_clauses_plus_goal() {
    let mut aig = Aig::new();
    let base = aig.cnf.clauses.len();
    let (a, b) = (aig.fresh(), aig.fresh());
    let g = aig.and(a, b);
    assert_eq!(aig.cnf.clauses.len() - base, 3);
    aig.assume(g);
    assert_eq!(aig.cnf.clauses.len() - base, 4);
    assert_eq!(aig.cnf.clauses.last().unwrap(), &vec![g]);
    assert!(sat(&aig.cnf));
    aig.assume(!a);
    assert!(!sat(&aig.cnf));
}

#[test]
fn solver_basics() {
    assert!(sat(&Cnf::default()));
    let mut c = Cnf::default();
    let x = c.new_var();
    c.add(vec![x]);
    c.add(vec![!x]);
    assert!(!sat(&c));
}

#[test]
fn pigeonhole_4_3_is_unsat() {
    let mut c = Cnf::default();
    let p: Vec<Vec<Lit>> = (0..4).map(|_| (0..3).map(|_| c.new_var()).collect()).collect();
    for row in &p {
        c.add(row.clone());
    }
    for h in 0..3 {
        for i in 0..4 {
            for j in i + 1..4 {
                c.add(vec![!p[i][h], !p[j][h]]);
            }
        }
    }
    let brute = (0..1u32 << 12).any(|m| {
        let model: Vec<bool> = (0..12).map(|i| m >> i & 1 == 1).collect();
        c.satisfied_by(&model)
    });
    assert!(!brute);
    assert!(!sat(&c));
}

#[test]
fn pass_step_is_unsat() {
    let (n, l) = setup("fx_pass", &[]);
    let r = check_step(&build_miter(n, &l), &l, &cfg()).unwrap();
    assert_eq!(r.status, Status::Hold);
    assert!(r.cex.is_none());
}

#[test]
fn ct_alu_step() {
    let (n, l) = setup("fx_ct_alu", &[]);
    let m = build_miter(n.clone(), &l);
    let r = check_step(&m, &l, &cfg()).unwrap();
    assert_eq!(r.status, Status::CandidatePropagation);
    let cex = r.cex.unwrap();
    assert!(cex.diffs.iter().all(|d| d.kind == DiffKind::State));
    assert!(replay_cex(&n, &cex));
    assert_eq!(step_divergence_set(&m, &l, &cfg()).unwrap(), ["a_last", "b_last"]);

    let (n, l) = setup("fx_ct_alu", &["a_last", "b_last", "res_q"]);
    assert_eq!(check_step(&build_miter(n, &l), &l, &cfg()).unwrap().status, Status::Hold);
}

/// Goal locations of the step that differ in the counterexample, at the
/// earliest cycle where any does.
fn earliest_by_comparison(n: &Netlist, regs: &[String], cex: &ditcheck::engine::Counterexample) -> BTreeSet<String> {
    let mut cands: Vec<(usize, String)> = Vec::new();
    for o in n.outputs_with(Role::Control) {
        for c in 0..2 {
            cands.push((c, o.name.clone()));
        }
    }
    for r in regs {
        cands.push((1, r.clone()));
    }
    let differs: Vec<&(usize, String)> =
        cands.iter().filter(|(c, s)| cex.instances.a[s][*c] != cex.instances.b[s][*c]).collect();
    let first = differs.iter().map(|(c, _)| *c).min().unwrap();
    differs.iter().filter(|(c, _)| *c == first).map(|(_, s)| s.clone()).collect()
}

#[test]
fn mul_zeroskip_step_violates_on_done() {
    let (n, l) = setup("fx_mul_zeroskip", &["mplier", "mcand", "acc", "p_q"]);
    let m = build_miter(n.clone(), &l);
    let r = check_step(&m, &l, &cfg()).unwrap();
    assert_eq!(r.status, Status::Violated);
    let cex = r.cex.unwrap();
    assert!(replay_cex(&n, &cex));
    assert!(cex.diffs.iter().any(|d| d.loc == "done" && d.cycle == 1 && d.kind == DiffKind::Output));
    assert!(cex.diffs.iter().any(|d| d.loc == "done_q"));
    let got: BTreeSet<String> = cex.earliest().iter().map(|d| d.loc.clone()).collect();
    assert_eq!(got, earliest_by_comparison(&n, &step_goal_registers(&m, &l, &cfg()), &cex));
}

#[test]
fn mul_zeroskip_unrolled_io_splits_on_zero_operand() {
    let (n, l) = setup("fx_mul_zeroskip", &[]);
    let r = check_unrolled_io(&build_miter(n.clone(), &l), &l, 6, &cfg()).unwrap();
    assert_eq!(r.status, Status::Violated);
    let cex = r.cex.unwrap();
    assert!(replay_cex(&n, &cex));
    assert!(cex.diffs.iter().any(|d| d.loc == "done"));
    let (a, b) = (&cex.instances.a, &cex.instances.b);
    let split = (0..cex.k).any(|c| a["start"][c] == 1 && (a["a"][c] == 0) != (b["a"][c] == 0));
    assert!(split, "no zero/non-zero operand split in {:?} / {:?}", a["a"], b["a"]);
}

#[test]
fn base_examples() {
    let (n, l) = setup("fx_ct_alu", &[]);
    assert_eq!(check_base(&build_miter(n, &l), &l, 0, &cfg()).unwrap().status, Status::Hold);

    let (n, l) = setup("fx_uninit_ctrl", &["v"]);
    let r = check_base(&build_miter(n.clone(), &l), &l, 0, &cfg()).unwrap();
    assert_eq!(r.status, Status::Violated);
    let cex = r.cex.unwrap();
    assert!(cex.diffs.iter().any(|d| d.loc == "busy" && d.cycle == 0 && d.kind == DiffKind::ControlState));
    assert!(replay_cex(&n, &cex));

    let (n, l) = setup("fx_comb_leak", &[]);
    let r = check_base(&build_miter(n, &l), &l, 0, &cfg()).unwrap();
    assert_eq!(r.status, Status::Violated);
    assert!(r.cex.unwrap().diffs.iter().any(|d| d.loc == "ready" && d.cycle == 0));
}

#[test]
fn unrolled_io_holds_on_fixed_latency() {
    let (n, l) = setup("fx_sha_like", &[]);
    assert_eq!(check_unrolled_io(&build_miter(n, &l), &l, 12, &cfg()).unwrap().status, Status::Hold);
    let (n, l) = setup("fx_pass", &[]);
    assert_eq!(check_unrolled_io(&build_miter(n, &l), &l, 1, &cfg()).unwrap().status, Status::Hold);
    let m = build_miter(Arc::new(fixture("fx_pass")), &l);
    assert!(matches!(check_unrolled_io(&m, &l, 0, &cfg()), Err(EngineError::Precondition(_))));
}

#[test]
fn serial_shift_unrolled() {
    let (n, l) = setup("fx_serial_shift", &[]);
    let r = check_unrolled(&build_miter(n.clone(), &l), &l, 3, &cfg()).unwrap();
    assert_eq!(r.status, Status::CandidatePropagation);
    let cex = r.cex.unwrap();
    assert!(replay_cex(&n, &cex));
    assert!(cex.earliest().iter().all(|d| d.cycle == 1 && ["cnt", "val"].contains(&d.loc.as_str())));

    let (n, l) = setup("fx_serial_shift", &["val"]);
    let cex = check_unrolled(&build_miter(n.clone(), &l), &l, 3, &cfg()).unwrap().cex.unwrap();
    assert!(replay_cex(&n, &cex));
    let first: Vec<(&str, usize)> = cex.earliest().iter().map(|d| (d.loc.as_str(), d.cycle)).collect();
    assert_eq!(first, [("cnt", 1)]);

    let (n, l) = setup("fx_serial_shift", &["cnt", "val"]);
    let r = check_unrolled(&build_miter(n.clone(), &l), &l, 8, &cfg()).unwrap();
    assert_eq!(r.status, Status::Violated);
    let cex = r.cex.unwrap();
    assert!(cex.diffs.iter().any(|d| d.loc == "done"));
    assert!(replay_cex(&n, &cex));
}

#[test]
fn per_signal_on_rounds8() {
    let words: Vec<String> = (0..8).map(|i| format!("w{i}")).collect();
    let w: Vec<&str> = words.iter().map(String::as_str).collect();
    let (n, l) = setup("fx_rounds8", &w);
    let m = build_miter(n, &l);
    assert_eq!(check_signal(&m, &l, "round", &cfg()).unwrap().status, Status::Hold);
    assert!(matches!(check_signal(&m, &l, "w3", &cfg()), Err(EngineError::Precondition(_))));

    let (n, l) = setup("fx_rounds8", &[]);
    let m = build_miter(n.clone(), &l);
    let r = check_signal(&m, &l, "w3", &cfg()).unwrap();
    assert_eq!(r.status, Status::CandidatePropagation);
    assert!(replay_cex(&n, &r.cex.unwrap()));
    assert!(matches!(check_signal(&m, &l, "nope", &cfg()), Err(EngineError::Precondition(_))));
}

#[test]
fn corrupted_cex_does_not_replay() {
    let (n, l) = setup("fx_ct_alu", &[]);
    let mut cex = check_step(&build_miter(n.clone(), &l), &l, &cfg()).unwrap().cex.unwrap();
    assert!(replay_cex(&n, &cex));
    let v = cex.instances.a.get_mut("result").unwrap();
    v[1] ^= 1;
    assert!(!replay_cex(&n, &cex));
}

#[test]
fn unrolled_with_empty_control_set_matches_io() {
    for f in fixtures::ALL {
        let n = Arc::new(f.parse());
        let mut l = PartitionLedger::new(&n);
        let locs: Vec<String> = l.state_class.keys().chain(l.box_input_class.keys()).cloned().collect();
        for loc in locs {
            l.classify(&loc, Role::Data, Provenance::UserDecision).unwrap();
        }
        let m = build_miter(n, &l);
        for k in 1..=6 {
            let a = check_unrolled(&m, &l, k, &cfg()).unwrap().status;
            let b = check_unrolled_io(&m, &l, k, &cfg()).unwrap().status;
            assert_eq!(a, b, "{} k={k}", f.name);
        }
    }
}

/// Records the ledger before every query of a scripted campaign.
struct Snapshots {
    inner: ScriptedProvider,
    seen: Vec<PartitionLedger>,
}

impl DecisionProvider for Snapshots {
    fn decide(&mut self, q: &Query, l: &PartitionLedger) -> Result<Answer, ProviderError> {
        self.inner.decide(q, l)
    }
    fn progress(&mut self, s: &Session) {
        self.seen.push(s.ledger.clone());
    }
}

/// True if some control output, control box input or invariant goal of the
/// step can fail.
fn non_state_goals_fail(m: &ditcheck::miter::MiterModel, l: &PartitionLedger) -> bool {
    let mut goals = Vec::new();
    let pair = |loc: &str, frame| Goal {
        loc: loc.into(),
        frame,
        kind: DiffKind::Output,
        severity: Severity::Violation,
        target: Target::Pair(loc.into()),
    };
    for f in 0..2 {
        for o in m.base.outputs_with(Role::Control) {
            goals.push(pair(&o.name, f));
        }
        for (p, r) in m.box_obligations() {
            if r == Role::Control {
                goals.push(pair(&p, f));
            }
        }
    }
    for inv in &l.invariants {
        goals.push(Goal {
            loc: inv.name.clone(),
            frame: 1,
            kind: DiffKind::Invariant,
            severity: Severity::Invariant,
            target: Target::Invariant(inv.name.clone()),
        });
    }
    let plan = Plan {
        frames: 2,
        start: Start::Aliased(m.candidate_states.clone()),
        assume_invariants: true,
        goals,
    };
    let enc = encode_plan(&Prepared::new(m, l).unwrap(), &plan);
    enc.has_goal && sat(&enc.aig.cnf)
}

#[test]
fn per_signal_union_matches_monolithic() {
    let mut checked = 0;
    for f in fixtures::ALL {
        let n = Arc::new(f.parse());
        let sc = rules(f.name);
        let mut s = Session::new(&n, Some(&sc), Mode::Inductive, DriverConfig::default()).unwrap();
        let mut p = Snapshots { inner: ScriptedProvider::new(sc), seen: vec![PartitionLedger::new(&n)] };
        run_upec_dit(&mut s, n.clone(), &mut p).unwrap();
        p.seen.push(s.ledger.clone());
        for l in &p.seen {
            let m = build_miter(n.clone(), l);
            let mut zs = m.candidate_states.clone();
            zs.extend(m.box_obligations().into_iter().filter(|(_, r)| *r == Role::Data).map(|(p, _)| p));
            let failing: Vec<String> = zs
                .iter()
                .filter(|z| !check_signal(&m, l, z, &cfg()).unwrap().status.is_hold())
                .cloned()
                .collect();
            let mono = check_step(&m, l, &EngineConfig { coi: false, ..cfg() }).unwrap();
            if non_state_goals_fail(&m, l) {
                assert_eq!(failing, zs, "{}", f.name);
                assert!(!mono.status.is_hold());
            } else {
                let mut div = step_divergence_set(&m, l, &cfg()).unwrap();
                let order = |z: &String| zs.iter().position(|x| x == z);
                div.sort_by_key(order);
                assert_eq!(failing, div, "{}", f.name);
                assert_eq!(mono.status.is_hold(), failing.is_empty(), "{}", f.name);
            }
            checked += 1;
        }
    }
    assert!(checked > 20);
}

#[test]
fn encoding_matches_brute_force_on_random_miters() {
    let r = brute::random_miter_agreement(200);
    assert!(r.mismatches.is_empty(), "{:?}", r.mismatches);
    assert!(r.sat > 10 && r.unsat > 10, "sat {} unsat {}", r.sat, r.unsat);
}
