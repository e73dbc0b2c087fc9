//! Exhaustive reference for small step and unrolled-IO obligations.

use super::{random_netlist, Shape};
use ditcheck::engine::{check_step, check_unrolled_io, EngineConfig};
use ditcheck::miter::{build_miter, PartitionLedger, Provenance};
use ditcheck::netlist::{simulate, InitPolicy, Netlist, Role, Stimulus};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Number of free bits in the step obligation of `m`, or `None` if the
/// design has boxes.
pub fn step_free_bits(n: &Netlist, l: &PartitionLedger) -> u32 {
    let zc: u32 = n.regs.iter().filter(|r| l.state_class[&r.name].class == Role::Control).map(|r| r.width).sum();
    let zd: u32 = n.regs.iter().filter(|r| l.state_class[&r.name].class == Role::Data).map(|r| r.width).sum();
    let xc: u32 = n.inputs_with(Role::Control).map(|p| p.width).sum();
    let xd: u32 = n.inputs_with(Role::Data).map(|p| p.width).sum();
    zc + 2 * zd + 2 * xc + 4 * xd
}

/// Takes `bits` bits from `code` starting at `*at`.
pub fn take(code: u64, at: &mut u32, bits: u32) -> u64 {
    let v = (code >> *at) & ((1u64 << bits) - 1);
    *at += bits;
    v
}

/// Exhaustive search for a pair of two-cycle runs that satisfies the step
/// assumptions and breaks one of its goals.
pub fn step_brute_force(n: &Netlist, l: &PartitionLedger) -> bool {
    let bits = step_free_bits(n, l);
    for code in 0..1u64 << bits {
        let mut at = 0;
        let mut init = [BTreeMap::new(), BTreeMap::new()];
        for r in &n.regs {
            if l.state_class[&r.name].class == Role::Control {
                let v = take(code, &mut at, r.width);
                init[0].insert(r.name.clone(), v);
                init[1].insert(r.name.clone(), v);
            } else {
                for i in &mut init {
                    i.insert(r.name.clone(), take(code, &mut at, r.width));
                }
            }
        }
        let mut frames = [vec![BTreeMap::new(), BTreeMap::new()], vec![BTreeMap::new(), BTreeMap::new()]];
        for c in 0..2 {
            for p in &n.inputs {
                if p.role == Role::Control {
                    let v = take(code, &mut at, p.width);
                    frames[0][c].insert(p.name.clone(), v);
                    frames[1][c].insert(p.name.clone(), v);
                } else {
                    for f in frames.iter_mut() {
                        f[c].insert(p.name.clone(), take(code, &mut at, p.width));
                    }
                }
            }
        }
        let [ia, ib] = init.clone();
        let [fa, fb] = frames.clone();
        let run = |init: BTreeMap<String, u64>, inputs| {
            simulate(
                n,
                &Stimulus {
                    init,
                    inputs,
                    box_outputs: vec![],
                    policy: InitPolicy::Require,
                },
            )
            .unwrap()
        };
        let (ta, tb) = (run(ia, fa), run(ib, fb));
        let out_diff = n
            .outputs_with(Role::Control)
            .any(|o| (0..2).any(|c| ta.get(&o.name, c) != tb.get(&o.name, c)));
        let reg_diff = l.z_c().iter().any(|r| ta.get(r, 1) != tb.get(r, 1));
        if out_diff || reg_diff {
            return true;
        }
    }
    false
}

/// Exhaustive search for the unrolled-IO obligation with k = 1.
pub fn io1_brute_force(n: &Netlist) -> bool {
    let s: u32 = n.regs.iter().map(|r| r.width).sum();
    let xc: u32 = n.inputs_with(Role::Control).map(|p| p.width).sum();
    let xd: u32 = n.inputs_with(Role::Data).map(|p| p.width).sum();
    let bits = s + 2 * xc + 4 * xd;
    for code in 0..1u64 << bits {
        let mut at = 0;
        let init: BTreeMap<String, u64> = n.regs.iter().map(|r| (r.name.clone(), take(code, &mut at, r.width))).collect();
        let mut fa = vec![BTreeMap::new(), BTreeMap::new()];
        let mut fb = fa.clone();
        for c in 0..2 {
            for p in &n.inputs {
                let v = take(code, &mut at, p.width);
                fa[c].insert(p.name.clone(), v);
                let w = if p.role == Role::Control { v } else { take(code, &mut at, p.width) };
                fb[c].insert(p.name.clone(), w);
            }
        }
        let run = |inputs| {
            simulate(n, &Stimulus { init: init.clone(), inputs, box_outputs: vec![], policy: InitPolicy::Require }).unwrap()
        };
        let (ta, tb) = (run(fa), run(fb));
        if n.outputs_with(Role::Control).any(|o| (0..2).any(|c| ta.get(&o.name, c) != tb.get(&o.name, c))) {
            return true;
        }
    }
    false
}

pub struct Agreement {
    pub step_cases: usize,
    pub io_cases: usize,
    pub sat: usize,
    pub unsat: usize,
    pub mismatches: Vec<String>,
}

/// Compares the engine with brute force on `cases` step obligations (COI
/// off) and `cases` unrolled-IO obligations with k = 1, each with at most
/// 20 free bits.
pub fn random_miter_agreement(cases: usize) -> Agreement {
    let cfg = EngineConfig::default();
    let no_coi = EngineConfig { coi: false, ..cfg.clone() };
    let mut r = Agreement { step_cases: 0, io_cases: 0, sat: 0, unsat: 0, mismatches: Vec::new() };
    let mut seed = 0u64;
    while r.step_cases < cases || r.io_cases < cases {
        seed += 1;
        assert!(seed < 20_000, "not enough small random miters");
        // Every third design has no data inputs, so only data registers
        // can diverge and many steps hold.
        let shape = Shape {
            control_inputs: 1,
            data_inputs: usize::from(seed % 3 != 0),
            regs: 3,
            wires: 2,
            outputs: 2,
            max_width: 2,
        };
        let n = Arc::new(random_netlist(seed, &shape));
        let mut l = PartitionLedger::new(&n);
        for (i, reg) in n.regs.iter().enumerate() {
            if seed >> (i + 3) & 1 == 1 {
                l.classify(&reg.name, Role::Data, Provenance::UserDecision).unwrap();
            }
        }
        let m = build_miter(n.clone(), &l);
        if r.step_cases < cases && step_free_bits(&n, &l) <= 20 {
            let want = step_brute_force(&n, &l);
            let got = !check_step(&m, &l, &no_coi).unwrap().status.is_hold();
            if got != want {
                r.mismatches.push(format!("step, seed {seed}"));
            }
            if want {
                r.sat += 1;
            } else {
                r.unsat += 1;
            }
            r.step_cases += 1;
        }
        let s: u32 = n.regs.iter().map(|r| r.width).sum();
        let x: u32 = n.inputs_with(Role::Control).map(|p| p.width).sum::<u32>() * 2
            + n.inputs_with(Role::Data).map(|p| p.width).sum::<u32>() * 4;
        if r.io_cases < cases && s + x <= 20 {
            let want = io1_brute_force(&n);
            let got = !check_unrolled_io(&m, &l, 1, &cfg).unwrap().status.is_hold();
            if got != want {
                r.mismatches.push(format!("unrolled-io, seed {seed}"));
            }
            r.io_cases += 1;
        }
    }
    r
}
