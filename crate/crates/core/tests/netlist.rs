mod common;

use common::*;
use ditcheck::fixtures;
use ditcheck::netlist::{
    bitblast, import_aiger, parse_netlist, pretty_print, simulate, validate, InitPolicy, Role, Stimulus,
};
use proptest::prelude::*;
use std::collections::BTreeMap;

#[test]
fn mul_zeroskip_ports_and_roles() {
    let n = fixture("fx_mul_zeroskip");
    let roles: BTreeMap<&str, Role> = n
        .inputs
        .iter()
        .chain(&n.outputs)
        .map(|p| (p.name.as_str(), p.role))
        .collect();
    let want = BTreeMap::from([
        ("start", Role::Control),
        ("a", Role::Data),
        ("b", Role::Data),
        ("done", Role::Control),
        ("p", Role::Data),
    ]);
    assert_eq!(roles, want);
}

#[test]
fn ct_alu_is_clean() {
    assert!(validate(&fixture("fx_ct_alu")).is_empty());
}

#[test]
fn every_fixture_validates_and_round_trips() {
    for f in fixtures::ALL {
        let n = f.parse();
        assert!(validate(&n).is_empty(), "{}", f.name);
        let again = parse_netlist(&pretty_print(&n)).unwrap();
        assert_eq!(again, n, "{}", f.name);
    }
}

#[test]
fn ct_alu_valid_one_cycle_after_start() {
    let n = fixture("fx_ct_alu");
    let t = run_op(&n, &[("op", 0), ("a", 0), ("b", 0)], 6);
    assert_eq!(t.values["valid_out"], vec![0, 1, 0, 0, 0, 0]);
    assert_eq!(t.get("result", 1), Some(0));
}

#[test]
fn ct_alu_results() {
    let n = fixture("fx_ct_alu");
    for op in 0..4u64 {
        for a in 0..16u64 {
            for b in [0u64, 3, 9, 15] {
                let t = run_op(&n, &[("op", op), ("a", a), ("b", b)], 2);
                let want = match op {
                    0 => (a + b) & 15,
                    1 => a.wrapping_sub(b) & 15,
                    2 => a & b,
                    _ => a ^ b,
                };
                assert_eq!(t.get("result", 1), Some(want), "op {op} a {a} b {b}");
            }
        }
    }
}

#[test]
fn mul_zeroskip_latency_and_product() {
    let n = fixture("fx_mul_zeroskip");
    for a in 0..16u64 {
        for b in 0..16u64 {
            let t = run_op(&n, &[("a", a), ("b", b)], 10);
            let done = first_high(&t, "done").expect("done");
            assert_eq!(done, if a == 0 { 2 } else { 6 }, "a {a} b {b}");
            assert_eq!(t.get("p", done), Some((a * b) & 255), "a {a} b {b}");
        }
    }
}

#[test]
fn serial_shift_latency_tracks_rs2() {
    let n = fixture("fx_serial_shift");
    for rs1 in 0..16u64 {
        for rs2 in 0..8u64 {
            let t = run_op(&n, &[("rs1", rs1), ("rs2", rs2)], 14);
            let done = first_high(&t, "done").expect("done");
            assert_eq!(done as u64, rs2 + 2);
            assert_eq!(t.get("rd", done), Some((rs1 << rs2) & 15));
        }
    }
}

#[test]
fn div_early_exit_on_zero_divisor() {
    let n = fixture("fx_div_early");
    for x in 0..16u64 {
        for d in 0..16u64 {
            let t = run_op(&n, &[("dividend", x), ("divisor", d)], 10);
            let done = first_high(&t, "done").expect("done");
            if d == 0 {
                assert_eq!((done, t.get("quotient", done)), (2, Some(15)));
            } else {
                assert_eq!((done, t.get("quotient", done)), (5, Some(x / d)), "{x}/{d}");
            }
        }
    }
}

/// Minimal ASCII AIGER interpreter used as a reference.
struct Aag {
    inputs: Vec<u32>,
    latches: Vec<(u32, u32, u64)>,
    outputs: Vec<u32>,
    ands: Vec<(u32, u32, u32)>,
}

impl Aag {
    fn parse(text: &str) -> Aag {
        let mut lines = text.lines();
        let h: Vec<usize> = lines.next().unwrap().split_whitespace().skip(1).map(|x| x.parse().unwrap()).collect();
        let nums = |l: &str| -> Vec<u32> { l.split_whitespace().map(|x| x.parse().unwrap()).collect() };
        let inputs = (0..h[1]).map(|_| nums(lines.next().unwrap())[0]).collect();
        let latches = (0..h[2])
            .map(|_| {
                let v = nums(lines.next().unwrap());
                (v[0], v[1], v.get(2).copied().unwrap_or(0) as u64)
            })
            .collect();
        let outputs = (0..h[3]).map(|_| nums(lines.next().unwrap())[0]).collect();
        let ands = (0..h[4])
            .map(|_| {
                let v = nums(lines.next().unwrap());
                (v[0], v[1], v[2])
            })
            .collect();
        Aag { inputs, latches, outputs, ands }
    }

    /// Output values per cycle.
    fn run(&self, frames: &[Vec<u64>]) -> Vec<Vec<u64>> {
        let mut state: Vec<u64> = self.latches.iter().map(|l| l.2).collect();
        let mut out = Vec::new();
        for f in frames {
            let mut val: BTreeMap<u32, u64> = BTreeMap::from([(0, 0)]);
            for (i, lit) in self.inputs.iter().enumerate() {
                val.insert(lit / 2, f[i]);
            }
            for (i, l) in self.latches.iter().enumerate() {
                val.insert(l.0 / 2, state[i]);
            }
            let lit = |val: &BTreeMap<u32, u64>, l: u32| val[&(l / 2)] ^ u64::from(l & 1);
            for (lhs, a, b) in &self.ands {
                let v = lit(&val, *a) & lit(&val, *b);
                val.insert(lhs / 2, v);
            }
            out.push(self.outputs.iter().map(|o| lit(&val, *o)).collect());
            state = self.latches.iter().map(|l| lit(&val, l.1)).collect();
        }
        out
    }
}

fn check_aiger(text: &str, out_names: &[&str], cycles: usize) {
    let reference = Aag::parse(text);
    let n = import_aiger(text.as_bytes()).unwrap();
    let ni = reference.inputs.len();
    let combos = 1usize << (ni * cycles);
    for code in 0..combos {
        let frames: Vec<Vec<u64>> = (0..cycles)
            .map(|c| (0..ni).map(|i| ((code >> (c * ni + i)) & 1) as u64).collect())
            .collect();
        let stim = Stimulus {
            policy: InitPolicy::Zero,
            inputs: frames
                .iter()
                .map(|f| n.inputs.iter().zip(f).map(|(p, v)| (p.name.clone(), *v)).collect())
                .collect(),
            ..Default::default()
        };
        let t = simulate(&n, &stim).unwrap();
        for (c, want) in reference.run(&frames).iter().enumerate() {
            let got: Vec<u64> = out_names.iter().map(|o| t.get(o, c).unwrap()).collect();
            assert_eq!(&got, want, "inputs {frames:?} cycle {c}");
        }
    }
}

#[test]
fn aiger_and_chain_matches_reference() {
    check_aiger(include_str!("../fixtures/aig_and3.aag"), &["y"], 1);
}

#[test]
fn aiger_latches_match_reference() {
    check_aiger(include_str!("../fixtures/aig_toggle.aag"), &["nseen", "par_next"], 4);
}

#[test]
fn aiger_imports_as_data() {
    let n = import_aiger(include_bytes!("../fixtures/aig_and3.aag")).unwrap();
    assert!(n.inputs.iter().chain(&n.outputs).all(|p| p.role == Role::Data));
    assert_eq!(n.inputs.iter().map(|p| p.name.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
}

fn state_bits(n: &ditcheck::netlist::Netlist) -> u32 {
    n.regs.iter().map(|r| r.width).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_netlists_round_trip(seed in any::<u64>()) {
        let n = random_netlist(seed, &Shape::small());
        prop_assert!(validate(&n).is_empty());
        prop_assert_eq!(parse_netlist(&pretty_print(&n)).unwrap(), n);
    }

    #[test]
    fn bitblast_matches_word_simulation(seed in any::<u64>(), stim_seed in any::<u64>()) {
        let n = random_netlist(seed, &Shape::small());
        prop_assume!(state_bits(&n) <= 32);
        let stim = random_stimulus(&n, 20, stim_seed);
        let word = simulate(&n, &stim).unwrap();
        let bits = bitblast(&n);
        let bit = simulate(&bits.netlist, &bits.split_stimulus(&stim)).unwrap();
        for sig in word.values.keys() {
            for c in 0..20 {
                prop_assert_eq!(bits.word_value(&bit, sig, c), word.get(sig, c), "{} @ {}", sig, c);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>(), stim_seed in any::<u64>()) {
        let n = random_netlist(seed, &Shape::small());
        let stim = random_stimulus(&n, 12, stim_seed);
        prop_assert_eq!(simulate(&n, &stim).unwrap(), simulate(&n, &stim).unwrap());
        prop_assert_eq!(bitblast(&n).netlist, bitblast(&n).netlist);
    }
}

#[test]
fn fixtures_bitblast_agree_with_word_level() {
    for f in fixtures::ALL {
        let n = f.parse();
        if !n.boxes.is_empty() {
            continue;
        }
        let stim = random_stimulus(&n, 16, 7);
        let word = simulate(&n, &stim).unwrap();
        let bits = bitblast(&n);
        let bit = simulate(&bits.netlist, &bits.split_stimulus(&stim)).unwrap();
        for sig in word.values.keys() {
            for c in 0..16 {
                assert_eq!(bits.word_value(&bit, sig, c), word.get(sig, c), "{} {sig} @ {c}", f.name);
            }
        }
    }
}
