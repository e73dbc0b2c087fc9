#![allow(dead_code)]

pub mod brute;

use ditcheck::driver::{run_upec_dit, DriverConfig, Mode, ScriptedProvider, Session};
use ditcheck::fixtures;
use ditcheck::miter::{parse_sidecar, Sidecar};
use ditcheck::netlist::{parse_netlist, simulate, InitPolicy, Netlist, Stimulus, Trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::fmt::Write;
use std::sync::Arc;

pub fn fixture(name: &str) -> Netlist {
    fixtures::get(name).unwrap_or_else(|| panic!("no fixture {name}")).parse()
}

pub fn rules(name: &str) -> Sidecar {
    fixtures::extra_rules(name).unwrap_or_else(|| fixtures::get(name).expect("fixture").sidecar())
}

/// Runs the refinement loop on a fixture with the given rules.
pub fn campaign_with(name: &str, sc: &Sidecar, mode: Mode, cfg: DriverConfig) -> Session {
    let n = Arc::new(fixture(name));
    let mut s = Session::new(&n, Some(sc), mode, cfg).expect("session");
    run_upec_dit(&mut s, n, &mut ScriptedProvider::new(sc.clone())).expect("campaign");
    s
}

pub fn campaign(name: &str) -> Session {
    campaign_with(name, &rules(name), Mode::Inductive, DriverConfig::default())
}

pub fn adversarial() -> Sidecar {
    parse_sidecar("class * data\n").unwrap()
}

/// Pulses `start` at cycle 0 with `args` held, then idles for `cycles`.
pub fn run_op(n: &Netlist, args: &[(&str, u64)], cycles: usize) -> Trace {
    let mut stim = Stimulus {
        policy: InitPolicy::Zero,
        ..Default::default()
    };
    for c in 0..cycles {
        let mut f: BTreeMap<String, u64> = n.inputs.iter().map(|p| (p.name.clone(), 0)).collect();
        f.insert("start".into(), u64::from(c == 0));
        for (k, v) in args {
            f.insert(k.to_string(), *v);
        }
        stim.inputs.push(f);
    }
    simulate(n, &stim).expect("simulate")
}

/// First cycle at which `sig` is 1.
pub fn first_high(t: &Trace, sig: &str) -> Option<usize> {
    t.values[sig].iter().position(|v| *v == 1)
}

pub struct Shape {
    pub control_inputs: usize,
    pub data_inputs: usize,
    pub regs: usize,
    pub wires: usize,
    pub outputs: usize,
    pub max_width: u32,
}

impl Shape {
    pub fn small() -> Self {
        Shape {
            control_inputs: 2,
            data_inputs: 2,
            regs: 3,
            wires: 3,
            outputs: 2,
            max_width: 3,
        }
    }
}

struct Gen {
    rng: ChaCha8Rng,
    sigs: Vec<(String, u32)>,
}

impl Gen {
    fn leaf(&mut self, w: u32) -> String {
        let (name, ws) = self.sigs[self.rng.gen_range(0..self.sigs.len())].clone();
        if ws == w {
            name
        } else if ws > w {
            let lo = self.rng.gen_range(0..=ws - w);
            format!("(slice {name} {} {lo})", lo + w - 1)
        } else {
            format!("(concat (const {} 0) {name})", w - ws)
        }
    }

    fn expr(&mut self, w: u32, depth: u32) -> String {
        if depth == 0 || self.rng.gen_bool(0.25) {
            return if self.rng.gen_bool(0.15) {
                format!("(const {w} {})", self.rng.gen_range(0..1u64 << w))
            } else {
                self.leaf(w)
            };
        }
        let d = depth - 1;
        match self.rng.gen_range(0..9) {
            0 => format!("(not {})", self.expr(w, d)),
            1..=3 => {
                let op = ["and", "or", "xor", "add", "sub", "mul"][self.rng.gen_range(0..6)];
                format!("({op} {} {})", self.expr(w, d), self.expr(w, d))
            }
            4 if w == 1 => {
                let wa = self.rng.gen_range(1..=3);
                let op = ["eq", "ult"][self.rng.gen_range(0..2)];
                format!("({op} {} {})", self.expr(wa, d), self.expr(wa, d))
            }
            5 => format!("(mux {} {} {})", self.expr(1, d), self.expr(w, d), self.expr(w, d)),
            6 if w >= 2 => {
                let hi = self.rng.gen_range(1..w);
                format!("(concat {} {})", self.expr(hi, d), self.expr(w - hi, d))
            }
            7 => format!("(shl {} {})", self.expr(w, d), self.rng.gen_range(0..w)),
            8 => format!("(shr {} {})", self.expr(w, d), self.rng.gen_range(0..w)),
            _ => format!("(xor {} {})", self.expr(w, d), self.leaf(w)),
        }
    }
}

/// Source text of a random valid netlist.
pub fn random_netlist_text(seed: u64, shape: &Shape) -> String {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        sigs: Vec::new(),
    };
    let mut t = format!("module r{seed}\n");
    let decl = |g: &mut Gen, t: &mut String, kind: &str, prefix: &str, count: usize| {
        for i in 0..count {
            let w = g.rng.gen_range(1..=shape.max_width);
            let name = format!("{prefix}{i}");
            let _ = writeln!(t, "  input {name} {w} {kind}");
            g.sigs.push((name, w));
        }
    };
    decl(&mut g, &mut t, "control", "c", shape.control_inputs.max(1));
    decl(&mut g, &mut t, "data", "d", shape.data_inputs);
    let mut regs = Vec::new();
    for i in 0..shape.regs {
        let w = g.rng.gen_range(1..=shape.max_width);
        let init = g.rng.gen_range(0..1u64 << w);
        let _ = writeln!(t, "  reg r{i} {w} init {init}");
        g.sigs.push((format!("r{i}"), w));
        regs.push(w);
    }
    for i in 0..shape.wires {
        let w = g.rng.gen_range(1..=shape.max_width);
        let e = g.expr(w, 3);
        let _ = writeln!(t, "  wire w{i} {w} = {e}");
        g.sigs.push((format!("w{i}"), w));
    }
    for (i, w) in regs.iter().enumerate() {
        let e = g.expr(*w, 3);
        let _ = writeln!(t, "  next r{i} = {e}");
    }
    for i in 0..shape.outputs {
        let w = g.rng.gen_range(1..=2);
        let e = g.expr(w, 3);
        let _ = writeln!(t, "  output y{i} {w} control");
        let _ = writeln!(t, "  drive y{i} = {e}");
    }
    t.push_str("endmodule\n");
    t
}

pub fn random_netlist(seed: u64, shape: &Shape) -> Netlist {
    let text = random_netlist_text(seed, shape);
    parse_netlist(&text).unwrap_or_else(|e| panic!("generated netlist does not parse: {e}\n{text}"))
}

/// Random input frames for `n` (all inputs, every cycle).
pub fn random_stimulus(n: &Netlist, cycles: usize, seed: u64) -> Stimulus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stim = Stimulus {
        policy: InitPolicy::Zero,
        ..Default::default()
    };
    for _ in 0..cycles {
        stim.inputs.push(
            n.inputs
                .iter()
                .map(|p| (p.name.clone(), rng.gen_range(0..1u64 << p.width)))
                .collect(),
        );
    }
    stim
}
