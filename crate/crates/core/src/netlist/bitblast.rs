//! Lowering of a word-level netlist to single-bit signals over the gate set
//! {and, not, xor, mux}.

use super::{BinOp, BoxDecl, BoxInput, BoxOutput, Expr, Init, Netlist, Port, Register, Trace, Wire};
use super::sim::Stimulus;
use indexmap::IndexMap;
use std::collections::BTreeMap;

/// Name of bit `i` of a word signal of width `width`. Single-bit signals keep
/// their name.
pub fn bit_name(sig: &str, width: u32, i: u32) -> String {
    if width == 1 {
        sig.to_string()
    } else {
        format!("{sig}[{i}]")
    }
}

#[derive(Debug, Clone)]
pub struct BitNetlist {
    /// Netlist whose every signal is one bit wide.
    pub netlist: Netlist,
    /// Word signal name to its bit names, LSB first.
    pub bits: BTreeMap<String, Vec<String>>,
    /// Number of gate wires introduced by lowering.
    pub gates: usize,
}

impl BitNetlist {
    /// Splits word-level stimuli into per-bit stimuli.
    pub fn split_stimulus(&self, stim: &Stimulus) -> Stimulus {
        let split = |m: &BTreeMap<String, u64>| -> BTreeMap<String, u64> {
            let mut out = BTreeMap::new();
            for (k, v) in m {
                for (i, b) in self.bits[k].iter().enumerate() {
                    out.insert(b.clone(), (v >> i) & 1);
                }
            }
            out
        };
        Stimulus {
            init: split(&stim.init),
            inputs: stim.inputs.iter().map(split).collect(),
            box_outputs: stim.box_outputs.iter().map(split).collect(),
            policy: stim.policy,
        }
    }

    /// Reassembles the word value of `sig` at `cycle` from a bit-level trace.
    pub fn word_value(&self, trace: &Trace, sig: &str, cycle: usize) -> Option<u64> {
        let bits = self.bits.get(sig)?;
        let mut v = 0u64;
        for (i, b) in bits.iter().enumerate() {
            v |= (trace.get(b, cycle)? & 1) << i;
        }
        Some(v)
    }
}

fn is_bit_level(n: &Netlist) -> bool {
    fn gate_ok(e: &Expr) -> bool {
        match e {
            Expr::Ref(_) => true,
            Expr::Const { width, .. } => *width == 1,
            Expr::Not(a) => gate_ok(a),
            Expr::Bin(BinOp::And | BinOp::Xor, a, b) => gate_ok(a) && gate_ok(b),
            Expr::Mux(c, a, b) => gate_ok(c) && gate_ok(a) && gate_ok(b),
            _ => false,
        }
    }
    n.inputs.iter().chain(&n.outputs).all(|p| p.width == 1)
        && n.regs.iter().all(|r| r.width == 1)
        && n.wires.iter().all(|w| w.width == 1 && gate_ok(&w.expr))
        && n.next_fns.values().all(gate_ok)
        && n.drive_fns.values().all(gate_ok)
        && n.boxes.iter().all(|b| b.outputs.iter().all(|o| o.width == 1) && b.inputs.iter().all(|i| gate_ok(&i.expr)))
}

struct Lowering<'a> {
    src: &'a Netlist,
    gates: Vec<Wire>,
}

fn bit(v: bool) -> Expr {
    Expr::konst(1, v as u64)
}

fn as_const(e: &Expr) -> Option<bool> {
    match e {
        Expr::Const { value, .. } => Some(*value & 1 == 1),
        _ => None,
    }
}

impl Lowering<'_> {
    fn gate(&mut self, e: Expr) -> Expr {
        let name = format!("_g{}", self.gates.len());
        self.gates.push(Wire {
            name: name.clone(),
            width: 1,
            expr: e,
        });
        Expr::Ref(name)
    }

    fn not(&mut self, a: Expr) -> Expr {
        match as_const(&a) {
            Some(v) => bit(!v),
            None => self.gate(Expr::not(a)),
        }
    }

    fn and(&mut self, a: Expr, b: Expr) -> Expr {
        match (as_const(&a), as_const(&b)) {
            (Some(false), _) | (_, Some(false)) => bit(false),
            (Some(true), _) => b,
            (_, Some(true)) => a,
            _ => self.gate(Expr::bin(BinOp::And, a, b)),
        }
    }

    fn xor(&mut self, a: Expr, b: Expr) -> Expr {
        match (as_const(&a), as_const(&b)) {
            (Some(x), Some(y)) => bit(x ^ y),
            (Some(false), _) => b,
            (_, Some(false)) => a,
            (Some(true), _) => self.not(b),
            (_, Some(true)) => self.not(a),
            _ => self.gate(Expr::bin(BinOp::Xor, a, b)),
        }
    }

    fn mux(&mut self, c: Expr, a: Expr, b: Expr) -> Expr {
        if a == b {
            return a;
        }
        match as_const(&c) {
            Some(true) => a,
            Some(false) => b,
            None => match (as_const(&a), as_const(&b)) {
                (Some(true), Some(false)) => c,
                (Some(false), Some(true)) => self.not(c),
                _ => self.gate(Expr::mux(c, a, b)),
            },
        }
    }

    fn or(&mut self, a: Expr, b: Expr) -> Expr {
        // c ? 1 : b
        self.mux(a, bit(true), b)
    }

    /// Returns (sum bits, carry out).
    fn adder(&mut self, a: &[Expr], b: &[Expr], mut carry: Expr) -> Vec<Expr> {
        let mut out = Vec::with_capacity(a.len());
        for (x, y) in a.iter().zip(b) {
            let p = self.xor(x.clone(), y.clone());
            out.push(self.xor(p.clone(), carry.clone()));
            // Majority: propagate ? carry : x
            carry = self.mux(p, carry, x.clone());
        }
        out
    }

    fn signal_bits(&self, name: &str) -> Vec<Expr> {
        let w = self.src.width_of(name).expect("validated reference");
        (0..w).map(|i| Expr::Ref(bit_name(name, w, i))).collect()
    }

    fn lower(&mut self, e: &Expr) -> Vec<Expr> {
        match e {
            Expr::Ref(n) => self.signal_bits(n),
            Expr::Const { width, value } => (0..*width).map(|i| bit((value >> i) & 1 == 1)).collect(),
            Expr::Not(a) => {
                let a = self.lower(a);
                a.into_iter().map(|x| self.not(x)).collect()
            }
            Expr::Bin(op, a, b) => {
                let a = self.lower(a);
                let b = self.lower(b);
                match op {
                    BinOp::And => a.into_iter().zip(b).map(|(x, y)| self.and(x, y)).collect(),
                    BinOp::Or => a.into_iter().zip(b).map(|(x, y)| self.or(x, y)).collect(),
                    BinOp::Xor => a.into_iter().zip(b).map(|(x, y)| self.xor(x, y)).collect(),
                    BinOp::Add => self.adder(&a, &b, bit(false)),
                    BinOp::Sub => {
                        let nb: Vec<Expr> = b.into_iter().map(|y| self.not(y)).collect();
                        self.adder(&a, &nb, bit(true))
                    }
                    BinOp::Mul => {
                        let w = a.len();
                        let mut acc: Vec<Expr> = vec![bit(false); w];
                        for (i, bi) in b.iter().enumerate() {
                            let mut partial = vec![bit(false); w];
                            for j in 0..w - i {
                                partial[i + j] = self.and(a[j].clone(), bi.clone());
                            }
                            if partial.iter().all(|p| as_const(p) == Some(false)) {
                                continue;
                            }
                            acc = self.adder(&acc, &partial, bit(false));
                        }
                        acc
                    }
                    BinOp::Eq => {
                        let mut all = bit(true);
                        for (x, y) in a.into_iter().zip(b) {
                            let d = self.xor(x, y);
                            let same = self.not(d);
                            all = self.and(all, same);
                        }
                        vec![all]
                    }
                    BinOp::Ult => {
                        let mut lt = bit(false);
                        for (x, y) in a.into_iter().zip(b) {
                            let d = self.xor(x, y.clone());
                            lt = self.mux(d, y, lt);
                        }
                        vec![lt]
                    }
                    BinOp::Concat => b.into_iter().chain(a).collect(),
                }
            }
            Expr::Mux(c, a, b) => {
                let c = self.lower(c).remove(0);
                let a = self.lower(a);
                let b = self.lower(b);
                a.into_iter().zip(b).map(|(x, y)| self.mux(c.clone(), x, y)).collect()
            }
            Expr::Shl(a, n) => {
                let a = self.lower(a);
                let n = *n as usize;
                (0..a.len()).map(|i| if i >= n { a[i - n].clone() } else { bit(false) }).collect()
            }
            Expr::Shr(a, n) => {
                let a = self.lower(a);
                let n = *n as usize;
                (0..a.len()).map(|i| a.get(i + n).cloned().unwrap_or_else(|| bit(false))).collect()
            }
            Expr::Slice(a, hi, lo) => {
                let a = self.lower(a);
                a[*lo as usize..=*hi as usize].to_vec()
            }
        }
    }
}

/// Lowers a valid netlist to a bit-level netlist with identical semantics.
/// Already bit-level netlists are returned unchanged.
pub fn bitblast(n: &Netlist) -> BitNetlist {
    let mut bits = BTreeMap::new();
    let mut record = |name: String, width: u32| {
        bits.insert(name.clone(), (0..width).map(|i| bit_name(&name, width, i)).collect::<Vec<_>>());
    };
    for p in n.inputs.iter().chain(&n.outputs) {
        record(p.name.clone(), p.width);
    }
    for r in &n.regs {
        record(r.name.clone(), r.width);
    }
    for w in &n.wires {
        record(w.name.clone(), w.width);
    }
    for b in &n.boxes {
        for o in &b.outputs {
            record(b.pin(&o.name), o.width);
        }
        for i in &b.inputs {
            record(b.pin(&i.name), n.width_of(&b.pin(&i.name)).unwrap_or(1));
        }
    }

    if is_bit_level(n) {
        return BitNetlist {
            netlist: n.clone(),
            bits,
            gates: 0,
        };
    }

    let mut lw = Lowering { src: n, gates: Vec::new() };
    let mut out = Netlist {
        name: n.name.clone(),
        ..Default::default()
    };
    let split_ports = |ports: &[Port]| -> Vec<Port> {
        ports
            .iter()
            .flat_map(|p| {
                (0..p.width).map(move |i| Port {
                    name: bit_name(&p.name, p.width, i),
                    width: 1,
                    role: p.role,
                })
            })
            .collect()
    };
    out.inputs = split_ports(&n.inputs);
    out.outputs = split_ports(&n.outputs);
    for r in &n.regs {
        for i in 0..r.width {
            out.regs.push(Register {
                name: bit_name(&r.name, r.width, i),
                width: 1,
                init: match r.init {
                    Init::Value(v) => Init::Value((v >> i) & 1),
                    Init::Uninitialized => Init::Uninitialized,
                },
            });
        }
    }
    let mut sig_wires = Vec::new();
    for w in &n.wires {
        let lowered = lw.lower(&w.expr);
        for (i, e) in lowered.into_iter().enumerate() {
            sig_wires.push(Wire {
                name: bit_name(&w.name, w.width, i as u32),
                width: 1,
                expr: e,
            });
        }
    }
    let mut next_fns = IndexMap::new();
    for r in &n.regs {
        for (i, e) in lw.lower(&n.next_fns[&r.name]).into_iter().enumerate() {
            next_fns.insert(bit_name(&r.name, r.width, i as u32), e);
        }
    }
    let mut drive_fns = IndexMap::new();
    for p in &n.outputs {
        for (i, e) in lw.lower(&n.drive_fns[&p.name]).into_iter().enumerate() {
            drive_fns.insert(bit_name(&p.name, p.width, i as u32), e);
        }
    }
    for b in &n.boxes {
        let mut inputs = Vec::new();
        for inp in &b.inputs {
            let lowered = lw.lower(&inp.expr);
            let w = lowered.len() as u32;
            for (i, e) in lowered.into_iter().enumerate() {
                inputs.push(BoxInput {
                    name: bit_name(&inp.name, w, i as u32),
                    expr: e,
                    role: inp.role,
                });
            }
        }
        let outputs = b
            .outputs
            .iter()
            .flat_map(|o| {
                (0..o.width).map(move |i| BoxOutput {
                    name: bit_name(&o.name, o.width, i),
                    width: 1,
                    role: o.role,
                })
            })
            .collect();
        out.boxes.push(BoxDecl {
            name: b.name.clone(),
            inputs,
            outputs,
        });
    }
    for o in &n.observations {
        out.observations.extend(bits[o].iter().cloned());
    }
    let gates = lw.gates.len();
    out.wires = lw.gates;
    out.wires.extend(sig_wires);
    out.next_fns = next_fns;
    out.drive_fns = drive_fns;
    BitNetlist {
        netlist: out,
        bits,
        gates,
    }
}
