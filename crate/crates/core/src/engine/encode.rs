//! Structurally hashed Tseitin encoding of the bit-level miter, unrolled over
//! a window of frames.

use super::{DiffKind, EngineError, Severity};
use crate::miter::{Instance, MiterModel, PartitionLedger};
use crate::netlist::{bitblast, BinOp, BitNetlist, CExpr, Compiled, Init, SigId, Wire};
use crate::sat::{Cnf, Lit};
use std::collections::{HashMap, HashSet};

/// CNF builder with constant folding and structural hashing. Variable 0 is
/// the constant true.
pub struct Aig {
    pub cnf: Cnf,
    strash: HashMap<(u8, usize, usize, usize), Lit>,
}

impl Default for Aig {
    fn default() -> Self {
        Self::new()
    }
}

impl Aig {
    pub fn new() -> Self {
        let mut cnf = Cnf::default();
        let t = cnf.new_var();
        cnf.add(vec![t]);
        Aig {
            cnf,
            strash: HashMap::new(),
        }
    }

    pub fn t(&self) -> Lit {
        Lit::pos(0)
    }

    pub fn f(&self) -> Lit {
        !Lit::pos(0)
    }

    pub fn fresh(&mut self) -> Lit {
        self.cnf.new_var()
    }

    pub fn and(&mut self, a: Lit, b: Lit) -> Lit {
        let (t, f) = (self.t(), self.f());
        if a == f || b == f || a == !b {
            return f;
        }
        if a == t || a == b {
            return b;
        }
        if b == t {
            return a;
        }
        let (x, y) = if a < b { (a, b) } else { (b, a) };
        if let Some(&g) = self.strash.get(&(0, x.index(), y.index(), 0)) {
            return g;
        }
        let g = self.cnf.new_var();
        self.cnf.add(vec![!g, x]);
        self.cnf.add(vec![!g, y]);
        self.cnf.add(vec![g, !x, !y]);
        self.strash.insert((0, x.index(), y.index(), 0), g);
        g
    }

    pub fn or(&mut self, a: Lit, b: Lit) -> Lit {
        !self.and(!a, !b)
    }

    pub fn xor(&mut self, a: Lit, b: Lit) -> Lit {
        let (t, f) = (self.t(), self.f());
        if a == f {
            return b;
        }
        if b == f {
            return a;
        }
        if a == t {
            return !b;
        }
        if b == t {
            return !a;
        }
        if a == b {
            return f;
        }
        if a == !b {
            return t;
        }
        // Normalize polarity: xor(!a, b) = !xor(a, b).
        let flip = a.is_neg() ^ b.is_neg();
        let (pa, pb) = (Lit::pos(a.var()), Lit::pos(b.var()));
        let (x, y) = if pa < pb { (pa, pb) } else { (pb, pa) };
        let g = match self.strash.get(&(1, x.index(), y.index(), 0)) {
            Some(&g) => g,
            None => {
                let g = self.cnf.new_var();
                self.cnf.add(vec![!g, x, y]);
                self.cnf.add(vec![!g, !x, !y]);
                self.cnf.add(vec![g, !x, y]);
                self.cnf.add(vec![g, x, !y]);
                self.strash.insert((1, x.index(), y.index(), 0), g);
                g
            }
        };
        if flip {
            !g
        } else {
            g
        }
    }

    /// `c ? a : b`
    pub fn mux(&mut self, c: Lit, a: Lit, b: Lit) -> Lit {
        let (t, f) = (self.t(), self.f());
        if c == t || a == b {
            return a;
        }
        if c == f {
            return b;
        }
        if c.is_neg() {
            return self.mux(!c, b, a);
        }
        if a == !b {
            return !self.xor(c, a);
        }
        if a == t || a == c {
            return self.or(c, b);
        }
        if a == f || a == !c {
            return self.and(!c, b);
        }
        if b == t || b == !c {
            return self.or(!c, a);
        }
        if b == f || b == c {
            return self.and(c, a);
        }
        let key = (2, c.index(), a.index(), b.index());
        if let Some(&g) = self.strash.get(&key) {
            return g;
        }
        let g = self.cnf.new_var();
        self.cnf.add(vec![!c, !a, g]);
        self.cnf.add(vec![!c, a, !g]);
        self.cnf.add(vec![c, !b, g]);
        self.cnf.add(vec![c, b, !g]);
        self.cnf.add(vec![!a, !b, g]);
        self.cnf.add(vec![a, b, !g]);
        self.strash.insert(key, g);
        g
    }

    pub fn assume(&mut self, l: Lit) {
        if l != self.t() {
            self.cnf.add(vec![l]);
        }
    }

    pub fn assume_equal(&mut self, a: Lit, b: Lit) {
        if a == b {
            return;
        }
        self.cnf.add(vec![!a, b]);
        self.cnf.add(vec![a, !b]);
    }

    /// Literal of a single-bit compiled expression.
    pub fn eval(&mut self, e: &CExpr, vals: &[Lit]) -> Lit {
        match e {
            CExpr::Sig(id) => vals[*id],
            CExpr::Const(v) => {
                if v & 1 == 1 {
                    self.t()
                } else {
                    self.f()
                }
            }
            CExpr::Not(a, _) => !self.eval(a, vals),
            CExpr::Bin(op, a, b, _, _) => {
                let x = self.eval(a, vals);
                let y = self.eval(b, vals);
                match op {
                    BinOp::And | BinOp::Mul => self.and(x, y),
                    BinOp::Or => self.or(x, y),
                    BinOp::Xor | BinOp::Add | BinOp::Sub => self.xor(x, y),
                    BinOp::Eq => !self.xor(x, y),
                    BinOp::Ult => self.and(!x, y),
                    BinOp::Concat => unreachable!("concat cannot produce a single bit"),
                }
            }
            CExpr::Mux(c, a, b) => {
                let c = self.eval(c, vals);
                let a = self.eval(a, vals);
                let b = self.eval(b, vals);
                self.mux(c, a, b)
            }
            CExpr::Shl(a, n, _) | CExpr::Shr(a, n) => {
                if *n == 0 {
                    self.eval(a, vals)
                } else {
                    self.f()
                }
            }
            CExpr::Slice(a, _, _) => self.eval(a, vals),
        }
    }
}

pub(crate) const PHI_PREFIX: &str = "__phi.";
pub(crate) const INV_PREFIX: &str = "__inv.";

/// Bit-level product of a miter, ready to be unrolled.
pub struct Prepared {
    pub m: MiterModel,
    pub bits: BitNetlist,
    pub c: Compiled,
    /// Word-level compile of the design, for naming and ordering.
    pub base: Compiled,
    pub phi: Vec<String>,
    pub invariants: Vec<String>,
    pub cross: Vec<(String, String)>,
}

impl Prepared {
    pub fn new(m: &MiterModel, ledger: &PartitionLedger) -> Result<Self, EngineError> {
        let mut extra = Vec::new();
        for c in &ledger.phi {
            extra.push(Wire {
                name: format!("{PHI_PREFIX}{}", c.name),
                width: 1,
                expr: c.expr.clone(),
            });
        }
        for c in &ledger.invariants {
            extra.push(Wire {
                name: format!("{INV_PREFIX}{}", c.name),
                width: 1,
                expr: c.expr.clone(),
            });
        }
        let product = m.product(&extra).map_err(EngineError::Miter)?;
        let bits = bitblast(&product);
        let c = Compiled::new(&bits.netlist);
        let cross = m
            .cross_equalities
            .iter()
            .map(|e| (m.product_name(e.a.instance, &e.a.signal), m.product_name(e.b.instance, &e.b.signal)))
            .collect();
        Ok(Prepared {
            m: m.clone(),
            base: Compiled::new(&m.base),
            phi: ledger.phi.iter().map(|c| c.name.clone()).collect(),
            invariants: ledger.invariants.iter().map(|c| c.name.clone()).collect(),
            cross,
            bits,
            c,
        })
    }

    /// Bit signal ids of product word `name`, LSB first.
    pub fn product_bits(&self, name: &str) -> Vec<SigId> {
        self.bits.bits[name].iter().map(|b| self.c.index[b]).collect()
    }

    /// Bit signal ids of design signal `sig` in instance `inst`.
    pub fn word_bits(&self, inst: Instance, sig: &str) -> Vec<SigId> {
        self.product_bits(&self.m.product_name(inst, sig))
    }
}

#[derive(Debug, Clone)]
pub enum Start {
    /// Free initial state; the listed registers are equal across instances.
    Aliased(Vec<String>),
    /// Init values, uninitialized registers free per instance.
    Reset,
}

#[derive(Debug, Clone)]
pub enum Target {
    /// Design signal compared across instances.
    Pair(String),
    /// Invariant that must hold in both instances.
    Invariant(String),
}

#[derive(Debug, Clone)]
pub struct Goal {
    pub loc: String,
    pub frame: usize,
    pub kind: DiffKind,
    pub severity: Severity,
    pub target: Target,
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub frames: usize,
    pub start: Start,
    pub assume_invariants: bool,
    pub goals: Vec<Goal>,
}

/// An unrolled and encoded obligation.
pub struct Encoded {
    pub aig: Aig,
    /// Literal of every bit signal at every frame.
    pub frames: Vec<Vec<Lit>>,
    /// Whether some goal can possibly fail; if not the instance is
    /// trivially unsatisfiable.
    pub has_goal: bool,
}

impl Encoded {
    /// Literal for bit `bit` of design signal `sig`, instance `inst`, frame `cycle`.
    pub fn lit(&self, p: &Prepared, sig: &str, inst: Instance, cycle: usize, bit: u32) -> Option<Lit> {
        let name = p.m.product_name(inst, sig);
        let ids = p.bits.bits.get(&name)?;
        let id = p.c.index[ids.get(bit as usize)?];
        self.frames.get(cycle).map(|f| f[id])
    }
}

pub fn encode_plan(p: &Prepared, plan: &Plan) -> Encoded {
    let mut aig = Aig::new();
    let c = &p.c;
    let n_sig = c.signals.len();
    let mut frames: Vec<Vec<Lit>> = Vec::with_capacity(plan.frames);

    // Frame 0 registers.
    let mut vals = vec![aig.f(); n_sig];
    let aliased: HashSet<&str> = match &plan.start {
        Start::Aliased(regs) => regs.iter().map(String::as_str).collect(),
        Start::Reset => HashSet::new(),
    };
    for r in &p.m.base.regs {
        let a = p.word_bits(Instance::A, &r.name);
        let b = p.word_bits(Instance::B, &r.name);
        for (i, (&ia, &ib)) in a.iter().zip(&b).enumerate() {
            match (&plan.start, r.init) {
                (Start::Reset, Init::Value(v)) => {
                    let l = if v >> i & 1 == 1 { aig.t() } else { aig.f() };
                    vals[ia] = l;
                    vals[ib] = l;
                }
                (Start::Aliased(_), _) if aliased.contains(r.name.as_str()) => {
                    let l = aig.fresh();
                    vals[ia] = l;
                    vals[ib] = l;
                }
                _ => {
                    vals[ia] = aig.fresh();
                    vals[ib] = aig.fresh();
                }
            }
        }
    }

    for f in 0..plan.frames {
        if f > 0 {
            let prev = &frames[f - 1];
            let next: Vec<Lit> = c.next.iter().map(|(_, e)| aig.eval(e, prev)).collect();
            for ((id, _), l) in c.next.iter().zip(next) {
                vals[*id] = l;
            }
        }
        for &id in &c.inputs {
            vals[id] = aig.fresh();
        }
        for (id, e) in &c.comb {
            vals[*id] = aig.eval(e, &vals);
        }
        frames.push(vals.clone());
    }

    // Assumptions.
    for (f, fv) in frames.iter().enumerate() {
        for inst in [Instance::A, Instance::B] {
            for name in &p.phi {
                let id = p.word_bits(inst, &format!("{PHI_PREFIX}{name}"))[0];
                aig.assume(fv[id]);
            }
            if f == 0 && plan.assume_invariants {
                for name in &p.invariants {
                    let id = p.word_bits(inst, &format!("{INV_PREFIX}{name}"))[0];
                    aig.assume(fv[id]);
                }
            }
        }
        for (a, b) in &p.cross {
            for (ia, ib) in p.product_bits(a).into_iter().zip(p.product_bits(b)) {
                aig.assume_equal(fv[ia], fv[ib]);
            }
        }
    }

    // Goal: some obligation fails.
    let mut clause = Vec::new();
    for g in &plan.goals {
        let fv = &frames[g.frame];
        match &g.target {
            Target::Pair(sig) => {
                for (ia, ib) in p.word_bits(Instance::A, sig).into_iter().zip(p.word_bits(Instance::B, sig)) {
                    let d = aig.xor(fv[ia], fv[ib]);
                    if d != aig.f() {
                        clause.push(d);
                    }
                }
            }
            Target::Invariant(name) => {
                for inst in [Instance::A, Instance::B] {
                    let l = !fv[p.word_bits(inst, &format!("{INV_PREFIX}{name}"))[0]];
                    if l != aig.f() {
                        clause.push(l);
                    }
                }
            }
        }
    }
    clause.sort_unstable();
    clause.dedup();
    let has_goal = !clause.is_empty();
    if has_goal {
        aig.cnf.add(clause);
    }
    Encoded { aig, frames, has_goal }
}
