//! Index-resolved form of a validated netlist, shared by the simulator and
//! the SAT encoder.

use super::{mask, BinOp, Expr, Netlist, Role};
use std::collections::HashMap;

pub type SigId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigKind {
    Input(Role),
    Reg,
    Wire,
    Output(Role),
    BoxOut { bx: usize, role: Role },
    BoxIn { bx: usize, role: Role },
}

#[derive(Debug, Clone)]
pub struct Signal {
    pub name: String,
    pub width: u32,
    pub kind: SigKind,
}

#[derive(Debug, Clone)]
pub enum CExpr {
    Sig(SigId),
    Const(u64),
    Not(Box<CExpr>, u32),
    /// Operator, operands, operand widths.
    Bin(BinOp, Box<CExpr>, Box<CExpr>, u32, u32),
    Mux(Box<CExpr>, Box<CExpr>, Box<CExpr>),
    Shl(Box<CExpr>, u32, u32),
    Shr(Box<CExpr>, u32),
    Slice(Box<CExpr>, u32, u32),
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub signals: Vec<Signal>,
    pub index: HashMap<String, SigId>,
    /// Combinational signals in evaluation order.
    pub comb: Vec<(SigId, CExpr)>,
    /// Next-state function per register, in register order.
    pub next: Vec<(SigId, CExpr)>,
    pub inputs: Vec<SigId>,
    pub regs: Vec<SigId>,
    pub outputs: Vec<SigId>,
    pub box_outs: Vec<SigId>,
    pub box_ins: Vec<SigId>,
    /// Position of each signal in a stable topological order (sources first).
    pub topo_rank: Vec<usize>,
}

impl Compiled {
    /// Compiles a netlist that has passed [`validate`](super::validate).
    pub fn new(n: &Netlist) -> Self {
        let mut c = Compiled {
            signals: Vec::new(),
            index: HashMap::new(),
            comb: Vec::new(),
            next: Vec::new(),
            inputs: Vec::new(),
            regs: Vec::new(),
            outputs: Vec::new(),
            box_outs: Vec::new(),
            box_ins: Vec::new(),
            topo_rank: Vec::new(),
        };
        let add = |c: &mut Compiled, name: String, width: u32, kind: SigKind| -> SigId {
            let id = c.signals.len();
            c.index.insert(name.clone(), id);
            c.signals.push(Signal { name, width, kind });
            id
        };
        for p in &n.inputs {
            let id = add(&mut c, p.name.clone(), p.width, SigKind::Input(p.role));
            c.inputs.push(id);
        }
        for r in &n.regs {
            let id = add(&mut c, r.name.clone(), r.width, SigKind::Reg);
            c.regs.push(id);
        }
        for (bx, b) in n.boxes.iter().enumerate() {
            for o in &b.outputs {
                let id = add(&mut c, b.pin(&o.name), o.width, SigKind::BoxOut { bx, role: o.role });
                c.box_outs.push(id);
            }
        }
        let mut pending: Vec<(SigId, &Expr)> = Vec::new();
        for w in &n.wires {
            let id = add(&mut c, w.name.clone(), w.width, SigKind::Wire);
            pending.push((id, &w.expr));
        }
        for p in &n.outputs {
            let id = add(&mut c, p.name.clone(), p.width, SigKind::Output(p.role));
            c.outputs.push(id);
            pending.push((id, &n.drive_fns[&p.name]));
        }
        for (bx, b) in n.boxes.iter().enumerate() {
            for i in &b.inputs {
                let w = i.expr.width(&|s| n.width_of(s)).expect("validated netlist");
                let id = add(&mut c, b.pin(&i.name), w, SigKind::BoxIn { bx, role: i.role });
                c.box_ins.push(id);
                pending.push((id, &i.expr));
            }
        }

        // Kahn-style ordering over combinational dependencies, keeping
        // declaration order among ready nodes.
        let is_comb = |c: &Compiled, id: SigId| matches!(c.signals[id].kind, SigKind::Wire | SigKind::Output(_) | SigKind::BoxIn { .. });
        let mut done = vec![false; c.signals.len()];
        for (id, s) in c.signals.iter().enumerate() {
            if !matches!(s.kind, SigKind::Wire | SigKind::Output(_) | SigKind::BoxIn { .. }) {
                done[id] = true;
            }
        }
        let mut rank = vec![usize::MAX; c.signals.len()];
        let mut next_rank = 0;
        for (id, d) in done.iter().enumerate() {
            if *d {
                rank[id] = next_rank;
                next_rank += 1;
            }
        }
        let mut remaining = pending;
        while !remaining.is_empty() {
            let before = remaining.len();
            let mut rest = Vec::new();
            for (id, e) in remaining {
                let ready = e.refs().iter().all(|r| {
                    let rid = c.index[*r];
                    !is_comb(&c, rid) || done[rid]
                });
                if ready {
                    let ce = c.compile_expr(e);
                    c.comb.push((id, ce));
                    done[id] = true;
                    rank[id] = next_rank;
                    next_rank += 1;
                } else {
                    rest.push((id, e));
                }
            }
            assert!(rest.len() < before, "combinational cycle in validated netlist");
            remaining = rest;
        }
        c.topo_rank = rank;
        for r in &n.regs {
            let id = c.index[&r.name];
            let e = c.compile_expr(&n.next_fns[&r.name]);
            c.next.push((id, e));
        }
        c
    }

    pub fn id(&self, name: &str) -> Option<SigId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: SigId) -> &str {
        &self.signals[id].name
    }

    pub fn width(&self, id: SigId) -> u32 {
        self.signals[id].width
    }

    fn expr_width(&self, e: &Expr) -> u32 {
        e.width(&|s| self.id(s).map(|i| self.signals[i].width)).expect("validated expression")
    }

    /// Resolves signal names; the expression must be well-typed against this
    /// netlist.
    pub fn compile_expr(&self, e: &Expr) -> CExpr {
        match e {
            Expr::Ref(n) => CExpr::Sig(self.index[n]),
            Expr::Const { value, .. } => CExpr::Const(*value),
            Expr::Not(a) => CExpr::Not(Box::new(self.compile_expr(a)), self.expr_width(a)),
            Expr::Bin(op, a, b) => CExpr::Bin(
                *op,
                Box::new(self.compile_expr(a)),
                Box::new(self.compile_expr(b)),
                self.expr_width(a),
                self.expr_width(b),
            ),
            Expr::Mux(c, a, b) => CExpr::Mux(
                Box::new(self.compile_expr(c)),
                Box::new(self.compile_expr(a)),
                Box::new(self.compile_expr(b)),
            ),
            Expr::Shl(a, n) => CExpr::Shl(Box::new(self.compile_expr(a)), *n, self.expr_width(a)),
            Expr::Shr(a, n) => CExpr::Shr(Box::new(self.compile_expr(a)), *n),
            Expr::Slice(a, hi, lo) => CExpr::Slice(Box::new(self.compile_expr(a)), *hi, *lo),
        }
    }

    /// Evaluates `e` given the current value of every signal.
    pub fn eval(e: &CExpr, vals: &[u64]) -> u64 {
        match e {
            CExpr::Sig(id) => vals[*id],
            CExpr::Const(v) => *v,
            CExpr::Not(a, w) => !Self::eval(a, vals) & mask(*w),
            CExpr::Bin(op, a, b, wa, wb) => {
                let x = Self::eval(a, vals);
                let y = Self::eval(b, vals);
                let m = mask(*wa);
                match op {
                    BinOp::And => x & y,
                    BinOp::Or => x | y,
                    BinOp::Xor => x ^ y,
                    BinOp::Add => x.wrapping_add(y) & m,
                    BinOp::Sub => x.wrapping_sub(y) & m,
                    BinOp::Mul => x.wrapping_mul(y) & m,
                    BinOp::Eq => (x == y) as u64,
                    BinOp::Ult => (x < y) as u64,
                    BinOp::Concat => {
                        if *wb >= 64 {
                            y
                        } else {
                            (x << wb) | y
                        }
                    }
                }
            }
            CExpr::Mux(c, a, b) => {
                if Self::eval(c, vals) & 1 == 1 {
                    Self::eval(a, vals)
                } else {
                    Self::eval(b, vals)
                }
            }
            CExpr::Shl(a, n, w) => {
                if *n >= 64 {
                    0
                } else {
                    (Self::eval(a, vals) << n) & mask(*w)
                }
            }
            CExpr::Shr(a, n) => {
                if *n >= 64 {
                    0
                } else {
                    Self::eval(a, vals) >> n
                }
            }
            CExpr::Slice(a, hi, lo) => (Self::eval(a, vals) >> lo) & mask(hi - lo + 1),
        }
    }

    /// Evaluates all combinational signals in place. `vals` must already hold
    /// inputs, registers and box outputs.
    pub fn settle(&self, vals: &mut [u64]) {
        for (id, e) in &self.comb {
            vals[*id] = Self::eval(e, vals);
        }
    }

    /// Next register values from a settled valuation, in register order.
    pub fn step(&self, vals: &[u64]) -> Vec<u64> {
        self.next.iter().map(|(_, e)| Self::eval(e, vals)).collect()
    }

    /// Signals read by `e`, following combinational signals back to sources
    /// (inputs, registers, box outputs).
    pub fn sources_of(&self, e: &CExpr, out: &mut Vec<SigId>) {
        let mut seen = vec![false; self.signals.len()];
        let mut stack = Vec::new();
        collect(e, &mut stack);
        let comb_expr: HashMap<SigId, &CExpr> = self.comb.iter().map(|(i, e)| (*i, e)).collect();
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                continue;
            }
            match comb_expr.get(&id) {
                Some(ce) => collect(ce, &mut stack),
                None => out.push(id),
            }
        }
        out.sort_unstable();
    }
}

fn collect(e: &CExpr, out: &mut Vec<SigId>) {
    match e {
        CExpr::Sig(id) => out.push(*id),
        CExpr::Const(_) => {}
        CExpr::Not(a, _) | CExpr::Shl(a, _, _) | CExpr::Shr(a, _) | CExpr::Slice(a, _, _) => collect(a, out),
        CExpr::Bin(_, a, b, _, _) => {
            collect(a, out);
            collect(b, out);
        }
        CExpr::Mux(c, a, b) => {
            collect(c, out);
            collect(a, out);
            collect(b, out);
        }
    }
}
