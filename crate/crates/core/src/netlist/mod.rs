//! Word-level netlist IR for synchronous Mealy machines.
//!
//! A [`Netlist`] is a set of ports, registers and combinational wires. Every
//! register has exactly one next-state function and every output exactly one
//! drive function. Black boxes ([`BoxDecl`]) cut a submodule out of the design:
//! their outputs are free signals and their inputs are observation points.

mod aiger;
mod bitblast;
mod compile;
mod parse;
mod print;
mod sim;
mod validate;

pub use aiger::{apply_role_sidecar, import_aiger, AigerError};
pub use bitblast::{bit_name, bitblast, BitNetlist};
pub use compile::{CExpr, Compiled, SigId, SigKind, Signal};
pub use parse::{parse_expr, parse_netlist, ParseError};
pub use print::pretty_print;
pub use sim::{simulate, InitPolicy, SimError, Stimulus, Trace};
pub use validate::{validate, Diagnostic};
pub(crate) use parse::is_ident;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Largest supported signal width. Values are carried in a `u64`.
pub const MAX_WIDTH: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Control,
    Data,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Control => "control",
            Role::Data => "data",
        })
    }
}

impl std::str::FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "control" => Ok(Role::Control),
            "data" => Ok(Role::Data),
            other => Err(format!("expected `control` or `data`, found `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub width: u32,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    Value(u64),
    Uninitialized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub width: u32,
    pub init: Init,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wire {
    pub name: String,
    pub width: u32,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxInput {
    pub name: String,
    pub expr: Expr,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxOutput {
    pub name: String,
    pub width: u32,
    pub role: Role,
}

/// A black-boxed submodule. Pin names are local; the global signal name of a
/// pin is `<box>.<pin>` (see [`BoxDecl::pin`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxDecl {
    pub name: String,
    pub inputs: Vec<BoxInput>,
    pub outputs: Vec<BoxOutput>,
}

impl BoxDecl {
    pub fn pin(&self, pin: &str) -> String {
        format!("{}.{}", self.name, pin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    And,
    Or,
    Xor,
    Add,
    Sub,
    Mul,
    Eq,
    Ult,
    Concat,
}

impl BinOp {
    pub fn keyword(self) -> &'static str {
        match self {
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Eq => "eq",
            BinOp::Ult => "ult",
            BinOp::Concat => "concat",
        }
    }

    fn from_keyword(kw: &str) -> Option<Self> {
        Some(match kw {
            "and" => BinOp::And,
            "or" => BinOp::Or,
            "xor" => BinOp::Xor,
            "add" => BinOp::Add,
            "sub" => BinOp::Sub,
            "mul" => BinOp::Mul,
            "eq" => BinOp::Eq,
            "ult" => BinOp::Ult,
            "concat" => BinOp::Concat,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Ref(String),
    Const { width: u32, value: u64 },
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// `cond ? then : else`
    Mux(Box<Expr>, Box<Expr>, Box<Expr>),
    Shl(Box<Expr>, u32),
    Shr(Box<Expr>, u32),
    Slice(Box<Expr>, u32, u32),
}

impl Expr {
    pub fn sig(name: impl Into<String>) -> Self {
        Expr::Ref(name.into())
    }

    pub fn konst(width: u32, value: u64) -> Self {
        Expr::Const { width, value }
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Self {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn not(a: Expr) -> Self {
        Expr::Not(Box::new(a))
    }

    pub fn mux(c: Expr, a: Expr, b: Expr) -> Self {
        Expr::Mux(Box::new(c), Box::new(a), Box::new(b))
    }

    /// Calls `f` on every signal name referenced by this expression.
    pub fn for_each_ref<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Ref(n) => f(n),
            Expr::Const { .. } => {}
            Expr::Not(a) | Expr::Shl(a, _) | Expr::Shr(a, _) | Expr::Slice(a, _, _) => {
                a.for_each_ref(f)
            }
            Expr::Bin(_, a, b) => {
                a.for_each_ref(f);
                b.for_each_ref(f);
            }
            Expr::Mux(c, a, b) => {
                c.for_each_ref(f);
                a.for_each_ref(f);
                b.for_each_ref(f);
            }
        }
    }

    pub fn refs(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.for_each_ref(&mut |n| out.push(n));
        out
    }

    /// Infers the width of this expression given the widths of the signals it
    /// references. The error names the offending node.
    pub fn width(&self, lookup: &impl Fn(&str) -> Option<u32>) -> Result<u32, WidthError> {
        let w = match self {
            Expr::Ref(n) => lookup(n).ok_or_else(|| WidthError::Undeclared(n.clone()))?,
            Expr::Const { width, value } => {
                if *width == 0 || *width > MAX_WIDTH {
                    return Err(WidthError::mismatch(self, "constant width must be 1..=64"));
                }
                if *width < 64 && *value >> width != 0 {
                    return Err(WidthError::mismatch(self, "constant does not fit its width"));
                }
                *width
            }
            Expr::Not(a) => a.width(lookup)?,
            Expr::Bin(op, a, b) => {
                let (wa, wb) = (a.width(lookup)?, b.width(lookup)?);
                match op {
                    BinOp::Concat => {
                        if wa + wb > MAX_WIDTH {
                            return Err(WidthError::mismatch(self, "concatenation wider than 64 bits"));
                        }
                        wa + wb
                    }
                    _ if wa != wb => {
                        return Err(WidthError::mismatch(
                            self,
                            &format!("operand widths differ ({wa} vs {wb})"),
                        ))
                    }
                    BinOp::Eq | BinOp::Ult => 1,
                    _ => wa,
                }
            }
            Expr::Mux(c, a, b) => {
                let wc = c.width(lookup)?;
                let (wa, wb) = (a.width(lookup)?, b.width(lookup)?);
                if wc != 1 {
                    return Err(WidthError::mismatch(self, "mux condition must be 1 bit wide"));
                }
                if wa != wb {
                    return Err(WidthError::mismatch(
                        self,
                        &format!("mux branch widths differ ({wa} vs {wb})"),
                    ));
                }
                wa
            }
            Expr::Shl(a, _) | Expr::Shr(a, _) => a.width(lookup)?,
            Expr::Slice(a, hi, lo) => {
                let wa = a.width(lookup)?;
                if hi < lo || *hi >= wa {
                    return Err(WidthError::mismatch(
                        self,
                        &format!("slice [{hi}:{lo}] out of range for width {wa}"),
                    ));
                }
                hi - lo + 1
            }
        };
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WidthError {
    Undeclared(String),
    Mismatch { node: String, reason: String },
}

impl WidthError {
    pub fn describe(&self) -> String {
        match self {
            WidthError::Undeclared(s) => format!("undeclared signal `{s}`"),
            WidthError::Mismatch { node, reason } => format!("{reason} in `{node}`"),
        }
    }

    fn mismatch(node: &Expr, reason: &str) -> Self {
        WidthError::Mismatch {
            node: node.to_string(),
            reason: reason.to_string(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Ref(n) => f.write_str(n),
            Expr::Const { width, value } => write!(f, "(const {width} {value})"),
            Expr::Not(a) => write!(f, "(not {a})"),
            Expr::Bin(op, a, b) => write!(f, "({} {a} {b})", op.keyword()),
            Expr::Mux(c, a, b) => write!(f, "(mux {c} {a} {b})"),
            Expr::Shl(a, n) => write!(f, "(shl {a} {n})"),
            Expr::Shr(a, n) => write!(f, "(shr {a} {n})"),
            Expr::Slice(a, hi, lo) => write!(f, "(slice {a} {hi} {lo})"),
        }
    }
}

/// Word-level synchronous Mealy machine.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Netlist {
    pub name: String,
    pub inputs: Vec<Port>,
    pub outputs: Vec<Port>,
    pub regs: Vec<Register>,
    pub wires: Vec<Wire>,
    pub next_fns: IndexMap<String, Expr>,
    pub drive_fns: IndexMap<String, Expr>,
    pub boxes: Vec<BoxDecl>,
    pub observations: Vec<String>,
}

impl Netlist {
    pub fn input(&self, name: &str) -> Option<&Port> {
        self.inputs.iter().find(|p| p.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&Port> {
        self.outputs.iter().find(|p| p.name == name)
    }

    pub fn reg(&self, name: &str) -> Option<&Register> {
        self.regs.iter().find(|r| r.name == name)
    }

    pub fn reg_names(&self) -> impl Iterator<Item = &str> {
        self.regs.iter().map(|r| r.name.as_str())
    }

    pub fn find_box(&self, name: &str) -> Option<&BoxDecl> {
        self.boxes.iter().find(|b| b.name == name)
    }

    /// Width of any declared signal, including box pins.
    pub fn width_of(&self, name: &str) -> Option<u32> {
        if let Some(p) = self.input(name).or_else(|| self.output(name)) {
            return Some(p.width);
        }
        if let Some(r) = self.reg(name) {
            return Some(r.width);
        }
        if let Some(w) = self.wires.iter().find(|w| w.name == name) {
            return Some(w.width);
        }
        for b in &self.boxes {
            for o in &b.outputs {
                if b.pin(&o.name) == name {
                    return Some(o.width);
                }
            }
            for i in &b.inputs {
                if b.pin(&i.name) == name {
                    return i.expr.width(&|n| self.width_of(n)).ok();
                }
            }
        }
        None
    }

    /// Inputs with the given role, in declaration order.
    pub fn inputs_with(&self, role: Role) -> impl Iterator<Item = &Port> {
        self.inputs.iter().filter(move |p| p.role == role)
    }

    pub fn outputs_with(&self, role: Role) -> impl Iterator<Item = &Port> {
        self.outputs.iter().filter(move |p| p.role == role)
    }

    /// Sha-256 of the canonical text form, hex encoded.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(pretty_print(self).as_bytes()))
    }
}

pub(crate) fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}
