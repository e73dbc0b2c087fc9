//! Two-instance composition of a design (the 2-safety miter) and the
//! model-level transforms applied to it.

mod ledger;
mod sidecar;

pub use ledger::{
    BoxMode, ClassEntry, CrossEq, HistoryEntry, Instance, LedgerEvent, NamedExpr, PartitionLedger, Provenance,
    SigRef,
};
pub use sidecar::{parse_sidecar, Rule, RuleAction, RuleScope, Sidecar, SidecarError};

use crate::netlist::{validate, Compiled, Expr, Netlist, Port, Register, Role, Wire};
use indexmap::IndexMap;
use std::collections::HashSet;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MiterError {
    #[error("unknown box `{0}`")]
    UnknownBox(String),
    #[error("unknown signal `{0}`")]
    UnknownSignal(String),
    #[error("width mismatch: `{a}` has {wa} bits, `{b}` has {wb}")]
    WidthMismatch { a: String, wa: u32, b: String, wb: u32 },
    #[error("degenerate cross-equality `{0}`: the two sides must be in different instances")]
    Degenerate(String),
    #[error("`{0}` is already defined")]
    Duplicate(String),
    #[error("`{0}` is not a valid name")]
    BadName(String),
    #[error("bad constraint: {0}")]
    BadConstraint(String),
    #[error("bad invariant: {0}")]
    BadInvariant(String),
    #[error("miter of `{design}` is not a valid netlist: {msg}")]
    Product { design: String, msg: String },
}

/// The 2-safety model: two copies of `base` with shared control inputs and
/// independent data inputs.
#[derive(Debug, Clone)]
pub struct MiterModel {
    pub base: Arc<Netlist>,
    /// X_C, driven identically into both instances.
    pub shared_control_inputs: Vec<String>,
    /// X_D, one free copy per instance.
    pub free_data_inputs: Vec<String>,
    pub box_modes: IndexMap<String, BoxMode>,
    pub cross_equalities: Vec<CrossEq>,
    /// Z_C.
    pub candidate_states: Vec<String>,
    /// Data-role box inputs accepted as data carriers.
    pub data_box_inputs: Vec<String>,
}

/// Builds the miter of `n` under the partition and exclusions of `ledger`.
pub fn build_miter(n: Arc<Netlist>, ledger: &PartitionLedger) -> MiterModel {
    let box_modes = n
        .boxes
        .iter()
        .map(|b| (b.name.clone(), ledger.box_modes.get(&b.name).copied().unwrap_or(BoxMode::Opaque)))
        .collect();
    MiterModel {
        shared_control_inputs: n.inputs_with(Role::Control).map(|p| p.name.clone()).collect(),
        free_data_inputs: n.inputs_with(Role::Data).map(|p| p.name.clone()).collect(),
        box_modes,
        cross_equalities: ledger.cross_equalities.clone(),
        candidate_states: ledger.z_c(),
        data_box_inputs: ledger.data_box_inputs(),
        base: n,
    }
}

/// Returns `m` with box `name` switched to `mode`.
pub fn apply_blackbox(m: &MiterModel, name: &str, mode: BoxMode) -> Result<MiterModel, MiterError> {
    if m.base.find_box(name).is_none() {
        return Err(MiterError::UnknownBox(name.to_string()));
    }
    let mut out = m.clone();
    out.box_modes.insert(name.to_string(), mode);
    Ok(out)
}

/// Registers of Z_C in the one-step sequential fan-out of X_D, Z_D and the
/// free box outputs.
pub fn coi_candidates(m: &MiterModel, ledger: &PartitionLedger) -> Vec<String> {
    let c = Compiled::new(&m.base);
    let mut seeds: HashSet<usize> = HashSet::new();
    for name in m.free_data_inputs.iter().chain(&ledger.z_d()).chain(&m.free_box_outputs()) {
        if let Some(id) = c.id(name) {
            seeds.insert(id);
        }
    }
    let wanted: HashSet<&str> = m.candidate_states.iter().map(String::as_str).collect();
    let mut out = Vec::new();
    for (reg, e) in &c.next {
        let name = c.name(*reg);
        if !wanted.contains(name) {
            continue;
        }
        let mut src = Vec::new();
        c.sources_of(e, &mut src);
        if src.iter().any(|s| seeds.contains(s)) {
            out.push(name.to_string());
        }
    }
    out
}

impl MiterModel {
    fn box_has_data_entry(&self, bx: &str) -> bool {
        self.data_box_inputs.iter().any(|p| p.split_once('.').map(|(b, _)| b) == Some(bx))
    }

    /// Whether a box output pin is constrained equal across the instances.
    pub fn box_output_shared(&self, bx: &str, role: Role) -> bool {
        match self.box_modes.get(bx).copied().unwrap_or(BoxMode::Opaque) {
            BoxMode::Opaque if !self.box_has_data_entry(bx) => true,
            _ => role == Role::Control,
        }
    }

    /// Box output pins left free per instance.
    pub fn free_box_outputs(&self) -> Vec<String> {
        let mut out = Vec::new();
        for b in &self.base.boxes {
            for o in &b.outputs {
                if !self.box_output_shared(&b.name, o.role) {
                    out.push(b.pin(&o.name));
                }
            }
        }
        out
    }

    /// Box input pins that must be equal across the instances, with their
    /// role. Control pins are violations when they differ, data pins are
    /// classifiable.
    pub fn box_obligations(&self) -> Vec<(String, Role)> {
        let mut out = Vec::new();
        for b in &self.base.boxes {
            let mode = self.box_modes.get(&b.name).copied().unwrap_or(BoxMode::Opaque);
            for i in &b.inputs {
                let pin = b.pin(&i.name);
                let obligated = match (mode, i.role) {
                    (_, Role::Control) => true,
                    (BoxMode::Opaque, Role::Data) => !self.data_box_inputs.contains(&pin),
                    (BoxMode::VerifiedDo, Role::Data) => false,
                };
                if obligated {
                    out.push((pin, i.role));
                }
            }
        }
        out
    }

    fn shared_names(&self) -> HashSet<String> {
        let mut s: HashSet<String> = self.shared_control_inputs.iter().cloned().collect();
        for b in &self.base.boxes {
            for o in &b.outputs {
                if self.box_output_shared(&b.name, o.role) {
                    s.insert(b.pin(&o.name));
                }
            }
        }
        s
    }

    /// Name of `sig` of instance `inst` inside [`product`](Self::product).
    pub fn product_name(&self, inst: Instance, sig: &str) -> String {
        if self.shared_names().contains(sig) {
            sig.to_string()
        } else {
            format!("{}.{}", inst.tag(), sig)
        }
    }

    /// The composed miter as a single flat netlist. Instance signals are
    /// prefixed `A.` and `B.`; shared inputs and equal box outputs keep their
    /// name. Box outputs become inputs and box inputs become outputs.
    /// `extra` wires are added to both instances.
    pub fn product(&self, extra: &[Wire]) -> Result<Netlist, MiterError> {
        let n = &*self.base;
        let shared = self.shared_names();
        let name = |inst: Instance, s: &str| -> String {
            if shared.contains(s) {
                s.to_string()
            } else {
                format!("{}.{}", inst.tag(), s)
            }
        };
        let mut p = Netlist {
            name: format!("{}_miter", n.name),
            ..Default::default()
        };
        for i in &n.inputs {
            if i.role == Role::Control {
                p.inputs.push(i.clone());
            }
        }
        for b in &n.boxes {
            for o in &b.outputs {
                let pin = b.pin(&o.name);
                if shared.contains(&pin) {
                    p.inputs.push(Port { name: pin, width: o.width, role: o.role });
                }
            }
        }
        for inst in [Instance::A, Instance::B] {
            let rn = |e: &Expr| rename(e, &|s| name(inst, s));
            for i in n.inputs.iter().filter(|i| i.role == Role::Data) {
                p.inputs.push(Port { name: name(inst, &i.name), ..i.clone() });
            }
            for b in &n.boxes {
                for o in &b.outputs {
                    let pin = b.pin(&o.name);
                    if !shared.contains(&pin) {
                        p.inputs.push(Port { name: name(inst, &pin), width: o.width, role: o.role });
                    }
                }
            }
            for r in &n.regs {
                p.regs.push(Register { name: name(inst, &r.name), ..r.clone() });
                p.next_fns.insert(name(inst, &r.name), rn(&n.next_fns[&r.name]));
            }
            for w in n.wires.iter().chain(extra) {
                p.wires.push(Wire {
                    name: name(inst, &w.name),
                    width: w.width,
                    expr: rn(&w.expr),
                });
            }
            for o in &n.outputs {
                p.outputs.push(Port { name: name(inst, &o.name), ..o.clone() });
                p.drive_fns.insert(name(inst, &o.name), rn(&n.drive_fns[&o.name]));
            }
            for b in &n.boxes {
                for i in &b.inputs {
                    let pin = b.pin(&i.name);
                    let width = n.width_of(&pin).unwrap_or(1);
                    p.outputs.push(Port { name: name(inst, &pin), width, role: i.role });
                    p.drive_fns.insert(name(inst, &pin), rn(&i.expr));
                }
            }
            for o in &n.observations {
                p.observations.push(name(inst, o));
            }
        }
        if let Some(d) = validate(&p).into_iter().next() {
            return Err(MiterError::Product {
                design: n.name.clone(),
                msg: d.message,
            });
        }
        Ok(p)
    }
}

/// Rewrites every signal reference of `e` through `f`.
pub(crate) fn rename(e: &Expr, f: &impl Fn(&str) -> String) -> Expr {
    match e {
        Expr::Ref(s) => Expr::Ref(f(s)),
        Expr::Const { .. } => e.clone(),
        Expr::Not(a) => Expr::not(rename(a, f)),
        Expr::Bin(op, a, b) => Expr::bin(*op, rename(a, f), rename(b, f)),
        Expr::Mux(c, a, b) => Expr::mux(rename(c, f), rename(a, f), rename(b, f)),
        Expr::Shl(a, k) => Expr::Shl(Box::new(rename(a, f)), *k),
        Expr::Shr(a, k) => Expr::Shr(Box::new(rename(a, f)), *k),
        Expr::Slice(a, hi, lo) => Expr::Slice(Box::new(rename(a, f)), *hi, *lo),
    }
}
