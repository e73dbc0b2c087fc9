use super::MiterError;
use crate::netlist::{Compiled, Expr, Netlist, Role, SigKind};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Where a classification came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Default,
    UserDecision,
    ScriptedRule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub class: Role,
    pub provenance: Provenance,
    /// Logical ledger clock at the time of the change.
    pub stamp: u64,
}

/// A named width-1 expression: an input constraint or a state invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedExpr {
    pub name: String,
    #[serde(with = "expr_text")]
    pub expr: Expr,
}

impl fmt::Display for NamedExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.name, self.expr)
    }
}

pub(crate) mod expr_text {
    use crate::netlist::{parse_expr, Expr};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&e.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Expr, D::Error> {
        let text = String::deserialize(d)?;
        parse_expr(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Instance {
    A,
    B,
}

impl Instance {
    pub fn tag(self) -> &'static str {
        match self {
            Instance::A => "A",
            Instance::B => "B",
        }
    }
}

/// A signal of one miter instance, written `A:sig` or `B:sig`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SigRef {
    pub instance: Instance,
    pub signal: String,
}

impl fmt::Display for SigRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.instance.tag(), self.signal)
    }
}

impl SigRef {
    /// Parses `A:sig`, `B:sig` or a bare `sig` (taking `default`).
    pub fn parse(text: &str, default: Instance) -> SigRef {
        match text.split_once(':') {
            Some(("A", s)) => SigRef { instance: Instance::A, signal: s.to_string() },
            Some(("B", s)) => SigRef { instance: Instance::B, signal: s.to_string() },
            _ => SigRef { instance: default, signal: text.to_string() },
        }
    }
}

/// Assumed equality between two instance signals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossEq {
    pub name: String,
    pub a: SigRef,
    pub b: SigRef,
}

impl fmt::Display for CrossEq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} == {}", self.a, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxMode {
    Opaque,
    VerifiedDo,
}

impl fmt::Display for BoxMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoxMode::Opaque => "opaque",
            BoxMode::VerifiedDo => "verified-do",
        })
    }
}

impl std::str::FromStr for BoxMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "opaque" => Ok(BoxMode::Opaque),
            "verified-do" => Ok(BoxMode::VerifiedDo),
            o => Err(format!("expected `opaque` or `verified-do`, found `{o}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum LedgerEvent {
    Classify { location: String, class: Role, provenance: Provenance },
    Reset { cause: String },
    Constraint { name: String },
    Invariant { name: String },
    CrossEq { name: String },
    BoxMode { name: String, mode: BoxMode },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub stamp: u64,
    #[serde(flatten)]
    pub event: LedgerEvent,
}

/// The evolving control/data partition of state plus the exclusions
/// (constraints, invariants, cross-equalities) it is proven under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionLedger {
    pub state_class: IndexMap<String, ClassEntry>,
    /// Data-role inputs of black boxes. Control here means the pin is still
    /// an equality obligation in opaque mode.
    pub box_input_class: IndexMap<String, ClassEntry>,
    pub phi: Vec<NamedExpr>,
    pub invariants: Vec<NamedExpr>,
    pub cross_equalities: Vec<CrossEq>,
    pub box_modes: IndexMap<String, BoxMode>,
    pub history: Vec<HistoryEntry>,
    pub clock: u64,
}

impl PartitionLedger {
    /// Every register control, no exclusions, every box opaque.
    pub fn new(n: &Netlist) -> Self {
        let entry = ClassEntry {
            class: Role::Control,
            provenance: Provenance::Default,
            stamp: 0,
        };
        let mut box_input_class = IndexMap::new();
        for b in &n.boxes {
            for i in b.inputs.iter().filter(|i| i.role == Role::Data) {
                box_input_class.insert(b.pin(&i.name), entry.clone());
            }
        }
        PartitionLedger {
            state_class: n.regs.iter().map(|r| (r.name.clone(), entry.clone())).collect(),
            box_input_class,
            phi: Vec::new(),
            invariants: Vec::new(),
            cross_equalities: Vec::new(),
            box_modes: n.boxes.iter().map(|b| (b.name.clone(), BoxMode::Opaque)).collect(),
            history: Vec::new(),
            clock: 0,
        }
    }

    fn log(&mut self, event: LedgerEvent) -> u64 {
        self.clock += 1;
        self.history.push(HistoryEntry { stamp: self.clock, event });
        self.clock
    }

    /// Registers currently classified control, in declaration order.
    pub fn z_c(&self) -> Vec<String> {
        self.with_class(Role::Control)
    }

    pub fn z_d(&self) -> Vec<String> {
        self.with_class(Role::Data)
    }

    fn with_class(&self, role: Role) -> Vec<String> {
        self.state_class
            .iter()
            .filter(|(_, e)| e.class == role)
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn data_box_inputs(&self) -> Vec<String> {
        self.box_input_class
            .iter()
            .filter(|(_, e)| e.class == Role::Data)
            .map(|(k, _)| k.clone())
            .collect()
    }

    /// True if `location` is a register or a classifiable box input.
    pub fn is_classifiable(&self, location: &str) -> bool {
        self.state_class.contains_key(location) || self.box_input_class.contains_key(location)
    }

    pub fn classify(&mut self, location: &str, class: Role, provenance: Provenance) -> Result<(), MiterError> {
        if !self.is_classifiable(location) {
            return Err(MiterError::UnknownSignal(location.to_string()));
        }
        let stamp = self.log(LedgerEvent::Classify {
            location: location.to_string(),
            class,
            provenance,
        });
        let entry = ClassEntry { class, provenance, stamp };
        match self.state_class.get_mut(location) {
            Some(e) => *e = entry,
            None => self.box_input_class[location] = entry,
        }
        Ok(())
    }

    /// Puts every register (and box input) back into the control class.
    pub fn reset_control(&mut self, cause: &str) {
        let stamp = self.log(LedgerEvent::Reset { cause: cause.to_string() });
        for e in self.state_class.values_mut().chain(self.box_input_class.values_mut()) {
            *e = ClassEntry {
                class: Role::Control,
                provenance: Provenance::Default,
                stamp,
            };
        }
    }

    pub fn has_exclusion(&self, name: &str) -> bool {
        self.phi.iter().any(|c| c.name == name)
            || self.invariants.iter().any(|c| c.name == name)
            || self.cross_equalities.iter().any(|c| c.name == name)
    }

    fn check_fresh(&self, name: &str) -> Result<(), MiterError> {
        if self.has_exclusion(name) {
            return Err(MiterError::Duplicate(name.to_string()));
        }
        if !crate::netlist::is_ident(name) {
            return Err(MiterError::BadName(name.to_string()));
        }
        Ok(())
    }

    /// Adds an input constraint: a width-1 expression over inputs only.
    pub fn add_constraint(&mut self, n: &Netlist, c: NamedExpr) -> Result<(), MiterError> {
        self.check_fresh(&c.name)?;
        for r in c.expr.refs() {
            if n.input(r).is_none() {
                return Err(MiterError::BadConstraint(format!("`{}` may only reference inputs, found `{r}`", c.name)));
            }
        }
        check_bool(n, &c)?;
        self.log(LedgerEvent::Constraint { name: c.name.clone() });
        self.phi.push(c);
        Ok(())
    }

    /// Adds a state invariant: a width-1 expression over registers and wires
    /// that depend on registers only.
    pub fn add_invariant(&mut self, n: &Netlist, c: NamedExpr) -> Result<(), MiterError> {
        self.check_fresh(&c.name)?;
        check_bool(n, &c)?;
        let compiled = Compiled::new(n);
        let mut sources = Vec::new();
        compiled.sources_of(&compiled.compile_expr(&c.expr), &mut sources);
        for s in sources {
            if compiled.signals[s].kind != SigKind::Reg {
                return Err(MiterError::BadInvariant(format!(
                    "`{}` depends on `{}`, invariants may only depend on registers",
                    c.name,
                    compiled.name(s)
                )));
            }
        }
        self.log(LedgerEvent::Invariant { name: c.name.clone() });
        self.invariants.push(c);
        Ok(())
    }

    /// Records an assumed equality of two signals across the instances.
    pub fn add_cross_equality(&mut self, n: &Netlist, eq: CrossEq) -> Result<(), MiterError> {
        self.check_fresh(&eq.name)?;
        if eq.a == eq.b || eq.a.instance == eq.b.instance {
            return Err(MiterError::Degenerate(eq.to_string()));
        }
        let wa = n.width_of(&eq.a.signal).ok_or_else(|| MiterError::UnknownSignal(eq.a.signal.clone()))?;
        let wb = n.width_of(&eq.b.signal).ok_or_else(|| MiterError::UnknownSignal(eq.b.signal.clone()))?;
        if wa != wb {
            return Err(MiterError::WidthMismatch {
                a: eq.a.to_string(),
                wa,
                b: eq.b.to_string(),
                wb,
            });
        }
        self.log(LedgerEvent::CrossEq { name: eq.name.clone() });
        self.cross_equalities.push(eq);
        Ok(())
    }

    pub fn set_box_mode(&mut self, n: &Netlist, name: &str, mode: BoxMode) -> Result<(), MiterError> {
        if n.find_box(name).is_none() {
            return Err(MiterError::UnknownBox(name.to_string()));
        }
        self.log(LedgerEvent::BoxMode { name: name.to_string(), mode });
        self.box_modes.insert(name.to_string(), mode);
        Ok(())
    }

    /// True when no constraint, invariant or cross-equality is in force.
    pub fn unconstrained(&self) -> bool {
        self.phi.is_empty() && self.invariants.is_empty() && self.cross_equalities.is_empty()
    }
}

fn check_bool(n: &Netlist, c: &NamedExpr) -> Result<(), MiterError> {
    match c.expr.width(&|s| n.width_of(s)) {
        Ok(1) => Ok(()),
        Ok(w) => Err(MiterError::BadConstraint(format!("`{}` has width {w}, expected 1", c.name))),
        Err(e) => Err(MiterError::BadConstraint(format!("`{}`: {}", c.name, e.describe()))),
    }
}
