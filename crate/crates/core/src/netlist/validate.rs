use super::{Expr, Init, Netlist, WidthError, MAX_WIDTH};
use serde::Serialize;
use std::collections::{HashMap, HashSet};

/// One machine-readable validation finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// Stable kebab-case identifier, e.g. `missing-next`.
    pub code: &'static str,
    /// Declaration the finding is attached to (`r`, `next r`, `drive y`, ...).
    pub subject: Option<String>,
    pub message: String,
    /// For `combinational-cycle`: the signals on the cycle, in order.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cycle: Vec<String>,
}

impl Diagnostic {
    fn new(code: &'static str, subject: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            code,
            subject: Some(subject.into()),
            message: message.into(),
            cycle: Vec::new(),
        }
    }
}

/// Checks every structural invariant of a netlist. An empty result means the
/// netlist is valid.
pub fn validate(n: &Netlist) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut widths: HashMap<String, u32> = HashMap::new();

    fn declare(widths: &mut HashMap<String, u32>, name: String, width: u32, diags: &mut Vec<Diagnostic>) {
        if width == 0 || width > MAX_WIDTH {
            diags.push(Diagnostic::new("bad-width", name.clone(), format!("`{name}` has width {width}, expected 1..=64")));
        }
        if widths.insert(name.clone(), width).is_some() {
            diags.push(Diagnostic::new("duplicate-name", name.clone(), format!("`{name}` is declared more than once")));
        }
    }

    for p in n.inputs.iter().chain(&n.outputs) {
        declare(&mut widths, p.name.clone(), p.width, &mut diags);
    }
    for r in &n.regs {
        declare(&mut widths, r.name.clone(), r.width, &mut diags);
        if let Init::Value(v) = r.init {
            if r.width < 64 && v >> r.width != 0 {
                diags.push(Diagnostic::new("init-overflow", r.name.clone(), format!("init value {v} does not fit in {} bits", r.width)));
            }
        }
    }
    for w in &n.wires {
        declare(&mut widths, w.name.clone(), w.width, &mut diags);
    }
    let mut box_names = HashSet::new();
    for b in &n.boxes {
        if !box_names.insert(b.name.as_str()) {
            diags.push(Diagnostic::new("duplicate-name", b.name.clone(), format!("box `{}` is declared more than once", b.name)));
        }
        for o in &b.outputs {
            declare(&mut widths, b.pin(&o.name), o.width, &mut diags);
        }
    }
    // Box input widths are inferred from their expressions.
    let lookup_base = widths.clone();
    for b in &n.boxes {
        for i in &b.inputs {
            let w = i.expr.width(&|s| lookup_base.get(s).copied()).unwrap_or(1);
            declare(&mut widths, b.pin(&i.name), w, &mut diags);
        }
    }

    let lookup = |s: &str| widths.get(s).copied();
    let check = |subject: String, expr: &Expr, expected: Option<u32>, diags: &mut Vec<Diagnostic>| {
        match expr.width(&lookup) {
            Ok(w) => {
                if let Some(e) = expected {
                    if w != e {
                        diags.push(Diagnostic::new(
                            "width-mismatch",
                            subject.clone(),
                            format!("`{subject}` expects width {e} but `{expr}` has width {w}"),
                        ));
                    }
                }
            }
            Err(WidthError::Undeclared(s)) => {
                diags.push(Diagnostic::new("undeclared-signal", subject.clone(), format!("`{subject}` references undeclared signal `{s}`")));
            }
            Err(WidthError::Mismatch { node, reason }) => {
                diags.push(Diagnostic::new("width-mismatch", subject.clone(), format!("{reason} in `{node}`")));
            }
        }
    };

    for w in &n.wires {
        check(w.name.clone(), &w.expr, Some(w.width), &mut diags);
    }
    for r in &n.regs {
        match n.next_fns.get(&r.name) {
            Some(e) => check(format!("next {}", r.name), e, Some(r.width), &mut diags),
            None => diags.push(Diagnostic::new("missing-next", r.name.clone(), format!("register `{}` has no next-state function", r.name))),
        }
    }
    for name in n.next_fns.keys() {
        if n.reg(name).is_none() {
            diags.push(Diagnostic::new("unknown-target", format!("next {name}"), format!("`next {name}` does not name a register")));
        }
    }
    for o in &n.outputs {
        match n.drive_fns.get(&o.name) {
            Some(e) => check(format!("drive {}", o.name), e, Some(o.width), &mut diags),
            None => diags.push(Diagnostic::new("missing-drive", o.name.clone(), format!("output `{}` has no drive function", o.name))),
        }
    }
    for name in n.drive_fns.keys() {
        if n.output(name).is_none() {
            diags.push(Diagnostic::new("unknown-target", format!("drive {name}"), format!("`drive {name}` does not name an output")));
        }
    }
    for b in &n.boxes {
        for i in &b.inputs {
            check(b.pin(&i.name), &i.expr, None, &mut diags);
        }
    }
    for o in &n.observations {
        if !widths.contains_key(o) {
            diags.push(Diagnostic::new("undeclared-signal", o.clone(), format!("observation point `{o}` is not a declared signal")));
        }
    }

    if let Some(cycle) = find_comb_cycle(n) {
        diags.push(Diagnostic {
            code: "combinational-cycle",
            subject: cycle.first().cloned(),
            message: format!("combinational cycle: {}", cycle.join(" -> ")),
            cycle,
        });
    }
    diags
}

/// Combinational nodes are wires, outputs and box inputs; registers, inputs
/// and box outputs break every path.
fn find_comb_cycle(n: &Netlist) -> Option<Vec<String>> {
    let mut deps: HashMap<String, Vec<&str>> = HashMap::new();
    for w in &n.wires {
        deps.insert(w.name.clone(), w.expr.refs());
    }
    for (o, e) in &n.drive_fns {
        deps.insert(o.clone(), e.refs());
    }
    for b in &n.boxes {
        for i in &b.inputs {
            deps.insert(b.pin(&i.name), i.expr.refs());
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    let mut marks: HashMap<&str, Mark> = HashMap::new();
    let mut keys: Vec<&String> = deps.keys().collect();
    keys.sort();
    for root in keys {
        if marks.contains_key(root.as_str()) {
            continue;
        }
        // Iterative DFS keeping the active path for cycle reporting.
        let mut stack: Vec<(&str, usize)> = vec![(root.as_str(), 0)];
        marks.insert(root.as_str(), Mark::Active);
        while let Some(&mut (node, ref mut idx)) = stack.last_mut() {
            let succ = deps.get(node).map(|v| v.as_slice()).unwrap_or(&[]);
            if *idx < succ.len() {
                let s = succ[*idx];
                *idx += 1;
                if !deps.contains_key(s) {
                    continue;
                }
                match marks.get(s) {
                    Some(Mark::Active) => {
                        let start = stack.iter().position(|(n, _)| *n == s).unwrap();
                        let mut cyc: Vec<String> = stack[start..].iter().map(|(n, _)| n.to_string()).collect();
                        cyc.push(s.to_string());
                        return Some(cyc);
                    }
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(s, Mark::Active);
                        stack.push((s, 0));
                    }
                }
            } else {
                marks.insert(node, Mark::Done);
                stack.pop();
            }
        }
    }
    None
}
