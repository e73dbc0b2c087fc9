//! Session reports and text renderings.

use crate::app::verdict_line;
use ditcheck::driver::{Mode, Session, Verdict};
use ditcheck::engine::{ProofResult, Status};
use ditcheck::miter::{BoxMode, NamedExpr, Sidecar};
use ditcheck::netlist::{BinOp, Expr, Netlist, Trace};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write;

/// Largest number of input bits enumerated for the operation-class table.
const OPCLASS_BITS: u32 = 20;

#[derive(Debug, Clone, Serialize)]
pub struct DesignSummary {
    pub inputs: usize,
    pub control_inputs: usize,
    pub outputs: usize,
    pub registers: usize,
    pub register_bits: u32,
    pub boxes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Assumptions {
    pub constraints: Vec<String>,
    pub invariants: Vec<String>,
    pub cross_equalities: Vec<String>,
    pub box_modes: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionRow {
    pub location: String,
    pub class: String,
    pub provenance: String,
    pub stamp: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OpClassRow {
    pub name: String,
    pub expr: String,
    /// Some input satisfying the class also satisfies every constraint.
    pub admitted: Option<bool>,
    /// Every input satisfying the class satisfies every constraint.
    pub within_phi: Option<bool>,
    pub data_independent: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct KindStats {
    pub count: usize,
    pub hold: usize,
    pub failed: usize,
    pub vars: u64,
    pub clauses: u64,
    pub solver_calls: u64,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CexRow {
    pub id: String,
    pub obligation: String,
    pub k: usize,
    pub earliest: Vec<String>,
    pub replay_valid: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub design: String,
    pub netlist_hash: String,
    pub summary: Option<DesignSummary>,
    pub mode: Mode,
    pub verdict: Verdict,
    pub verdict_text: String,
    /// Indices into the obligations log backing the verdict.
    pub evidence: Vec<usize>,
    pub assumptions: Assumptions,
    pub partition: Vec<PartitionRow>,
    pub opclasses: Vec<OpClassRow>,
    pub iterations: usize,
    pub resets: usize,
    pub decisions: usize,
    pub obligations: BTreeMap<String, KindStats>,
    pub cexs: Vec<CexRow>,
}

fn kind_key(label: &str) -> String {
    label.split('(').next().unwrap_or(label).to_string()
}

/// Obligations of the last iteration that decided the verdict.
fn evidence(s: &Session) -> Vec<usize> {
    match &s.verdict {
        Verdict::Violation { cex } => s
            .obligations
            .iter()
            .position(|o| o.cex.as_deref() == Some(cex.as_str()))
            .into_iter()
            .collect(),
        Verdict::Do | Verdict::DoPhi { .. } | Verdict::NoViolationFound => s
            .obligations
            .iter()
            .enumerate()
            .filter(|(_, o)| o.iteration == s.iterations && o.status.is_hold())
            .map(|(i, _)| i)
            .collect(),
        Verdict::Unknown { .. } | Verdict::Pending => Vec::new(),
    }
}

pub fn build(s: &Session, n: Option<&Netlist>, sc: Option<&Sidecar>) -> Report {
    let l = &s.ledger;
    let show = |c: &NamedExpr| format!("{} = {}", c.name, c.expr);
    let assumptions = Assumptions {
        constraints: l.phi.iter().map(show).collect(),
        invariants: l.invariants.iter().map(show).collect(),
        cross_equalities: l.cross_equalities.iter().map(|c| format!("{} = {} {}", c.name, c.a, c.b)).collect(),
        box_modes: l
            .box_modes
            .iter()
            .map(|(b, m)| {
                let m = match m {
                    BoxMode::Opaque => "opaque",
                    BoxMode::VerifiedDo => "verified-do",
                };
                format!("{b} {m}")
            })
            .collect(),
    };
    let partition = l
        .state_class
        .iter()
        .chain(l.box_input_class.iter())
        .map(|(loc, e)| PartitionRow {
            location: loc.clone(),
            class: e.class.to_string(),
            provenance: serde_json::to_value(e.provenance)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default(),
            stamp: e.stamp,
        })
        .collect();
    let mut obligations: BTreeMap<String, KindStats> = BTreeMap::new();
    for o in &s.obligations {
        let k = obligations.entry(kind_key(&o.spec.label())).or_default();
        k.count += 1;
        if o.status.is_hold() {
            k.hold += 1;
        } else {
            k.failed += 1;
        }
        k.vars += o.stats.vars;
        k.clauses += o.stats.clauses;
        k.solver_calls += u64::from(o.stats.solver_calls);
        k.solve_ms += o.stats.solve_ms;
    }
    let cexs = s
        .cexs
        .iter()
        .map(|(id, c)| CexRow {
            id: id.clone(),
            obligation: c.obligation.clone(),
            k: c.k,
            earliest: c.earliest().iter().map(|d| format!("{}@{}", d.loc, d.cycle)).collect(),
            replay_valid: n.map(|n| ditcheck::engine::replay_cex(n, c)),
        })
        .collect();
    let opclasses = match (n, sc) {
        (Some(n), Some(sc)) => sc.opclasses.iter().map(|c| opclass_row(n, &l.phi, c, &s.verdict)).collect(),
        _ => Vec::new(),
    };
    Report {
        design: s.design.clone(),
        netlist_hash: s.netlist_hash.clone(),
        summary: n.map(|n| DesignSummary {
            inputs: n.inputs.len(),
            control_inputs: n.inputs.iter().filter(|p| p.role == ditcheck::netlist::Role::Control).count(),
            outputs: n.outputs.len(),
            registers: n.regs.len(),
            register_bits: n.regs.iter().map(|r| r.width).sum(),
            boxes: n.boxes.len(),
        }),
        mode: s.mode.clone(),
        verdict: s.verdict.clone(),
        verdict_text: verdict_line(&s.verdict),
        evidence: evidence(s),
        assumptions,
        partition,
        opclasses,
        iterations: s.iterations,
        resets: s.resets,
        decisions: s.decisions.len(),
        obligations,
        cexs,
    }
}

fn mask(w: u32) -> u64 {
    if w >= 64 {
        u64::MAX
    } else {
        (1 << w) - 1
    }
}

fn eval(e: &Expr, env: &HashMap<&str, u64>, n: &Netlist) -> u64 {
    let width = |e: &Expr| e.width(&|s| n.width_of(s)).unwrap_or(64);
    match e {
        Expr::Ref(s) => env.get(s.as_str()).copied().unwrap_or(0),
        Expr::Const { value, .. } => *value,
        Expr::Not(a) => !eval(a, env, n) & mask(width(a)),
        Expr::Bin(op, a, b) => {
            let (x, y, w) = (eval(a, env, n), eval(b, env, n), width(a));
            match op {
                BinOp::And => x & y,
                BinOp::Or => x | y,
                BinOp::Xor => x ^ y,
                BinOp::Add => x.wrapping_add(y) & mask(w),
                BinOp::Sub => x.wrapping_sub(y) & mask(w),
                BinOp::Mul => x.wrapping_mul(y) & mask(w),
                BinOp::Eq => u64::from(x == y),
                BinOp::Ult => u64::from(x < y),
                BinOp::Concat => (x << width(b)) | y,
            }
        }
        Expr::Mux(c, a, b) => {
            if eval(c, env, n) != 0 {
                eval(a, env, n)
            } else {
                eval(b, env, n)
            }
        }
        Expr::Shl(a, k) => eval(a, env, n).checked_shl(*k).unwrap_or(0) & mask(width(a)),
        Expr::Shr(a, k) => eval(a, env, n).checked_shr(*k).unwrap_or(0),
        Expr::Slice(a, hi, lo) => (eval(a, env, n) >> lo) & mask(hi - lo + 1),
    }
}

fn opclass_row(n: &Netlist, phi: &[NamedExpr], c: &NamedExpr, v: &Verdict) -> OpClassRow {
    let mut names = BTreeSet::new();
    for e in std::iter::once(&c.expr).chain(phi.iter().map(|p| &p.expr)) {
        names.extend(e.refs());
    }
    let ports: Vec<(&str, u32)> = names
        .into_iter()
        .filter_map(|s| n.input(s).map(|p| (p.name.as_str(), p.width)))
        .collect();
    let bits: u32 = ports.iter().map(|p| p.1).sum();
    let (admitted, within) = if bits <= OPCLASS_BITS {
        let (mut admitted, mut within, mut any) = (false, true, false);
        for x in 0..1u64 << bits {
            let mut env = HashMap::new();
            let mut off = 0;
            for (name, w) in &ports {
                env.insert(*name, (x >> off) & mask(*w));
                off += w;
            }
            if eval(&c.expr, &env, n) & 1 == 0 {
                continue;
            }
            any = true;
            let ok = phi.iter().all(|p| eval(&p.expr, &env, n) & 1 == 1);
            admitted |= ok;
            within &= ok;
        }
        (Some(admitted), Some(within && any))
    } else {
        (None, None)
    };
    let data_independent = match (v, admitted, within) {
        (Verdict::Do, ..) => "always",
        (Verdict::DoPhi { .. }, _, Some(true)) => "always (within φ)",
        (Verdict::DoPhi { .. }, Some(false), _) => "not established (excluded by φ)",
        (Verdict::DoPhi { .. }, Some(true), _) => "only for operands admitted by φ",
        _ => "not established",
    };
    OpClassRow {
        name: c.name.clone(),
        expr: c.expr.to_string(),
        admitted,
        within_phi: within,
        data_independent: data_independent.into(),
    }
}

pub fn markdown(r: &Report) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "# {}\n", r.design);
    let _ = writeln!(o, "Netlist `{}`.\n", r.netlist_hash);
    if let Some(d) = &r.summary {
        let _ = writeln!(
            o,
            "{} inputs ({} control), {} outputs, {} registers ({} bits), {} black boxes.\n",
            d.inputs, d.control_inputs, d.outputs, d.registers, d.register_bits, d.boxes
        );
    }
    let _ = writeln!(o, "## Verdict\n");
    let _ = writeln!(o, "**{}** after {} iterations and {} resets.", r.verdict_text, r.iterations, r.resets);
    if !r.evidence.is_empty() {
        let ev: Vec<String> = r.evidence.iter().map(|i| format!("#{i}")).collect();
        let _ = writeln!(o, "Backed by obligations {}.", ev.join(", "));
    }
    let a = &r.assumptions;
    let _ = writeln!(o, "\n## Assumptions\n");
    if a.constraints.is_empty() && a.invariants.is_empty() && a.cross_equalities.is_empty() && a.box_modes.is_empty() {
        let _ = writeln!(o, "None.");
    } else {
        let _ = writeln!(o, "```");
        for c in &a.constraints {
            let _ = writeln!(o, "constraint {c}");
        }
        for c in &a.invariants {
            let _ = writeln!(o, "invariant {c}");
        }
        for c in &a.cross_equalities {
            let _ = writeln!(o, "crosseq {c}");
        }
        for b in &a.box_modes {
            let _ = writeln!(o, "box {b}");
        }
        let _ = writeln!(o, "```");
    }
    let _ = writeln!(o, "\n## Partition\n");
    let _ = writeln!(o, "| location | class | provenance | stamp |\n|---|---|---|---|");
    for p in &r.partition {
        let _ = writeln!(o, "| `{}` | {} | {} | {} |", p.location, p.class, p.provenance, p.stamp);
    }
    if !r.opclasses.is_empty() {
        let _ = writeln!(o, "\n## Operation classes\n");
        let _ = writeln!(o, "| class | condition | executes data-independently |\n|---|---|---|");
        for c in &r.opclasses {
            let _ = writeln!(o, "| {} | `{}` | {} |", c.name, c.expr, c.data_independent);
        }
    }
    let _ = writeln!(o, "\n## Obligations\n");
    let _ = writeln!(o, "| kind | count | hold | failed | vars | clauses | solve ms |\n|---|---|---|---|---|---|---|");
    for (k, s) in &r.obligations {
        let _ = writeln!(
            o,
            "| {k} | {} | {} | {} | {} | {} | {:.1} |",
            s.count, s.hold, s.failed, s.vars, s.clauses, s.solve_ms
        );
    }
    let _ = writeln!(o, "\n{} decisions recorded.", r.decisions);
    if !r.cexs.is_empty() {
        let _ = writeln!(o, "\n## Counterexamples\n");
        for c in &r.cexs {
            let replay = match c.replay_valid {
                Some(true) => ", replays",
                Some(false) => ", DOES NOT REPLAY",
                None => "",
            };
            let _ = writeln!(o, "- `{}`: {} k={}{replay}, first diffs {}", c.id, c.obligation, c.k, c.earliest.join(" "));
        }
    }
    o
}

/// Aligned per-cycle table of inputs, registers and outputs.
pub fn trace_table(n: &Netlist, t: &Trace) -> String {
    let cols: Vec<&str> = n
        .inputs
        .iter()
        .map(|p| p.name.as_str())
        .chain(n.reg_names())
        .chain(n.outputs.iter().map(|p| p.name.as_str()))
        .collect();
    let cells: Vec<Vec<String>> = (0..t.length)
        .map(|c| {
            std::iter::once(c.to_string())
                .chain(cols.iter().map(|s| t.get(s, c).map_or("-".into(), |v| v.to_string())))
                .collect()
        })
        .collect();
    let header: Vec<&str> = std::iter::once("cycle").chain(cols.iter().copied()).collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| cells.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let mut o = String::new();
    let row = |o: &mut String, vals: &[&str]| {
        let line: Vec<String> = vals.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
        let _ = writeln!(o, "{}", line.join("  ").trim_end());
    };
    row(&mut o, &header);
    for r in &cells {
        let v: Vec<&str> = r.iter().map(String::as_str).collect();
        row(&mut o, &v);
    }
    o
}

pub fn status_name(s: &Status) -> String {
    match s {
        Status::Hold => "hold".into(),
        Status::Violated => "violated".into(),
        Status::CandidatePropagation => "candidate-propagation".into(),
        Status::InvariantRefuted => "invariant-refuted".into(),
        Status::Unknown(r) => format!("unknown: {r}"),
    }
}

pub fn proof_summary(r: &ProofResult) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "{}: {}", r.obligation.label(), status_name(&r.status));
    let _ = writeln!(
        o,
        "vars {} clauses {} solver calls {} ({:.1} ms)",
        r.stats.vars, r.stats.clauses, r.stats.solver_calls, r.stats.solve_ms
    );
    if let Some(c) = &r.cex {
        for d in &c.diffs {
            let _ = writeln!(o, "  {} differs at cycle {} ({:?})", d.loc, d.cycle, d.kind);
        }
    }
    o
}
