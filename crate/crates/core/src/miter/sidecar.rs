//! Partition, constraint and decision-rule files.
//!
//! ```text
//! class <reg-glob> (control|data)
//! constraint <name> = <expr>
//! invariant <name> = <expr>
//! crosseq [<name> =] <sig> <sig>
//! box <name> (opaque|verified-do)
//! on-output <glob> (violation|invalid:<name>,...)
//! on-state <glob> (data|violation|invalid:<name>,...)
//! opclass <name> = <expr>
//! ```

use super::{BoxMode, CrossEq, Instance, NamedExpr, SigRef};
use crate::netlist::parse_expr;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct SidecarError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleScope {
    /// `class`: registers and box inputs.
    Class,
    /// `on-output`: control outputs, observations, control box inputs.
    OnOutput,
    /// `on-state`: registers and box inputs, checked before `class` rules
    /// of later lines.
    OnState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleAction {
    Data,
    /// Control classification, i.e. a violation.
    Control,
    /// Mark the counterexample invalid and add the named exclusions.
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub line: usize,
    pub scope: RuleScope,
    pub pattern: String,
    pub action: RuleAction,
}

impl Rule {
    pub fn matches(&self, location: &str) -> bool {
        glob::Pattern::new(&self.pattern).map(|p| p.matches(location)).unwrap_or(false)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sidecar {
    pub rules: Vec<Rule>,
    pub constraints: Vec<NamedExpr>,
    pub invariants: Vec<NamedExpr>,
    pub cross_equalities: Vec<CrossEq>,
    pub box_modes: Vec<(String, BoxMode)>,
    /// Operation classes for the report table.
    pub opclasses: Vec<NamedExpr>,
}

impl Sidecar {
    /// Exclusion names referenced by some `invalid:` action.
    pub fn deferred(&self) -> Vec<String> {
        let mut out = Vec::new();
        for r in &self.rules {
            if let RuleAction::Invalid(names) = &r.action {
                for n in names {
                    if !out.contains(n) {
                        out.push(n.clone());
                    }
                }
            }
        }
        out
    }
}

fn named(rest: &str, line: usize) -> Result<NamedExpr, SidecarError> {
    let err = |msg: String| SidecarError { line, msg };
    let (name, expr) = rest
        .split_once('=')
        .ok_or_else(|| err("expected `<name> = <expr>`".into()))?;
    let name = name.trim();
    if !crate::netlist::is_ident(name) {
        return Err(err(format!("`{name}` is not a valid name")));
    }
    let expr = parse_expr(expr.trim()).map_err(|e| err(e.message))?;
    Ok(NamedExpr { name: name.to_string(), expr })
}

fn action(text: &str, line: usize, allow_data: bool) -> Result<RuleAction, SidecarError> {
    match text {
        "violation" | "control" => Ok(RuleAction::Control),
        "data" if allow_data => Ok(RuleAction::Data),
        t => match t.strip_prefix("invalid:") {
            Some(names) if !names.is_empty() => Ok(RuleAction::Invalid(names.split(',').map(|s| s.trim().to_string()).collect())),
            _ => Err(SidecarError {
                line,
                msg: format!("unknown action `{t}`"),
            }),
        },
    }
}

pub fn parse_sidecar(text: &str) -> Result<Sidecar, SidecarError> {
    let mut s = Sidecar::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split(['#', ';']).next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |msg: String| SidecarError { line, msg };
        let (kw, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
        let rest = rest.trim();
        let words: Vec<&str> = rest.split_whitespace().collect();
        let pattern_ok = |p: &str| glob::Pattern::new(p).map_err(|e| err(format!("bad glob `{p}`: {e}")));
        match kw {
            "class" => {
                if words.len() != 2 {
                    return Err(err("expected `class <glob> (control|data)`".into()));
                }
                pattern_ok(words[0])?;
                let action = match words[1] {
                    "data" => RuleAction::Data,
                    "control" => RuleAction::Control,
                    o => return Err(err(format!("expected `control` or `data`, found `{o}`"))),
                };
                s.rules.push(Rule { line, scope: RuleScope::Class, pattern: words[0].into(), action });
            }
            "on-output" | "on-state" => {
                if words.len() != 2 {
                    return Err(err(format!("expected `{kw} <glob> <action>`")));
                }
                pattern_ok(words[0])?;
                let state = kw == "on-state";
                let scope = if state { RuleScope::OnState } else { RuleScope::OnOutput };
                s.rules.push(Rule {
                    line,
                    scope,
                    pattern: words[0].into(),
                    action: action(words[1], line, state)?,
                });
            }
            "constraint" => s.constraints.push(named(rest, line)?),
            "invariant" => s.invariants.push(named(rest, line)?),
            "opclass" => s.opclasses.push(named(rest, line)?),
            "crosseq" => {
                let (name, sigs) = match rest.split_once('=') {
                    Some((n, r)) => (Some(n.trim().to_string()), r.split_whitespace().collect::<Vec<_>>()),
                    None => (None, words.clone()),
                };
                if sigs.len() != 2 {
                    return Err(err("expected `crosseq [<name> =] <sig> <sig>`".into()));
                }
                let a = SigRef::parse(sigs[0], Instance::A);
                let b = SigRef::parse(sigs[1], Instance::B);
                let name = name.unwrap_or_else(|| format!("{}_{}_{}_{}", a.instance.tag(), a.signal, b.instance.tag(), b.signal));
                s.cross_equalities.push(CrossEq { name, a, b });
            }
            "box" => {
                if words.len() != 2 {
                    return Err(err("expected `box <name> (opaque|verified-do)`".into()));
                }
                let mode: BoxMode = words[1].parse().map_err(err)?;
                s.box_modes.push((words[0].to_string(), mode));
            }
            other => return Err(err(format!("unknown directive `{other}`"))),
        }
    }
    let known: Vec<&str> = s
        .constraints
        .iter()
        .map(|c| c.name.as_str())
        .chain(s.invariants.iter().map(|c| c.name.as_str()))
        .chain(s.cross_equalities.iter().map(|c| c.name.as_str()))
        .collect();
    for r in &s.rules {
        if let RuleAction::Invalid(names) = &r.action {
            for n in names {
                if !known.contains(&n.as_str()) {
                    return Err(SidecarError {
                        line: r.line,
                        msg: format!("`invalid:` names undefined exclusion `{n}`"),
                    });
                }
            }
        }
    }
    Ok(s)
}
