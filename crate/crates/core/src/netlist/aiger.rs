//! ASCII AIGER (`aag`, format 1.9) import.

use super::{BinOp, Expr, Init, Netlist, Port, Register, Role, Wire};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AigerError {
    #[error("binary `aig` files are not supported, convert with `aigtoaig -a`")]
    Binary,
    #[error("malformed header: {0}")]
    Header(String),
    #[error("line {line}: {msg}")]
    Body { line: usize, msg: String },
    #[error("unsupported AIGER feature: {0}")]
    Unsupported(String),
    #[error("imported netlist is invalid: {0}")]
    Invalid(String),
    #[error("sidecar line {line}: {msg}")]
    Sidecar { line: usize, msg: String },
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn nums(&mut self, what: &str, min: usize, max: usize) -> Result<(usize, Vec<u64>), AigerError> {
        let (idx, line) = self.it.next().ok_or_else(|| AigerError::Body {
            line: 0,
            msg: format!("unexpected end of file, expected {what}"),
        })?;
        let nums: Result<Vec<u64>, _> = line.split_whitespace().map(str::parse).collect();
        let nums = nums.map_err(|_| AigerError::Body {
            line: idx + 1,
            msg: format!("expected {what}"),
        })?;
        if nums.len() < min || nums.len() > max {
            return Err(AigerError::Body {
                line: idx + 1,
                msg: format!("expected {what}"),
            });
        }
        Ok((idx + 1, nums))
    }
}

/// Imports an ASCII AIGER model. Latches become 1-bit registers, inputs and
/// outputs get the `data` role until overridden with [`apply_role_sidecar`].
pub fn import_aiger(bytes: &[u8]) -> Result<Netlist, AigerError> {
    if bytes.starts_with(b"aig ") {
        return Err(AigerError::Binary);
    }
    let text = std::str::from_utf8(bytes).map_err(|_| AigerError::Header("not utf-8".into()))?;
    let mut lines = Lines { it: text.lines().enumerate() };
    let (_, header) = lines.it.next().ok_or_else(|| AigerError::Header("empty file".into()))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some("aag") {
        return Err(AigerError::Header(format!("expected `aag`, found `{header}`")));
    }
    let counts: Result<Vec<u64>, _> = fields.map(str::parse::<u64>).collect();
    let counts = counts.map_err(|_| AigerError::Header(header.to_string()))?;
    if counts.len() < 5 || counts.len() > 9 {
        return Err(AigerError::Header(format!("expected 5 to 9 counts, found {}", counts.len())));
    }
    let get = |i: usize| counts.get(i).copied().unwrap_or(0) as usize;
    let (max_var, ni, nl, no, na) = (get(0), get(1), get(2), get(3), get(4));
    let (nb, nc, nj, nf) = (get(5), get(6), get(7), get(8));
    if nj > 0 || nf > 0 {
        return Err(AigerError::Unsupported("justice/fairness properties".into()));
    }
    if ni + nl + na > max_var {
        return Err(AigerError::Header(format!("M={max_var} smaller than I+L+A={}", ni + nl + na)));
    }

    let mut inputs = Vec::new();
    for _ in 0..ni {
        let (line, v) = lines.nums("input literal", 1, 1)?;
        check_def(v[0], max_var, line)?;
        inputs.push(v[0]);
    }
    let mut latches = Vec::new();
    for _ in 0..nl {
        let (line, v) = lines.nums("latch definition", 2, 3)?;
        check_def(v[0], max_var, line)?;
        check_use(v[1], max_var, line)?;
        let reset = v.get(2).copied().unwrap_or(0);
        latches.push((v[0], v[1], reset, line));
    }
    let mut outs = Vec::new();
    for _ in 0..(no + nb + nc) {
        let (line, v) = lines.nums("output literal", 1, 1)?;
        check_use(v[0], max_var, line)?;
        outs.push(v[0]);
    }
    let mut ands = Vec::new();
    for _ in 0..na {
        let (line, v) = lines.nums("and gate", 3, 3)?;
        check_def(v[0], max_var, line)?;
        check_use(v[1], max_var, line)?;
        check_use(v[2], max_var, line)?;
        ands.push((v[0], v[1], v[2]));
    }

    // Symbol table; stops at the comment section.
    let mut sym: HashMap<(char, usize), String> = HashMap::new();
    for (_, line) in lines.it.by_ref() {
        if line.starts_with('c') {
            break;
        }
        let Some((tag, name)) = line.split_once(' ') else { continue };
        let mut ch = tag.chars();
        let (Some(kind), Ok(pos)) = (ch.next(), ch.as_str().parse::<usize>()) else { continue };
        sym.insert((kind, pos), name.trim().to_string());
    }

    let mut var_name: HashMap<u64, String> = HashMap::new();
    let mut n = Netlist {
        name: "aiger".into(),
        ..Default::default()
    };
    for (k, lit) in inputs.iter().enumerate() {
        let name = sym.get(&('i', k)).cloned().unwrap_or_else(|| format!("i{k}"));
        var_name.insert(lit / 2, name.clone());
        n.inputs.push(Port { name, width: 1, role: Role::Data });
    }
    for (k, (lit, ..)) in latches.iter().enumerate() {
        let name = sym.get(&('l', k)).cloned().unwrap_or_else(|| format!("l{k}"));
        var_name.insert(lit / 2, name);
    }
    for (lhs, ..) in &ands {
        var_name.insert(lhs / 2, format!("n{}", lhs / 2));
    }
    let to_expr = |lit: u64, line: usize| -> Result<Expr, AigerError> {
        if lit < 2 {
            return Ok(Expr::konst(1, lit));
        }
        let name = var_name.get(&(lit / 2)).ok_or_else(|| AigerError::Body {
            line,
            msg: format!("literal {lit} is never defined"),
        })?;
        let r = Expr::sig(name.clone());
        Ok(if lit & 1 == 1 { Expr::not(r) } else { r })
    };
    for (k, (lit, next, reset, line)) in latches.iter().enumerate() {
        let name = var_name[&(lit / 2)].clone();
        let init = match *reset {
            0 => Init::Value(0),
            1 => Init::Value(1),
            r if r == *lit => Init::Uninitialized,
            r => {
                return Err(AigerError::Body {
                    line: *line,
                    msg: format!("latch {k} reset {r} must be 0, 1 or the latch literal"),
                })
            }
        };
        n.regs.push(Register { name: name.clone(), width: 1, init });
        n.next_fns.insert(name, to_expr(*next, *line)?);
    }
    for (lhs, a, b) in &ands {
        n.wires.push(Wire {
            name: format!("n{}", lhs / 2),
            width: 1,
            expr: Expr::bin(BinOp::And, to_expr(*a, 0)?, to_expr(*b, 0)?),
        });
    }
    for (k, lit) in outs.iter().enumerate() {
        let name = if k < no {
            sym.get(&('o', k)).cloned().unwrap_or_else(|| format!("o{k}"))
        } else if k < no + nb {
            sym.get(&('b', k - no)).cloned().unwrap_or_else(|| format!("b{}", k - no))
        } else {
            sym.get(&('c', k - no - nb)).cloned().unwrap_or_else(|| format!("c{}", k - no - nb))
        };
        n.outputs.push(Port { name: name.clone(), width: 1, role: Role::Data });
        n.drive_fns.insert(name, to_expr(*lit, 0)?);
    }
    if let Some(d) = super::validate(&n).into_iter().next() {
        return Err(AigerError::Invalid(d.message));
    }
    Ok(n)
}

fn check_def(lit: u64, max_var: usize, line: usize) -> Result<(), AigerError> {
    if lit < 2 || lit & 1 == 1 || (lit / 2) as usize > max_var {
        return Err(AigerError::Body {
            line,
            msg: format!("invalid defining literal {lit}"),
        });
    }
    Ok(())
}

fn check_use(lit: u64, max_var: usize, line: usize) -> Result<(), AigerError> {
    if (lit / 2) as usize > max_var {
        return Err(AigerError::Body {
            line,
            msg: format!("literal {lit} exceeds M={max_var}"),
        });
    }
    Ok(())
}

/// Applies `role <signal-glob> (control|data)` lines to the ports of `n`.
/// Later lines win.
pub fn apply_role_sidecar(n: &mut Netlist, text: &str) -> Result<(), AigerError> {
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split(';').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| AigerError::Sidecar { line: idx + 1, msg };
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "role" {
            return Err(err(format!("expected `role <glob> (control|data)`, found `{line}`")));
        }
        let pat = glob::Pattern::new(parts[1]).map_err(|e| err(e.to_string()))?;
        let role: Role = parts[2].parse().map_err(err)?;
        for p in n.inputs.iter_mut().chain(n.outputs.iter_mut()) {
            if pat.matches(&p.name) {
                p.role = role;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passthrough_is_combinational() {
        let n = import_aiger(b"aag 1 1 0 1 0\n2\n2\n").unwrap();
        assert_eq!((n.inputs.len(), n.outputs.len(), n.regs.len()), (1, 1, 0));
        assert_eq!(n.drive_fns["o0"], Expr::sig("i0"));
    }

    #[test]
    fn self_loop_latch_defaults_to_zero() {
        let n = import_aiger(b"aag 1 0 1 1 0\n2 2\n2\n").unwrap();
        assert_eq!(n.regs.len(), 1);
        assert_eq!(n.regs[0].init, Init::Value(0));
    }

    #[test]
    fn uninitialized_latch_and_symbols() {
        let n = import_aiger(b"aag 2 1 1 1 0\n2\n4 2 4\n5\ni0 req\nl0 seen\no0 nseen\nc\nhello\n").unwrap();
        assert_eq!(n.inputs[0].name, "req");
        assert_eq!(n.regs[0].init, Init::Uninitialized);
        assert_eq!(n.drive_fns["nseen"], Expr::not(Expr::sig("seen")));
    }

    #[test]
    fn rejects_binary_and_bad_header() {
        assert_eq!(import_aiger(b"aig 1 1 0 1 0\n"), Err(AigerError::Binary));
        assert!(matches!(import_aiger(b"aag 1 1\n"), Err(AigerError::Header(_))));
        assert!(matches!(import_aiger(b"aag 0 1 0 0 0\n2\n"), Err(AigerError::Header(_))));
    }

    #[test]
    fn sidecar_sets_roles() {
        let mut n = import_aiger(b"aag 3 2 0 1 1\n2\n4\n6\n6 2 4\ni0 start\ni1 key\no0 busy\n").unwrap();
        apply_role_sidecar(&mut n, "role start control\nrole bu* control ; glob\n").unwrap();
        assert_eq!(n.inputs[0].role, Role::Control);
        assert_eq!(n.inputs[1].role, Role::Data);
        assert_eq!(n.outputs[0].role, Role::Control);
    }
}
