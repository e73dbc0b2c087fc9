use super::{Cnf, Lit, SolveResult};
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DimacsError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
}

/// Writes `p cnf V C` followed by one 0-terminated clause per line.
pub fn write_dimacs(cnf: &Cnf) -> String {
    let mut s = String::new();
    writeln!(s, "p cnf {} {}", cnf.num_vars, cnf.clauses.len()).unwrap();
    for c in &cnf.clauses {
        for l in c {
            write!(s, "{} ", l.to_dimacs()).unwrap();
        }
        s.push_str("0\n");
    }
    s
}

pub fn parse_dimacs(text: &str) -> Result<Cnf, DimacsError> {
    let mut cnf = Cnf::default();
    let mut header = false;
    let mut cur = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let err = |msg: String| DimacsError::Syntax { line: idx + 1, msg };
        let t = line.trim();
        if t.is_empty() || t.starts_with('c') || t.starts_with('%') {
            continue;
        }
        if t.starts_with('p') {
            let f: Vec<&str> = t.split_whitespace().collect();
            if f.len() != 4 || f[1] != "cnf" {
                return Err(err(format!("bad header `{t}`")));
            }
            cnf.num_vars = f[2].parse().map_err(|_| err("bad variable count".into()))?;
            header = true;
            continue;
        }
        if !header {
            return Err(err("clause before `p cnf` header".into()));
        }
        for tok in t.split_whitespace() {
            let d: i64 = tok.parse().map_err(|_| err(format!("bad literal `{tok}`")))?;
            if d == 0 {
                cnf.clauses.push(std::mem::take(&mut cur));
            } else {
                if d.unsigned_abs() > cnf.num_vars as u64 {
                    return Err(err(format!("literal {d} exceeds variable count")));
                }
                cur.push(Lit::from_dimacs(d));
            }
        }
    }
    if !cur.is_empty() {
        cnf.clauses.push(cur);
    }
    Ok(cnf)
}

/// Parses competition-format solver output (`s ...` and `v ...` lines).
/// Variables missing from the `v` lines default to false.
pub fn parse_solver_output(text: &str, num_vars: u32) -> Result<SolveResult, String> {
    let mut status = None;
    let mut model = vec![false; num_vars as usize];
    for line in text.lines() {
        let t = line.trim();
        if let Some(s) = t.strip_prefix("s ") {
            status = Some(s.trim().to_string());
        } else if let Some(v) = t.strip_prefix("v ") {
            for tok in v.split_whitespace() {
                let d: i64 = tok.parse().map_err(|_| format!("bad model literal `{tok}`"))?;
                if d == 0 {
                    continue;
                }
                let idx = d.unsigned_abs() as usize - 1;
                if idx < model.len() {
                    model[idx] = d > 0;
                }
            }
        }
    }
    match status.as_deref() {
        Some("SATISFIABLE") => Ok(SolveResult::Sat(model)),
        Some("UNSATISFIABLE") => Ok(SolveResult::Unsat),
        Some("UNKNOWN") => Ok(SolveResult::Unknown("external solver answered UNKNOWN".into())),
        Some(other) => Err(format!("unrecognized status `{other}`")),
        None => Err("no `s` status line in solver output".into()),
    }
}
