//! CNF representation, DIMACS I/O and the two solver back ends.

mod cdcl;
mod dimacs;
mod external;

pub use cdcl::Cdcl;
pub use dimacs::{parse_dimacs, parse_solver_output, write_dimacs, DimacsError};
pub use external::ExternalSolver;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::time::Duration;

/// A literal: variable index (0-based) and polarity packed as `var << 1 | neg`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(u32);

impl Lit {
    pub fn new(var: u32, negative: bool) -> Self {
        Lit(var << 1 | negative as u32)
    }

    pub fn pos(var: u32) -> Self {
        Lit::new(var, false)
    }

    pub fn var(self) -> u32 {
        self.0 >> 1
    }

    pub fn is_neg(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// DIMACS form: 1-based, negative for negated literals.
    pub fn to_dimacs(self) -> i64 {
        let v = self.var() as i64 + 1;
        if self.is_neg() {
            -v
        } else {
            v
        }
    }

    pub fn from_dimacs(d: i64) -> Self {
        assert!(d != 0);
        Lit::new((d.unsigned_abs() - 1) as u32, d < 0)
    }

    /// Value of this literal under a full assignment.
    pub fn eval(self, model: &[bool]) -> bool {
        model[self.var() as usize] ^ self.is_neg()
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl fmt::Debug for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

/// Clause list over `num_vars` variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cnf {
    pub num_vars: u32,
    pub clauses: Vec<Vec<Lit>>,
}

impl Cnf {
    pub fn new_var(&mut self) -> Lit {
        let v = self.num_vars;
        self.num_vars += 1;
        Lit::pos(v)
    }

    pub fn add(&mut self, clause: impl Into<Vec<Lit>>) {
        self.clauses.push(clause.into());
    }

    /// True iff `model` satisfies every clause.
    pub fn satisfied_by(&self, model: &[bool]) -> bool {
        self.clauses.iter().all(|c| c.iter().any(|l| l.eval(model)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveResult {
    /// Satisfying assignment indexed by variable.
    Sat(Vec<bool>),
    Unsat,
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Conflicts before giving up (embedded solver only).
    pub max_conflicts: Option<u64>,
    /// Wall-clock limit in milliseconds.
    pub timeout_ms: Option<u64>,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_conflicts: None,
            timeout_ms: Some(60_000),
        }
    }
}

impl Budget {
    pub fn timeout(&self) -> Option<Duration> {
        self.timeout_ms.map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolverError {
    #[error("failed to run external solver `{cmd}`: {msg}")]
    Spawn { cmd: String, msg: String },
    #[error("external solver protocol error: {0}")]
    Protocol(String),
}

/// Which back end answers SAT queries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverChoice {
    #[default]
    Embedded,
    /// Command line of a solver reading DIMACS on stdin.
    External(Vec<String>),
}

pub fn solve(cnf: &Cnf, choice: &SolverChoice, budget: &Budget) -> Result<SolveResult, SolverError> {
    match choice {
        SolverChoice::Embedded => Ok(Cdcl::new(cnf).solve(budget)),
        SolverChoice::External(cmd) => ExternalSolver::new(cmd.clone()).solve(cnf, budget),
    }
}
