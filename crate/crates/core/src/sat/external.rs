use super::{parse_solver_output, write_dimacs, Budget, Cnf, SolveResult, SolverError};
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::Instant;

/// Runs a DIMACS solver as a child process, feeding the formula on stdin.
#[derive(Debug, Clone)]
pub struct ExternalSolver {
    cmd: Vec<String>,
}

impl ExternalSolver {
    pub fn new(cmd: Vec<String>) -> Self {
        ExternalSolver { cmd }
    }

    pub fn solve(&self, cnf: &Cnf, budget: &Budget) -> Result<SolveResult, SolverError> {
        let shown = self.cmd.join(" ");
        let spawn_err = |msg: String| SolverError::Spawn { cmd: shown.clone(), msg };
        let (prog, args) = self.cmd.split_first().ok_or_else(|| spawn_err("empty command".into()))?;
        let mut child = Command::new(prog)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| spawn_err(e.to_string()))?;

        let text = write_dimacs(cnf);
        let mut stdin = child.stdin.take().unwrap();
        let writer = std::thread::spawn(move || {
            let _ = stdin.write_all(text.as_bytes());
        });
        let mut stdout = child.stdout.take().unwrap();
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });

        let start = Instant::now();
        let timeout = budget.timeout();
        loop {
            match child.try_wait().map_err(|e| spawn_err(e.to_string()))? {
                Some(_) => break,
                None => {
                    if let Some(t) = timeout {
                        if start.elapsed() >= t {
                            let _ = child.kill();
                            let _ = child.wait();
                            let _ = writer.join();
                            return Ok(SolveResult::Unknown(format!("time limit {} ms reached", t.as_millis())));
                        }
                    }
                    std::thread::sleep(std::time::Duration::from_millis(2));
                }
            }
        }
        let _ = writer.join();
        let out = reader.join().unwrap_or_default();
        let r = parse_solver_output(&out, cnf.num_vars).map_err(SolverError::Protocol)?;
        if let SolveResult::Sat(m) = &r {
            if !cnf.satisfied_by(m) {
                return Err(SolverError::Protocol("reported model does not satisfy the formula".into()));
            }
        }
        Ok(r)
    }
}
