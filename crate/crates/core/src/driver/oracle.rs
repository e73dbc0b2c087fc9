//! Simulation oracles. The exhaustive one decides obliviousness of small
//! designs by enumeration; the random one samples paired runs.

use crate::miter::NamedExpr;
use crate::netlist::{CExpr, Compiled, Init, InitPolicy, Netlist, Role, Stimulus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::rc::Rc;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("enumeration needs more than {budget} simulation steps")]
    Budget { budget: u64 },
    #[error("{0}")]
    Unsupported(String),
}

/// Two runs from reset with equal control inputs and different control
/// outputs at `cycle`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub cycle: usize,
    pub signal: String,
    pub a: Stimulus,
    pub b: Stimulus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum OracleVerdict {
    Do,
    Violation(Box<Witness>),
}

/// Inputs of the design as the oracles see them: primary inputs and box
/// outputs, split by role.
struct View {
    c: Compiled,
    ctrl: Vec<usize>,
    data: Vec<usize>,
    /// Control outputs, observations and control box inputs.
    y: Vec<usize>,
    phi: Vec<CExpr>,
}

impl View {
    fn new(n: &Netlist, phi: &[NamedExpr]) -> Result<Self, OracleError> {
        let c = Compiled::new(n);
        let role_of = |name: &str| -> Role {
            if let Some(p) = n.input(name) {
                return p.role;
            }
            n.boxes
                .iter()
                .flat_map(|b| b.outputs.iter().map(move |o| (b.pin(&o.name), o.role)))
                .find(|(p, _)| p == name)
                .map(|(_, r)| r)
                .unwrap_or(Role::Data)
        };
        let mut ctrl = Vec::new();
        let mut data = Vec::new();
        for &id in c.inputs.iter().chain(&c.box_outs) {
            match role_of(c.name(id)) {
                Role::Control => ctrl.push(id),
                Role::Data => data.push(id),
            }
        }
        let mut y: Vec<usize> = n.outputs_with(Role::Control).filter_map(|o| c.id(&o.name)).collect();
        y.extend(n.observations.iter().filter_map(|o| c.id(o)));
        for b in &n.boxes {
            for i in b.inputs.iter().filter(|i| i.role == Role::Control) {
                y.extend(c.id(&b.pin(&i.name)));
            }
        }
        for p in phi {
            for r in p.expr.refs() {
                if n.input(r).is_none() {
                    return Err(OracleError::Unsupported(format!("constraint `{}` references `{r}`", p.name)));
                }
            }
        }
        let phi = phi.iter().map(|p| c.compile_expr(&p.expr)).collect();
        Ok(View { c, ctrl, data, y, phi })
    }

    fn bits(&self, ids: &[usize]) -> u32 {
        ids.iter().map(|&i| self.c.width(i)).sum()
    }

    /// Every assignment to `ids`, least significant input first.
    fn assignments(&self, ids: &[usize]) -> Vec<Vec<u64>> {
        let mut out = vec![vec![]];
        for &id in ids.iter().rev() {
            let w = self.c.width(id);
            let mut next = Vec::with_capacity(out.len() << w);
            for v in 0..(1u64 << w) {
                for rest in &out {
                    let mut a = vec![v];
                    a.extend(rest);
                    next.push(a);
                }
            }
            out = next;
        }
        // Lexicographic with the first input most significant.
        out.sort();
        out
    }

    fn legal(&self, vals: &mut [u64]) -> bool {
        self.phi.iter().all(|p| Compiled::eval(p, vals) & 1 == 1)
    }

    fn stimulus(&self, n: &Netlist, init: &[u64], inputs: &[Vec<u64>]) -> Stimulus {
        let mut s = Stimulus {
            policy: InitPolicy::Require,
            ..Default::default()
        };
        for (&id, v) in self.c.regs.iter().zip(init) {
            s.init.insert(self.c.name(id).to_string(), *v);
        }
        for frame in inputs {
            let mut inp = BTreeMap::new();
            let mut bo = BTreeMap::new();
            for (&id, v) in self.ctrl.iter().chain(&self.data).zip(frame) {
                let name = self.c.name(id).to_string();
                if n.input(&name).is_some() {
                    inp.insert(name, *v);
                } else {
                    bo.insert(name, *v);
                }
            }
            s.inputs.push(inp);
            s.box_outputs.push(bo);
        }
        s
    }
}

struct Path {
    parent: Option<Rc<Path>>,
    frame: Vec<u64>,
}

fn unwind(p: &Option<Rc<Path>>) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut cur = p.clone();
    while let Some(node) = cur {
        out.push(node.frame.clone());
        cur = node.parent.clone();
    }
    out.reverse();
    out
}

struct Member {
    state: Vec<u64>,
    init: Rc<Vec<u64>>,
    path: Option<Rc<Path>>,
}

/// Decides obliviousness of `n` over all input sequences of up to
/// `max_cycles` cycles from reset that satisfy `phi` in every cycle.
///
/// For each control input sequence the set of states reachable under some
/// data input sequence is tracked; the design is oblivious iff the control
/// outputs agree across each set. Control sequences are explored breadth
/// first in lexicographic order and a state set already seen is not
/// expanded again, so the witness found is the earliest one in that order.
/// `budget` bounds the number of simulated steps.
pub fn oracle_exhaustive(n: &Netlist, max_cycles: usize, phi: &[NamedExpr], budget: u64) -> Result<OracleVerdict, OracleError> {
    let v = View::new(n, phi)?;
    if v.bits(&v.ctrl) > 20 || v.bits(&v.data) > 20 {
        return Err(OracleError::Budget { budget });
    }
    let c = &v.c;
    let ctrl_vals = v.assignments(&v.ctrl);
    let data_vals = v.assignments(&v.data);

    let uninit: Vec<usize> = n
        .regs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.init == Init::Uninitialized)
        .map(|(i, _)| i)
        .collect();
    let init_bits: u32 = uninit.iter().map(|&i| n.regs[i].width).sum();
    if init_bits > 20 {
        return Err(OracleError::Budget { budget });
    }
    let mut initial = Vec::new();
    for combo in 0..(1u64 << init_bits) {
        let mut st: Vec<u64> = n
            .regs
            .iter()
            .map(|r| match r.init {
                Init::Value(x) => x,
                Init::Uninitialized => 0,
            })
            .collect();
        let mut rest = combo;
        for &i in &uninit {
            let w = n.regs[i].width;
            st[i] = rest & ((1u64 << w) - 1);
            rest >>= w;
        }
        let init = Rc::new(st.clone());
        initial.push(Member { state: st, init, path: None });
    }

    let mut seen: HashSet<Vec<Vec<u64>>> = HashSet::new();
    seen.insert(initial.iter().map(|m| m.state.clone()).collect());
    let mut frontier = vec![initial];
    let mut used: u64 = 0;
    let mut vals = vec![0u64; c.signals.len()];

    for cycle in 0..max_cycles {
        let mut next_frontier = Vec::new();
        for set in &frontier {
            for cv in &ctrl_vals {
                let mut first: Option<(Vec<u64>, &Member, Vec<u64>)> = None;
                let mut succ: BTreeMap<Vec<u64>, Member> = BTreeMap::new();
                for m in set {
                    for dv in &data_vals {
                        for (&id, &x) in c.regs.iter().zip(&m.state) {
                            vals[id] = x;
                        }
                        for (&id, &x) in v.ctrl.iter().zip(cv) {
                            vals[id] = x;
                        }
                        for (&id, &x) in v.data.iter().zip(dv) {
                            vals[id] = x;
                        }
                        if !v.legal(&mut vals) {
                            continue;
                        }
                        used += 1;
                        if used > budget {
                            return Err(OracleError::Budget { budget });
                        }
                        c.settle(&mut vals);
                        let y: Vec<u64> = v.y.iter().map(|&i| vals[i]).collect();
                        let frame: Vec<u64> = cv.iter().chain(dv).copied().collect();
                        match &first {
                            None => first = Some((y, m, frame.clone())),
                            Some((y0, m0, f0)) if *y0 != y => {
                                let k = y0.iter().zip(&y).position(|(a, b)| a != b).unwrap();
                                let mut pa = unwind(&m0.path);
                                pa.push(f0.clone());
                                let mut pb = unwind(&m.path);
                                pb.push(frame);
                                return Ok(OracleVerdict::Violation(Box::new(Witness {
                                    cycle,
                                    signal: c.name(v.y[k]).to_string(),
                                    a: v.stimulus(n, &m0.init, &pa),
                                    b: v.stimulus(n, &m.init, &pb),
                                })));
                            }
                            _ => {}
                        }
                        let nx = c.step(&vals);
                        succ.entry(nx).or_insert_with_key(|k| Member {
                            state: k.clone(),
                            init: m.init.clone(),
                            path: Some(Rc::new(Path {
                                parent: m.path.clone(),
                                frame,
                            })),
                        });
                    }
                }
                if succ.is_empty() {
                    continue;
                }
                let key: Vec<Vec<u64>> = succ.keys().cloned().collect();
                if seen.insert(key) {
                    next_frontier.push(succ.into_values().collect::<Vec<_>>());
                }
            }
        }
        if next_frontier.is_empty() {
            break;
        }
        frontier = next_frontier;
    }
    Ok(OracleVerdict::Do)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub trial: u64,
    pub cycle: usize,
    pub signal: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomReport {
    pub trials: u64,
    pub cycles: u64,
    pub divergences: Vec<Divergence>,
}

fn random_frame(v: &View, rng: &mut ChaCha8Rng, vals: &mut [u64], ctrl: Option<&[u64]>) -> Option<Vec<u64>> {
    for _ in 0..256 {
        let mut frame = Vec::with_capacity(v.ctrl.len() + v.data.len());
        for (k, &id) in v.ctrl.iter().chain(&v.data).enumerate() {
            let w = v.c.width(id);
            let mask = if w == 64 { u64::MAX } else { (1u64 << w) - 1 };
            let x = match ctrl {
                Some(cv) if k < v.ctrl.len() => cv[k],
                _ => rng.gen::<u64>() & mask,
            };
            vals[id] = x;
            frame.push(x);
        }
        if v.legal(vals) {
            return Some(frame);
        }
    }
    None
}

fn load(v: &View, vals: &mut [u64], state: &[u64], frame: &[u64]) {
    for (&id, &x) in v.c.regs.iter().zip(state) {
        vals[id] = x;
    }
    for (&id, &x) in v.ctrl.iter().chain(&v.data).zip(frame) {
        vals[id] = x;
    }
}

fn trial(v: &View, n: &Netlist, t: u64, horizon: usize, seed: u64) -> (u64, Option<Divergence>) {
    let c = &v.c;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ t.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut vals = vec![0u64; c.signals.len()];
    let mut state: Vec<u64> = n
        .regs
        .iter()
        .map(|r| match r.init {
            Init::Value(x) => x,
            Init::Uninitialized => rng.gen::<u64>() & ((1u128 << r.width) - 1) as u64,
        })
        .collect();
    let mut steps = 0;
    let prefix = rng.gen_range(0..=horizon);
    for _ in 0..prefix {
        let Some(frame) = random_frame(v, &mut rng, &mut vals, None) else { break };
        load(v, &mut vals, &state, &frame);
        c.settle(&mut vals);
        state = c.step(&vals);
        steps += 1;
    }
    let (mut sa, mut sb) = (state.clone(), state);
    for cycle in 0..horizon {
        let Some(fa) = random_frame(v, &mut rng, &mut vals, None) else { break };
        let cv = fa[..v.ctrl.len()].to_vec();
        let Some(fb) = random_frame(v, &mut rng, &mut vals, Some(&cv)) else { break };
        load(v, &mut vals, &sa, &fa);
        c.settle(&mut vals);
        let ya: Vec<u64> = v.y.iter().map(|&i| vals[i]).collect();
        sa = c.step(&vals);
        load(v, &mut vals, &sb, &fb);
        c.settle(&mut vals);
        let yb: Vec<u64> = v.y.iter().map(|&i| vals[i]).collect();
        sb = c.step(&vals);
        steps += 2;
        if let Some(k) = ya.iter().zip(&yb).position(|(a, b)| a != b) {
            return (
                steps,
                Some(Divergence {
                    trial: t,
                    cycle,
                    signal: c.name(v.y[k]).to_string(),
                }),
            );
        }
    }
    (steps, None)
}

/// Paired random simulation: each trial walks a random number of cycles
/// from reset with inputs satisfying `phi`, then runs two copies from the
/// reached state for `horizon` cycles with equal control inputs and
/// independent data inputs, comparing the control outputs.
pub fn oracle_random(
    n: &Netlist,
    phi: &[NamedExpr],
    trials: u64,
    horizon: usize,
    seed: u64,
) -> Result<RandomReport, OracleError> {
    let v = View::new(n, phi)?;
    let results: Vec<(u64, Option<Divergence>)> = (0..trials).into_par_iter().map(|t| trial(&v, n, t, horizon, seed)).collect();
    Ok(RandomReport {
        trials,
        cycles: results.iter().map(|r| r.0).sum(),
        divergences: results.into_iter().filter_map(|r| r.1).collect(),
    })
}
