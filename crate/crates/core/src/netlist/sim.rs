//! Reference cycle-accurate simulator.

use super::{compile::Compiled, mask, Init, Netlist};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InitPolicy {
    /// Every uninitialized register must be covered by the init override.
    #[default]
    Require,
    /// Uninitialized registers without an override start at zero.
    Zero,
}

/// Everything the simulator needs besides the netlist.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stimulus {
    /// Register values at cycle 0, overriding init values.
    pub init: BTreeMap<String, u64>,
    /// Input valuation per cycle; every input must be present every cycle.
    pub inputs: Vec<BTreeMap<String, u64>>,
    /// Box output valuation per cycle (global pin names).
    pub box_outputs: Vec<BTreeMap<String, u64>>,
    #[serde(default)]
    pub policy: InitPolicy,
}

/// Per-cycle values of every named signal. Registers hold the value entering
/// the cycle, all other signals the value during the cycle.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub length: usize,
    pub values: BTreeMap<String, Vec<u64>>,
}

impl Trace {
    pub fn get(&self, sig: &str, cycle: usize) -> Option<u64> {
        self.values.get(sig).and_then(|v| v.get(cycle)).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("cycle {cycle}: no value for input `{input}`")]
    MissingInput { cycle: usize, input: String },
    #[error("cycle {cycle}: no value for box output `{pin}`")]
    MissingBoxOutput { cycle: usize, pin: String },
    #[error("register `{0}` is uninitialized and has no init override")]
    MissingInit(String),
    #[error("value {value} does not fit `{signal}` ({width} bits)")]
    ValueTooWide { signal: String, width: u32, value: u64 },
    #[error("unknown signal `{0}` in stimulus")]
    UnknownSignal(String),
}

fn fit(name: &str, width: u32, value: u64) -> Result<u64, SimError> {
    if value & !mask(width) != 0 {
        Err(SimError::ValueTooWide {
            signal: name.to_string(),
            width,
            value,
        })
    } else {
        Ok(value)
    }
}

/// Runs `n` for `stim.inputs.len()` cycles.
pub fn simulate(n: &Netlist, stim: &Stimulus) -> Result<Trace, SimError> {
    let c = Compiled::new(n);
    simulate_compiled(n, &c, stim)
}

pub(crate) fn simulate_compiled(n: &Netlist, c: &Compiled, stim: &Stimulus) -> Result<Trace, SimError> {
    for name in stim.init.keys() {
        if n.reg(name).is_none() {
            return Err(SimError::UnknownSignal(name.clone()));
        }
    }
    let mut vals = vec![0u64; c.signals.len()];
    for (r, &id) in n.regs.iter().zip(&c.regs) {
        vals[id] = match (stim.init.get(&r.name), r.init, stim.policy) {
            (Some(v), _, _) => fit(&r.name, r.width, *v)?,
            (None, Init::Value(v), _) => v,
            (None, Init::Uninitialized, InitPolicy::Zero) => 0,
            (None, Init::Uninitialized, InitPolicy::Require) => return Err(SimError::MissingInit(r.name.clone())),
        };
    }
    let cycles = stim.inputs.len();
    let mut columns: Vec<Vec<u64>> = vec![Vec::with_capacity(cycles); c.signals.len()];
    for cycle in 0..cycles {
        let frame = &stim.inputs[cycle];
        for name in frame.keys() {
            if n.input(name).is_none() {
                return Err(SimError::UnknownSignal(name.clone()));
            }
        }
        for &id in &c.inputs {
            let s = &c.signals[id];
            let v = frame.get(&s.name).ok_or_else(|| SimError::MissingInput {
                cycle,
                input: s.name.clone(),
            })?;
            vals[id] = fit(&s.name, s.width, *v)?;
        }
        for &id in &c.box_outs {
            let s = &c.signals[id];
            let v = stim
                .box_outputs
                .get(cycle)
                .and_then(|f| f.get(&s.name))
                .ok_or_else(|| SimError::MissingBoxOutput {
                    cycle,
                    pin: s.name.clone(),
                })?;
            vals[id] = fit(&s.name, s.width, *v)?;
        }
        c.settle(&mut vals);
        for (id, col) in columns.iter_mut().enumerate() {
            col.push(vals[id]);
        }
        let next = c.step(&vals);
        for (&id, v) in c.regs.iter().zip(next) {
            vals[id] = v;
        }
    }
    let values = c
        .signals
        .iter()
        .zip(columns)
        .map(|(s, col)| (s.name.clone(), col))
        .collect();
    Ok(Trace { length: cycles, values })
}
