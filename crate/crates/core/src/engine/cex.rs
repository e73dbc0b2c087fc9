use super::encode::{Encoded, Goal, Prepared, Target};
use super::DiffKind;
use crate::miter::Instance;
use crate::netlist::{simulate, InitPolicy, Netlist, SigKind, Stimulus};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

static REPLAYED: AtomicU64 = AtomicU64::new(0);
static REPLAY_FAILED: AtomicU64 = AtomicU64::new(0);

/// Counterexamples replayed by the engine in this process, and how many of
/// them failed to reproduce.
pub fn replay_counters() -> (u64, u64) {
    (REPLAYED.load(Ordering::Relaxed), REPLAY_FAILED.load(Ordering::Relaxed))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diff {
    pub loc: String,
    pub cycle: usize,
    pub kind: DiffKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instances {
    #[serde(rename = "A")]
    pub a: BTreeMap<String, Vec<u64>>,
    #[serde(rename = "B")]
    pub b: BTreeMap<String, Vec<u64>>,
}

impl Instances {
    pub fn get(&self, inst: Instance) -> &BTreeMap<String, Vec<u64>> {
        match inst {
            Instance::A => &self.a,
            Instance::B => &self.b,
        }
    }
}

/// A two-instance trace witnessing a failed obligation. Registers hold the
/// value entering each cycle, so cycle 0 register values and the per-cycle
/// inputs and box outputs are everything replay needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub design: String,
    pub obligation: String,
    /// Window length in cycles.
    pub k: usize,
    pub instances: Instances,
    pub diffs: Vec<Diff>,
}

impl Counterexample {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("counterexample serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Diffs at the smallest cycle that has any.
    pub fn earliest(&self) -> Vec<&Diff> {
        let Some(c) = self.diffs.iter().map(|d| d.cycle).min() else { return vec![] };
        self.diffs.iter().filter(|d| d.cycle == c).collect()
    }

    /// Stimulus reproducing instance `inst` on the design.
    pub fn stimulus(&self, n: &Netlist, inst: Instance) -> Option<Stimulus> {
        let vals = self.instances.get(inst);
        let at = |s: &str, c: usize| vals.get(s).and_then(|v| v.get(c)).copied();
        let mut stim = Stimulus {
            policy: InitPolicy::Require,
            ..Default::default()
        };
        for r in &n.regs {
            stim.init.insert(r.name.clone(), at(&r.name, 0)?);
        }
        for c in 0..self.k {
            let mut inp = BTreeMap::new();
            for p in &n.inputs {
                inp.insert(p.name.clone(), at(&p.name, c)?);
            }
            stim.inputs.push(inp);
            let mut bo = BTreeMap::new();
            for b in &n.boxes {
                for o in &b.outputs {
                    let pin = b.pin(&o.name);
                    bo.insert(pin.clone(), at(&pin, c)?);
                }
            }
            stim.box_outputs.push(bo);
        }
        Some(stim)
    }
}

/// Re-simulates both instances from the recorded initial state, inputs and
/// box outputs. True iff every recorded value is reproduced bit-exactly and
/// every non-invariant diff is a real difference.
pub fn replay_cex(n: &Netlist, cex: &Counterexample) -> bool {
    for inst in [Instance::A, Instance::B] {
        let Some(stim) = cex.stimulus(n, inst) else { return false };
        let Ok(trace) = simulate(n, &stim) else { return false };
        for (sig, vals) in cex.instances.get(inst) {
            let Some(sim) = trace.values.get(sig) else { return false };
            if sim.len() < vals.len() || sim[..vals.len()] != vals[..] {
                return false;
            }
        }
    }
    cex.diffs.iter().all(|d| {
        d.kind == DiffKind::Invariant || {
            let a = cex.instances.a.get(&d.loc).and_then(|v| v.get(d.cycle));
            let b = cex.instances.b.get(&d.loc).and_then(|v| v.get(d.cycle));
            a.is_some() && b.is_some() && a != b
        }
    })
}

pub(crate) fn record_replay(ok: bool) {
    REPLAYED.fetch_add(1, Ordering::Relaxed);
    if !ok {
        REPLAY_FAILED.fetch_add(1, Ordering::Relaxed);
    }
}

/// Decodes a satisfying assignment into a counterexample. Returns the
/// counterexample and the goals that actually failed in it.
pub(crate) fn extract(p: &Prepared, enc: &Encoded, model: &[bool], goals: &[Goal], label: &str) -> (Counterexample, Vec<Goal>) {
    let frames = enc.frames.len();
    let mut inst_vals = [BTreeMap::new(), BTreeMap::new()];
    for (k, inst) in [Instance::A, Instance::B].into_iter().enumerate() {
        for s in &p.base.signals {
            let ids = p.word_bits(inst, &s.name);
            let mut col = Vec::with_capacity(frames);
            for fv in &enc.frames {
                let mut v = 0u64;
                for (i, &id) in ids.iter().enumerate() {
                    if fv[id].eval(model) {
                        v |= 1 << i;
                    }
                }
                col.push(v);
            }
            inst_vals[k].insert(s.name.clone(), col);
        }
    }
    let [a, b] = inst_vals;

    let mut failed = Vec::new();
    for g in goals {
        let fails = match &g.target {
            Target::Pair(sig) => a[sig][g.frame] != b[sig][g.frame],
            Target::Invariant(name) => [Instance::A, Instance::B].iter().any(|&inst| {
                let id = p.word_bits(inst, &format!("{}{name}", super::encode::INV_PREFIX))[0];
                !enc.frames[g.frame][id].eval(model)
            }),
        };
        if fails {
            failed.push(g.clone());
        }
    }
    let rank = |loc: &str| p.base.id(loc).map(|id| p.base.topo_rank[id]).unwrap_or(usize::MAX);
    failed.sort_by(|x, y| (x.frame, rank(&x.loc), &x.loc).cmp(&(y.frame, rank(&y.loc), &y.loc)));
    failed.dedup_by(|x, y| x.frame == y.frame && x.loc == y.loc);
    let diffs = failed
        .iter()
        .map(|g| Diff {
            loc: g.loc.clone(),
            cycle: g.frame,
            kind: g.kind,
        })
        .collect();
    let cex = Counterexample {
        design: p.m.base.name.clone(),
        obligation: label.to_string(),
        k: frames,
        instances: Instances { a, b },
        diffs,
    };
    (cex, failed)
}

/// Signals shown when a counterexample is summarized: ports, registers and
/// box pins, without internal wires.
pub fn interface_signals(n: &Netlist) -> Vec<String> {
    let c = crate::netlist::Compiled::new(n);
    c.signals
        .iter()
        .filter(|s| !matches!(s.kind, SigKind::Wire))
        .map(|s| s.name.clone())
        .collect()
}
