//! Stimuli files for `simulate`.
//!
//! ```text
//! # comment
//! init busy=0
//! cycle 0 start=1 a=3 b=5
//! cycle 4 start=0
//! cycles 8
//! ```
//!
//! An input keeps its value until a later `cycle` line changes it and
//! starts at 0. Box outputs are set the same way by their `box.pin` name.

use ditcheck::netlist::{InitPolicy, Netlist, Stimulus};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StimuliError {
    pub line: usize,
    pub msg: String,
}

impl std::fmt::Display for StimuliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.msg)
    }
}

impl std::error::Error for StimuliError {}

fn assignments(words: &[&str], line: usize) -> Result<Vec<(String, u64)>, StimuliError> {
    words
        .iter()
        .map(|w| {
            let (k, v) = w.split_once('=').ok_or_else(|| StimuliError {
                line,
                msg: format!("expected `name=value`, found `{w}`"),
            })?;
            let v = parse_uint(v).ok_or_else(|| StimuliError {
                line,
                msg: format!("`{v}` is not an unsigned integer"),
            })?;
            Ok((k.to_string(), v))
        })
        .collect()
}

fn parse_uint(s: &str) -> Option<u64> {
    if let Some(h) = s.strip_prefix("0x") {
        u64::from_str_radix(h, 16).ok()
    } else if let Some(b) = s.strip_prefix("0b") {
        u64::from_str_radix(b, 2).ok()
    } else {
        s.parse().ok()
    }
}

pub fn parse_stimuli(text: &str, n: &Netlist) -> Result<Stimulus, StimuliError> {
    let box_pins: Vec<String> = n
        .boxes
        .iter()
        .flat_map(|b| b.outputs.iter().map(|o| b.pin(&o.name)))
        .collect();
    let mut init = BTreeMap::new();
    let mut changes: BTreeMap<usize, Vec<(String, u64)>> = BTreeMap::new();
    let mut length = 0;
    let mut last_cycle = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        let words: Vec<&str> = body.split_whitespace().collect();
        let err = |msg: String| StimuliError { line, msg };
        match words.as_slice() {
            [] => {}
            ["init", rest @ ..] => {
                for (k, v) in assignments(rest, line)? {
                    if n.reg(&k).is_none() {
                        return Err(err(format!("`{k}` is not a register")));
                    }
                    init.insert(k, v);
                }
            }
            ["cycle", c, rest @ ..] => {
                let c: usize = c.parse().map_err(|_| err(format!("bad cycle number `{c}`")))?;
                if last_cycle.is_some_and(|l| c <= l) {
                    return Err(err(format!("cycle {c} is not after the previous cycle line")));
                }
                last_cycle = Some(c);
                let a = assignments(rest, line)?;
                for (k, _) in &a {
                    if n.input(k).is_none() && !box_pins.contains(k) {
                        return Err(err(format!("`{k}` is neither an input nor a box output")));
                    }
                }
                changes.insert(c, a);
                length = length.max(c + 1);
            }
            ["cycles", c] => {
                length = length.max(c.parse().map_err(|_| err(format!("bad cycle count `{c}`")))?);
            }
            _ => return Err(err(format!("cannot parse `{body}`"))),
        }
    }
    let mut cur: BTreeMap<String, u64> = n.inputs.iter().map(|p| (p.name.clone(), 0)).collect();
    let mut cur_box: BTreeMap<String, u64> = box_pins.iter().map(|p| (p.clone(), 0)).collect();
    let mut stim = Stimulus {
        init,
        policy: InitPolicy::Zero,
        ..Default::default()
    };
    for c in 0..length {
        for (k, v) in changes.get(&c).into_iter().flatten() {
            if let Some(slot) = cur.get_mut(k) {
                *slot = *v;
            } else {
                cur_box.insert(k.clone(), *v);
            }
        }
        stim.inputs.push(cur.clone());
        stim.box_outputs.push(cur_box.clone());
    }
    Ok(stim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ditcheck::netlist::parse_netlist;

    #[test]
    fn values_hold_between_cycle_lines() {
        let n = parse_netlist("module m\n input a 4 data\n input s 1 control\n output y 4 data\n drive y = a\nendmodule").unwrap();
        let s = parse_stimuli("cycle 0 a=3 s=1\ncycle 2 a=0x5\ncycles 4\n", &n).unwrap();
        let a: Vec<u64> = s.inputs.iter().map(|f| f["a"]).collect();
        assert_eq!(a, vec![3, 3, 5, 5]);
        assert_eq!(s.inputs[3]["s"], 1);
    }

    #[test]
    fn rejects_unknown_names() {
        let n = parse_netlist("module m\n input a 4 data\nendmodule").unwrap();
        assert_eq!(parse_stimuli("\ncycle 0 b=1\n", &n).unwrap_err().line, 2);
        assert!(parse_stimuli("cycle 1 a=1\ncycle 0 a=2\n", &n).is_err());
    }
}
