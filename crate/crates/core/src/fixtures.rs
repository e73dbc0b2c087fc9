//! Reference designs with their decision-rule files.

use crate::miter::{parse_sidecar, Sidecar};
use crate::netlist::{parse_netlist, Netlist};

pub struct Fixture {
    pub name: &'static str,
    pub netlist: &'static str,
    pub rules: &'static str,
}

macro_rules! fixture {
    ($name:literal, $rules:literal) => {
        Fixture {
            name: $name,
            netlist: include_str!(concat!("../fixtures/", $name, ".nl")),
            rules: include_str!(concat!("../fixtures/", $rules, ".rules")),
        }
    };
}

pub const ALL: &[Fixture] = &[
    fixture!("fx_pass", "fx_pass"),
    fixture!("fx_ct_alu", "fx_ct_alu"),
    fixture!("fx_mul_zeroskip", "fx_mul_zeroskip"),
    fixture!("fx_serial_shift", "fx_serial_shift"),
    fixture!("fx_div_early", "fx_div_early"),
    fixture!("fx_sha_like", "fx_sha_like"),
    fixture!("fx_rounds8", "fx_rounds8"),
    fixture!("fx_tiny_cpu", "fx_tiny_cpu"),
    fixture!("fx_tiny_cpu_flat", "fx_tiny_cpu"),
    fixture!("fx_uninit_ctrl", "fx_uninit_ctrl"),
    fixture!("fx_comb_leak", "fx_comb_leak"),
    fixture!("fx_bb_leak", "fx_bb_leak"),
    fixture!("fx_bb_leak_flat", "fx_bb_leak_flat"),
];

/// Alternative rule files, keyed by file stem.
pub const EXTRA_RULES: &[(&str, &str)] = &[
    ("fx_div_early_phi", include_str!("../fixtures/fx_div_early_phi.rules")),
    ("fx_tiny_cpu_nophi", include_str!("../fixtures/fx_tiny_cpu_nophi.rules")),
];

pub fn get(name: &str) -> Option<&'static Fixture> {
    ALL.iter().find(|f| f.name == name)
}

impl Fixture {
    pub fn parse(&self) -> Netlist {
        parse_netlist(self.netlist).unwrap_or_else(|e| panic!("fixture {}: {e}", self.name))
    }

    pub fn sidecar(&self) -> Sidecar {
        parse_sidecar(self.rules).unwrap_or_else(|e| panic!("rules of {}: {e}", self.name))
    }
}

pub fn extra_rules(stem: &str) -> Option<Sidecar> {
    EXTRA_RULES
        .iter()
        .find(|(n, _)| *n == stem)
        .map(|(n, t)| parse_sidecar(t).unwrap_or_else(|e| panic!("{n}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixtures_parse() {
        for f in ALL {
            f.parse();
            f.sidecar();
        }
        for (n, _) in EXTRA_RULES {
            extra_rules(n).unwrap();
        }
    }
}
