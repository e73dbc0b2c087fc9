use super::{Init, Netlist};
use std::fmt::Write;

/// Renders a netlist in the canonical text format accepted by
/// [`parse_netlist`](super::parse_netlist).
pub fn pretty_print(n: &Netlist) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "module {}", n.name);
    for p in &n.inputs {
        let _ = writeln!(s, "  input {} {} {}", p.name, p.width, p.role);
    }
    for p in &n.outputs {
        let _ = writeln!(s, "  output {} {} {}", p.name, p.width, p.role);
    }
    for r in &n.regs {
        match r.init {
            Init::Value(v) => {
                let _ = writeln!(s, "  reg {} {} init {}", r.name, r.width, v);
            }
            Init::Uninitialized => {
                let _ = writeln!(s, "  reg {} {} init X", r.name, r.width);
            }
        }
    }
    for b in &n.boxes {
        let _ = write!(s, "  box {} in (", b.name);
        for i in &b.inputs {
            let _ = write!(s, " ({} {} {})", i.name, i.expr, i.role);
        }
        s.push_str(" ) out (");
        for o in &b.outputs {
            let _ = write!(s, " ({} {} {})", o.name, o.width, o.role);
        }
        s.push_str(" )\n");
    }
    for w in &n.wires {
        let _ = writeln!(s, "  wire {} {} = {}", w.name, w.width, w.expr);
    }
    for (r, e) in &n.next_fns {
        let _ = writeln!(s, "  next {r} = {e}");
    }
    for (o, e) in &n.drive_fns {
        let _ = writeln!(s, "  drive {o} = {e}");
    }
    for o in &n.observations {
        let _ = writeln!(s, "  observe {o}");
    }
    s.push_str("endmodule\n");
    s
}
