//! Formal checking of data-independent timing for synchronous hardware.

pub mod netlist;
pub mod miter;
pub mod sat;
pub mod engine;
pub mod driver;
pub mod fixtures;
