//! Command-line front end and HTTP session service for `ditcheck`.

pub mod app;
pub mod report;
pub mod server;
pub mod stimuli;

pub use app::run;
