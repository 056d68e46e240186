//! Library surface of the skyfade command-line front end.
//!
//! The binary in `main.rs` is a thin argument-parsing shell over these
//! modules; integration tests drive the same entry points directly.

pub mod config;
pub mod run;
