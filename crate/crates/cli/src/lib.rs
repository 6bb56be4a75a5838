//! Command line and HTTP front ends of the dashboard generation engine.

pub mod commands;
pub mod server;
