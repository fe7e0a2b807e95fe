//! File formats, a synthetic evaluation world with a known friendship graph,
//! and the attack/defense experiment runner behind the `trajsoc` tool.

pub mod cli;
pub mod experiment;
pub mod io;
pub mod report;
pub mod world;
