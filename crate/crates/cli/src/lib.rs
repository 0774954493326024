//! Library side of the `icx` command-line tool: scenario configuration,
//! report formatting and the subcommand implementations. The binary in
//! `main.rs` is a thin argument-parsing shim over [`commands`].

pub mod commands;
pub mod config;
pub mod report;

/// Process exit codes used by the tool.
pub mod exit {
    pub const OK: u8 = 0;
    pub const RUNTIME: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const NOT_IC: u8 = 3;
    pub const NO_IDENTIFYING_STATISTIC: u8 = 4;
}
