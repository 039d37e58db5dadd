//! Command-line front end for the teleportation simulator: configuration,
//! the six run modes and their CSV / JSON result files.

pub mod config;
pub mod modes;
pub mod output;

pub use config::{parse_config, Cli, ConfigError, ConfigParseError, Format, Mode, RunConfig, ValidationError};
pub use modes::{run, Check, Report, RunError};
pub use output::{format_real, Cell, Table};
