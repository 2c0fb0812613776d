//! Configuration, task dispatch and CSV output for the `dicke` tool.

pub mod config;
pub mod error;
pub mod table;
pub mod tasks;

pub use config::{RawConfig, RunConfig, Task};
pub use error::CliError;
pub use table::{Cell, ResultTable, Row};
pub use tasks::run;
