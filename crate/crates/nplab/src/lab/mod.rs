//! Scenario runner: declarative TOML configs, refinement ladders, checks and artifacts.

mod config;
mod run;
mod scenarios;

pub use config::*;
pub use run::*;
pub use scenarios::*;
