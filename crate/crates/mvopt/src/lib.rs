//! CSV/JSON IO and the `mvopt` command line for `mvopt-core`.

pub mod cli;
pub mod data;
pub mod report;
