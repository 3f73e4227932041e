//! Command implementations, configuration, and IO behind the `sdmixer`
//! binary, exposed as a library so integration tests can drive the same
//! code paths the executable uses.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod datasets;
pub mod report;
