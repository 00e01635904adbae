//! Std companion to `fflab-core`: edge-list and script files, parallel
//! Monte-Carlo drivers, JSON/CSV reports and the `fflab` command line.

pub mod cli;
pub mod experiment;
pub mod io;
pub mod report;
pub mod setup;
