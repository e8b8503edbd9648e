//! Std companion of `buildnet-core`: artifact files, the decision service
//! and its reference client, and the `buildnet` command line.

pub mod cli;
pub mod client;
pub mod files;
pub mod parallel;
pub mod protocol;
pub mod report;
pub mod server;
