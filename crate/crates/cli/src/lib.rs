//! Library surface of the command-line front end, so integration tests can
//! drive the commands in-process.

pub mod commands;
pub mod config;
