//! Command-line front end: problem files in, CSV curves and reports out.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod expr;

pub use commands::{run, CliError};
