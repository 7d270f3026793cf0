//! Files, configuration and the command-line runner on top of
//! [`roughkit_core`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod formats;
pub mod parallel;

pub use cli::{run, run_with};
pub use parallel::Parallel;
