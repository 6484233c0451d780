//! File formats, twin experiments, the end-to-end pipeline and the command
//! line for `cropcast-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod stages;
pub mod twin;

pub use error::{Error, Result};
