//! Crop growth state-space surrogate, ensemble/variational LAI assimilation,
//! vegetation-index analytics and yield regression.
//!
//! The crate is `no_std` (it needs `alloc`) so the numerical core can be
//! embedded anywhere; file formats, the command line and the experiment
//! harness live in the companion `cropcast` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod assimilation;
pub mod crop_model;
pub mod error;
pub mod forecaster;
pub mod metrics;
pub mod observation;
pub mod remote_sensing;
pub mod rng;
pub mod tuning;

pub use error::{Error, Result};
