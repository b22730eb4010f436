#![no_std]
// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod dataset;
pub mod error;
pub mod field;
pub mod fmath;
pub mod hodmd;
pub mod linalg;
pub mod metrics;
pub mod neural;
pub mod synth;

pub use error::{Error, Result};
