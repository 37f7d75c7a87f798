#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Safe multi-agent policy learning for networked microgrid dispatch.
//!
//! The crate is `no_std` with `alloc`. File formats, threads and the
//! command line live in the `smaspl` crate.

extern crate alloc;

pub mod grid;
pub mod linalg;
pub mod powerflow;
pub mod mg;
pub mod constraints;
pub mod net;
pub mod gaussian;
pub mod policy;
pub mod sensitivity;
pub mod env;
pub mod gradient;
pub mod networks;
pub mod exec;
pub mod consensus;
pub mod projection;
pub mod trainer;
pub mod scenario;
pub mod oracle;
