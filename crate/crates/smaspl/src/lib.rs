//! File formats, a thread-pool executor and run orchestration around
//! [`smaspl_core`].

// `!(x >= 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod error;
pub mod executor;
pub mod log;
pub mod profiles;
pub mod report;
pub mod run;
pub mod scenario;
pub mod verify;

pub use error::RunError;
pub use executor::Workers;
