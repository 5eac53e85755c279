//! Control-based continuation of equilibrium branches for black-box
//! systems: controllability tests, non-invasive feedback laws, fixed-step
//! simulation, test systems and branch tracking.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod continuation;
pub mod dynsys;
pub mod error;
pub mod export;
pub mod feedback;
pub mod linalg;
pub mod normalforms;

pub use error::{Error, Result};
