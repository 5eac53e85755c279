//! Social-force crowd in a corridor with a movable triangular obstacle.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod crowd;
pub mod flux;
pub mod forces;
pub mod geometry;
pub mod params;

pub use crowd::CrowdSystem;
pub use geometry::Vec2;
pub use params::{FluxParams, InputBox, PedParams};

#[derive(Debug, thiserror::Error)]
pub enum PedError {
    #[error("pedestrian sits exactly on the target point")]
    AtTarget,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
