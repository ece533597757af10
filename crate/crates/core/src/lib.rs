//! Simulation engine for magnetometer-grid tactile skin.
//!
//! The pipeline runs object point clouds through per-taxel penetration
//! queries ([`geometry`]), turns penetration sums and object twist into
//! continuous and thresholded 3-axis taxel signals ([`sensor`]), and drives
//! scripted kinematic episodes over a palm-mounted grid ([`scene`]).
//! Recorded hardware streams are binarized with the dual-buffer derivative
//! rule in [`binarizer`]. Episode traces are scored with the in-hand
//! translation reward and task metrics ([`reward`]) and inspected with
//! phase-portrait / Poincaré-section tools ([`analysis`]).

// `!(x > 0.0)` is used on purpose so NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod analysis;
pub mod batch;
pub mod binarizer;
mod error;
pub mod geometry;
pub mod reward;
pub mod scene;
pub mod sensor;

pub use error::{Error, Result};
pub use geometry::{ObjectModel, ObjectState, PenetrationResult, TaxelGrid, TaxelSpec, Vec3};
pub use sensor::{Modality, RawSignal, TernarySignal, ThresholdConfig};

/// Number of actuated joints on the hand (four fingers, four joints each).
pub const NUM_JOINTS: usize = 16;
/// Number of fingertips reporting contact force.
pub const NUM_FINGERS: usize = 4;
