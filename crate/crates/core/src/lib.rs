//! Passive channel charting on a simulated UWB mesh.
//!
//! The crate is organized along the processing chain:
//!
//! * [`mesh`] synthesizes multistatic channel impulse responses for a static
//!   mesh while a point target walks through the room.
//! * [`motion`] generates ground-truth walks and drift-corrupted velocity
//!   estimates that stand in for a pedestrian dead reckoning system.
//! * [`distgraph`] integrates velocities over bounded windows into a sparse,
//!   banded distance matrix and samples training pairs from it.
//! * [`chartnet`] holds the residual convolutional network, the distance and
//!   fingerprinting losses, hand-written reverse-mode gradients and the AdamW
//!   training loops.
//! * [`align`] fits the chart-to-world affine map from a few anchors and
//!   computes MAE / CE90.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod chartnet;
pub mod distgraph;
pub mod error;
pub mod geom;
pub mod mesh;
pub mod motion;

pub use align::{AffineTransform, Metrics};
pub use chartnet::{ArchSpec, HyperParams, ModelParams};
pub use distgraph::SparseDistanceMatrix;
pub use error::{Error, Result};
pub use geom::{Rect, Vec2, Vec3};
pub use mesh::{ChannelModel, CirFrame, Link, LinkSelection, MeshLayout, Node, Role};
pub use motion::{DriftParams, TrajectorySample, VelocityTrack};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default CIR / trajectory sampling rate, Hz.
pub const DEFAULT_RATE_HZ: f64 = 40.0;
