//! Switched-linear visual foresight for pushing piles of small objects.
//!
//! The crate learns per-push-length linear maps between vectorized
//! grayscale images, predicts the outcome of a push through a canonical
//! pose-normalizing warp, and drives a greedy controller that minimizes an
//! image-space Lyapunov function. A quasi-static pushing simulator provides
//! ground-truth transitions for training and closed-loop evaluation.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the simulator
//! and the command harness run in `f64`. Concrete aliases for the common
//! instantiations are re-exported at the crate root.

// `!(x >= lo)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod closed_loop;
pub mod control;
pub mod error;
pub mod foresight;
pub mod geometry;
pub mod harness;
pub mod imaging;
mod linalg;
pub mod lsq;
pub mod scalar;
pub mod simulator;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision image.
pub type Image64 = imaging::Image<f64>;
/// Single-precision image.
pub type Image32 = imaging::Image<f32>;
pub type VecImage64 = imaging::VecImage<f64>;
pub type Grid64 = imaging::Grid<f64>;

pub type Action64 = geometry::Action<f64>;
pub type Action32 = geometry::Action<f32>;
pub type AffineMap64 = geometry::AffineMap<f64>;
pub type PushRectangle64 = geometry::PushRectangle<f64>;

pub type PairedDataset64 = lsq::PairedDataset<f64>;
pub type PairedDataset32 = lsq::PairedDataset<f32>;
pub type TransitionMatrix64 = lsq::TransitionMatrix<f64>;
pub type TransitionMatrix32 = lsq::TransitionMatrix<f32>;
pub type SolverConfig64 = lsq::SolverConfig<f64>;

pub type SwitchedLinearModel64 = foresight::SwitchedLinearModel<f64>;
pub type SwitchedLinearModel32 = foresight::SwitchedLinearModel<f32>;
pub type ParticleSet64 = foresight::ParticleSet<f64>;

pub type DistanceField64 = control::DistanceField<f64>;
pub type ActionGrid64 = control::ActionGrid<f64>;
