//! Unsupervised tracking of deforming point-cloud sequences.
//!
//! Each frame of a sequence owns a learnable latent state. A first-order
//! temporal recurrence mixes those states into per-frame correspondence
//! descriptors, and a shared MLP decoder maps every point (concatenated with
//! its frame's descriptor) to a displacement toward the next frame. The
//! decoder, the states and the mixing weight are fit jointly against a
//! two-way Chamfer loss; dense correspondences are then read off by
//! nearest-neighbour matching of the displaced cloud against the next frame.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: point clouds, exact nearest-neighbour search, Chamfer
//!   distance and its gradient, correspondence extraction, text formats.
//! * [`diffnet`]: a small dense network with an analytic backward pass.
//! * [`tcd`]: latent state banks and the descriptor recurrence.
//! * [`flow`]: the displacement decoder built on [`diffnet`].
//! * [`optim`]: Adam, the joint training loop and checkpoints.
//! * [`infer`]: frozen-decoder latent fitting, tracking and forecasting.
//! * [`synmotion`]: procedural deforming sequences with exact ground truth.
//! * [`eval`]: Chamfer, correspondence error and matching-accuracy curves.
//! * [`cli`]: the `tcdtrack` command-line front end.

pub mod cli;
pub mod diffnet;
pub mod error;
pub mod eval;
pub mod flow;
pub mod geometry;
pub mod infer;
pub mod optim;
pub mod synmotion;
pub mod tcd;

pub use error::{Error, Result};
pub use geometry::{CorrespondenceMap, NeighborIndex, Point3, PointCloud};
