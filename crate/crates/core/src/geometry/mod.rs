//! Point clouds, exact nearest-neighbour search and the two-way Chamfer
//! distance used as the only training signal.

mod chamfer;
mod cloud;
mod correspondence;
pub mod io;
mod kdtree;

pub use chamfer::{chamfer, chamfer_gradient, chamfer_with_index, ChamferEval};
pub use cloud::{distance, squared_distance, Point3, PointCloud};
pub use correspondence::{extract_correspondence, extract_correspondence_with_index, CorrespondenceMap};
pub use kdtree::{build_index, NeighborIndex};

pub(crate) use cloud::bounds_of as cloud_bounds;
