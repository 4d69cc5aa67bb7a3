use super::cloud::{Point3, PointCloud};
use super::kdtree::{build_index, NeighborIndex};
use crate::error::Result;

/// Value and gradient of the two-way Chamfer distance between a moving
/// cloud `a` and a fixed cloud `b`.
#[derive(Debug, Clone)]
pub struct ChamferEval {
    pub value: f64,
    /// d value / d a[k], one entry per point of `a`.
    pub gradient: Vec<Point3>,
    /// For each point of `a`, the index of its nearest point in `b`.
    pub forward_match: Vec<usize>,
    /// For each point of `b`, the index of its nearest point in `a`.
    pub backward_match: Vec<usize>,
}

/// Two-way average nearest-neighbour distance (un-squared norms):
///
/// `(1/|a|) Σ_{x∈a} min_{y∈b} ‖x−y‖ + (1/|b|) Σ_{y∈b} min_{x∈a} ‖y−x‖`.
///
/// Every reduction runs in point-index order.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let a_index = build_index(a);
    let b_index = build_index(b);
    let forward = mean_nearest(a, &b_index);
    let backward = mean_nearest(b, &a_index);
    Ok(forward + backward)
}

fn mean_nearest(queries: &PointCloud, index: &NeighborIndex) -> f64 {
    let mut sum = 0.0;
    for q in queries.points() {
        sum += index.nearest_squared(q).1.sqrt();
    }
    sum / queries.len() as f64
}

/// Gradient of [`chamfer`] with respect to the coordinates of `a`.
///
/// Nearest-neighbour assignments are held at their current values, which is
/// the exact gradient away from assignment switches. Pairs at zero distance
/// contribute the zero vector.
pub fn chamfer_gradient(a: &PointCloud, b: &PointCloud) -> Result<Vec<Point3>> {
    Ok(chamfer_with_index(a, b, &build_index(b)).gradient)
}

/// Chamfer value and gradient w.r.t. `a`, reusing a prebuilt index over `b`.
///
/// `b_index` must have been built from `b`.
pub fn chamfer_with_index(a: &PointCloud, b: &PointCloud, b_index: &NeighborIndex) -> ChamferEval {
    debug_assert_eq!(b_index.len(), b.len());
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let mut gradient = vec![[0.0; 3]; a.len()];
    let mut forward_match = Vec::with_capacity(a.len());

    let mut forward = 0.0;
    for (k, x) in a.points().iter().enumerate() {
        let (j, d2) = b_index.nearest_squared(x);
        let d = d2.sqrt();
        forward += d;
        forward_match.push(j);
        if d > 0.0 {
            let y = &b.points()[j];
            let scale = 1.0 / (na * d);
            for c in 0..3 {
                gradient[k][c] += (x[c] - y[c]) * scale;
            }
        }
    }

    let a_index = build_index(a);
    let mut backward = 0.0;
    let mut backward_match = Vec::with_capacity(b.len());
    for y in b.points() {
        let (k, d2) = a_index.nearest_squared(y);
        backward_match.push(k);
        let d = d2.sqrt();
        backward += d;
        if d > 0.0 {
            let x = &a.points()[k];
            let scale = 1.0 / (nb * d);
            for c in 0..3 {
                gradient[k][c] += (x[c] - y[c]) * scale;
            }
        }
    }

    ChamferEval {
        value: forward / na + backward / nb,
        gradient,
        forward_match,
        backward_match,
    }
}
