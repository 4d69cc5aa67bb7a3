use crate::error::{Error, Result};

/// A coordinate triple in model units.
pub type Point3 = [f64; 3];

/// Squared Euclidean distance, accumulated as `(dx² + dy²) + dz²`.
#[inline]
pub fn squared_distance(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn distance(a: &Point3, b: &Point3) -> f64 {
    squared_distance(a, b).sqrt()
}

pub(crate) fn check_finite(p: &Point3) -> Result<()> {
    if p.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidCoordinate(format!("{p:?}")))
    }
}

/// One frame of a sequence: an ordered, nonempty list of finite points.
///
/// Index `k` refers to the same physical point for the lifetime of the cloud;
/// no operation in this crate reorders points.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    frame_index: usize,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, frame_index: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        points.iter().try_for_each(check_finite)?;
        Ok(PointCloud { points, frame_index })
    }

    /// Builds a cloud from a flat `x0 y0 z0 x1 y1 z1 ...` buffer.
    pub fn from_flat(coords: &[f64], frame_index: usize) -> Result<Self> {
        if !coords.len().is_multiple_of(3) {
            return Err(Error::Shape(format!(
                "flat coordinate buffer length {} is not a multiple of 3",
                coords.len()
            )));
        }
        let points = coords.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        PointCloud::new(points, frame_index)
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn with_frame_index(mut self, frame_index: usize) -> Self {
        self.frame_index = frame_index;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with collections.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translated(&self, offset: Point3) -> PointCloud {
        let points = self
            .points
            .iter()
            .map(|p| [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]])
            .collect();
        PointCloud {
            points,
            frame_index: self.frame_index,
        }
    }

    /// Keeps the points at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<PointCloud> {
        let points = indices
            .iter()
            .map(|&i| {
                self.points
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::Shape(format!("index {i} out of range for cloud of {}", self.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        PointCloud::new(points, self.frame_index)
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn bounds(&self) -> (Point3, Point3) {
        bounds_of(self.points.iter())
    }
}

pub(crate) fn bounds_of<'a>(points: impl Iterator<Item = &'a Point3>) -> (Point3, Point3) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(matches!(PointCloud::new(vec![], 0), Err(Error::EmptyCloud)));
        assert!(matches!(
            PointCloud::new(vec![[0.0, f64::NAN, 0.0]], 0),
            Err(Error::InvalidCoordinate(_))
        ));
        assert!(matches!(
            PointCloud::new(vec![[f64::INFINITY, 0.0, 0.0]], 0),
            Err(Error::InvalidCoordinate(_))
        ));
    }

    #[test]
    fn flat_buffer_round_trip() {
        let c = PointCloud::from_flat(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3).unwrap();
        assert_eq!(c.points(), &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(c.frame_index(), 3);
        assert!(PointCloud::from_flat(&[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn select_keeps_requested_order() {
        let c = PointCloud::new(vec![[0.0; 3], [1.0; 3], [2.0; 3]], 0).unwrap();
        let s = c.select(&[2, 0]).unwrap();
        assert_eq!(s.points(), &[[2.0; 3], [0.0; 3]]);
        assert!(c.select(&[3]).is_err());
    }
}
