use super::cloud::PointCloud;
use super::kdtree::{build_index, NeighborIndex};
use crate::error::{Error, Result};

/// Dense matching from the points of a source frame into a target frame.
///
/// `matches[k]` is the target index matched to source point `k`. Many-to-one
/// matches are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrespondenceMap {
    pub source_frame: usize,
    pub target_frame: usize,
    pub matches: Vec<usize>,
}

impl CorrespondenceMap {
    pub fn new(source_frame: usize, target_frame: usize, matches: Vec<usize>) -> Self {
        CorrespondenceMap {
            source_frame,
            target_frame,
            matches,
        }
    }

    pub fn identity(source_frame: usize, target_frame: usize, n: usize) -> Self {
        CorrespondenceMap::new(source_frame, target_frame, (0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// Checks every entry indexes into a target of `target_len` points.
    pub fn validate(&self, target_len: usize) -> Result<()> {
        match self.matches.iter().position(|&m| m >= target_len) {
            Some(k) => Err(Error::Shape(format!(
                "match {k} -> {} out of range for target of {target_len} points",
                self.matches[k]
            ))),
            None => Ok(()),
        }
    }
}

/// Matches every point of `transformed` to its nearest point in `target`.
pub fn extract_correspondence(transformed: &PointCloud, target: &PointCloud) -> Result<CorrespondenceMap> {
    Ok(extract_correspondence_with_index(
        transformed,
        target,
        &build_index(target),
    ))
}

pub fn extract_correspondence_with_index(
    transformed: &PointCloud,
    target: &PointCloud,
    target_index: &NeighborIndex,
) -> CorrespondenceMap {
    let matches = transformed
        .points()
        .iter()
        .map(|p| target_index.nearest_squared(p).0)
        .collect();
    CorrespondenceMap::new(transformed.frame_index(), target.frame_index(), matches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn grid(n: usize) -> Vec<[f64; 3]> {
        let mut pts = Vec::new();
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    pts.push([x as f64, y as f64, z as f64]);
                }
            }
        }
        pts
    }

    #[test]
    fn identical_order_gives_identity() {
        let c = PointCloud::new(grid(4), 0).unwrap();
        let map = extract_correspondence(&c, &c).unwrap();
        assert_eq!(map, CorrespondenceMap::identity(0, 0, 64));
    }

    #[test]
    fn reversed_gives_reversing_permutation() {
        let pts = grid(3);
        let target = PointCloud::new(pts.clone(), 1).unwrap();
        let rev: Vec<_> = pts.iter().rev().copied().collect();
        let transformed = PointCloud::new(rev, 0).unwrap();
        let map = extract_correspondence(&transformed, &target).unwrap();
        let n = pts.len();
        assert_eq!(map.matches, (0..n).map(|k| n - 1 - k).collect::<Vec<_>>());
        assert_eq!((map.source_frame, map.target_frame), (0, 1));
    }

    #[test]
    fn small_noise_recovers_identity() {
        let pts = grid(5);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let noisy: Vec<_> = pts
            .iter()
            .map(|p| {
                [
                    p[0] + noise.sample(&mut rng),
                    p[1] + noise.sample(&mut rng),
                    p[2] + noise.sample(&mut rng),
                ]
            })
            .collect();
        let map =
            extract_correspondence(&PointCloud::new(noisy, 0).unwrap(), &PointCloud::new(pts, 1).unwrap()).unwrap();
        assert_eq!(map.matches, (0..125).collect::<Vec<_>>());
    }

    #[test]
    fn validate_flags_out_of_range() {
        let map = CorrespondenceMap::new(0, 1, vec![0, 3]);
        assert!(map.validate(4).is_ok());
        assert!(map.validate(3).is_err());
    }
}
