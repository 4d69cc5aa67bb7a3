use super::cloud::{check_finite, squared_distance, Point3, PointCloud};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        axis: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

/// Exact nearest-neighbour index over a fixed set of points.
///
/// A kd-tree that splits at the median of the widest axis. Queries return the
/// exact nearest point; exact ties in squared distance go to the smallest
/// point index. The index is immutable once built and can be shared across
/// threads.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    points: Vec<Point3>,
    ids: Vec<u32>,
    nodes: Vec<Node>,
    len: usize,
}

pub fn build_index(cloud: &PointCloud) -> NeighborIndex {
    NeighborIndex::from_points(cloud.points()).expect("point clouds are nonempty and finite")
}

impl NeighborIndex {
    pub fn from_points(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if points.len() > u32::MAX as usize {
            return Err(Error::Shape("too many points for index".into()));
        }
        points.iter().try_for_each(check_finite)?;
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        build(points, &mut order, 0, &mut nodes);
        let reordered = order.iter().map(|&i| points[i as usize]).collect();
        Ok(NeighborIndex {
            points: reordered,
            ids: order,
            nodes,
            len: points.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Nearest stored point to `query` as `(point index, Euclidean distance)`.
    pub fn nearest(&self, query: &Point3) -> Result<(usize, f64)> {
        check_finite(query)?;
        let (idx, d2) = self.nearest_squared(query);
        Ok((idx, d2.sqrt()))
    }

    /// Nearest point and squared distance; the query must be finite.
    pub(crate) fn nearest_squared(&self, query: &Point3) -> (usize, f64) {
        let mut best = Best {
            d2: f64::INFINITY,
            id: u32::MAX,
        };
        self.search(0, query, &mut best);
        (best.id as usize, best.d2)
    }

    fn search(&self, node: usize, q: &Point3, best: &mut Best) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start as usize..end as usize {
                    let d2 = squared_distance(q, &self.points[slot]);
                    let id = self.ids[slot];
                    if d2 < best.d2 || (d2 == best.d2 && id < best.id) {
                        best.d2 = d2;
                        best.id = id;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near as usize, q, best);
                // `<=` so that equidistant points behind the plane still get
                // a chance to win the index tie-break.
                if diff * diff <= best.d2 {
                    self.search(far as usize, q, best);
                }
            }
        }
    }
}

struct Best {
    d2: f64,
    id: u32,
}

fn build(points: &[Point3], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let here = nodes.len() as u32;
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + order.len()) as u32,
        });
        return here;
    }
    let (lo, hi) = super::cloud::bounds_of(order.iter().map(|&i| &points[i as usize]));
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    if hi[axis] - lo[axis] == 0.0 {
        // All points coincide; no split can separate them.
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + order.len()) as u32,
        });
        return here;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][axis].total_cmp(&points[b as usize][axis])
    });
    let value = points[order[mid] as usize][axis];
    nodes.push(Node::Split {
        axis: axis as u8,
        value,
        left: 0,
        right: 0,
    });
    let (left_slice, right_slice) = order.split_at_mut(mid);
    let left = build(points, left_slice, offset, nodes);
    let right = build(points, right_slice, offset + mid, nodes);
    if let Node::Split { left: l, right: r, .. } = &mut nodes[here as usize] {
        *l = left;
        *r = right;
    }
    here
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Point3], q: &Point3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d2 = squared_distance(q, p);
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        (best.0, best.1.sqrt())
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect()
    }

    #[test]
    fn single_point_always_wins() {
        let idx = NeighborIndex::from_points(&[[0.3, -0.2, 5.0]]).unwrap();
        for q in [[0.0; 3], [100.0, -3.0, 2.0], [0.3, -0.2, 5.0]] {
            assert_eq!(idx.nearest(&q).unwrap().0, 0);
        }
    }

    #[test]
    fn analytic_query() {
        let idx = NeighborIndex::from_points(&[[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]).unwrap();
        assert_eq!(idx.nearest(&[0.0; 3]).unwrap(), (0, 1.0));
        assert_eq!(idx.nearest(&[0.0, 2.0, 0.0]).unwrap(), (1, 0.0));
    }

    #[test]
    fn equidistant_tie_goes_to_lower_index() {
        let idx = NeighborIndex::from_points(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(idx.nearest(&[0.0; 3]).unwrap().0, 0);
        let idx = NeighborIndex::from_points(&[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(idx.nearest(&[0.0; 3]).unwrap().0, 0);
    }

    #[test]
    fn ties_across_many_duplicates() {
        // 40 copies of the same location, spread over several leaves.
        let mut pts = vec![[5.0, 5.0, 5.0]; 20];
        pts.extend(vec![[0.5, 0.0, 0.0]; 40]);
        pts.extend(vec![[5.0, 5.0, 5.0]; 20]);
        let idx = NeighborIndex::from_points(&pts).unwrap();
        assert_eq!(idx.nearest(&[0.0; 3]).unwrap(), (20, 0.5));
    }

    #[test]
    fn grid_ties_match_brute_force() {
        let mut pts = Vec::new();
        for x in 0..6 {
            for y in 0..6 {
                for z in 0..6 {
                    pts.push([x as f64, y as f64, z as f64]);
                }
            }
        }
        let idx = NeighborIndex::from_points(&pts).unwrap();
        for x in 0..11 {
            for y in 0..11 {
                let q = [x as f64 * 0.5, y as f64 * 0.5, 2.5];
                assert_eq!(idx.nearest(&q).unwrap(), brute(&pts, &q), "query {q:?}");
            }
        }
    }

    #[test]
    fn random_queries_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = random_points(&mut rng, 500);
        let idx = NeighborIndex::from_points(&pts).unwrap();
        for q in random_points(&mut rng, 100) {
            assert_eq!(idx.nearest(&q).unwrap(), brute(&pts, &q));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(NeighborIndex::from_points(&[]), Err(Error::EmptyCloud)));
        let idx = NeighborIndex::from_points(&[[0.0; 3]]).unwrap();
        assert!(matches!(
            idx.nearest(&[f64::NAN, 0.0, 0.0]),
            Err(Error::InvalidCoordinate(_))
        ));
    }
}
