use super::MotionKind;
use crate::geometry::Point3;

/// Applies the analytic deformation of `kind` at `pose` to template point `q`.
///
/// Templates extend along x. `centroid` is the template centroid, used as the
/// fixed point of breathing.
pub fn deform(kind: MotionKind, pose: &[f64], centroid: &Point3, q: &Point3) -> Point3 {
    let [x, y, z] = *q;
    match kind {
        MotionKind::RigidTranslate => [x + pose[0], y + pose[1], z + pose[2]],
        MotionKind::RigidRotate => rotate(pose, q),
        MotionKind::Bend => {
            // Wrap the x axis around a circle of radius 1/κ in the x-z plane.
            let kappa = pose[0];
            if kappa.abs() < 1e-12 {
                return *q;
            }
            let r = 1.0 / kappa;
            let phi = kappa * x;
            [(r - z) * phi.sin(), y, r - (r - z) * phi.cos()]
        }
        MotionKind::Twist => {
            let a = pose[0] * x;
            let (s, c) = a.sin_cos();
            [x, y * c - z * s, y * s + z * c]
        }
        MotionKind::Breathe => {
            let s = pose[0];
            [
                centroid[0] + s * (x - centroid[0]),
                centroid[1] + s * (y - centroid[1]),
                centroid[2] + s * (z - centroid[2]),
            ]
        }
        MotionKind::TwoSegmentArm => {
            // Elbow at x = 0: the x > 0 segment swings about the z axis.
            if x <= 0.0 {
                return *q;
            }
            let (s, c) = pose[0].sin_cos();
            [x * c - y * s, x * s + y * c, z]
        }
    }
}

/// Rodrigues rotation by the rotation vector `v`.
fn rotate(v: &[f64], q: &Point3) -> Point3 {
    let theta = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if theta < 1e-15 {
        return *q;
    }
    let k = [v[0] / theta, v[1] / theta, v[2] / theta];
    let (s, c) = theta.sin_cos();
    let kxq = [
        k[1] * q[2] - k[2] * q[1],
        k[2] * q[0] - k[0] * q[2],
        k[0] * q[1] - k[1] * q[0],
    ];
    let kq = k[0] * q[0] + k[1] * q[1] + k[2] * q[2];
    [
        q[0] * c + kxq[0] * s + k[0] * kq * (1.0 - c),
        q[1] * c + kxq[1] * s + k[1] * kq * (1.0 - c),
        q[2] * c + kxq[2] * s + k[2] * kq * (1.0 - c),
    ]
}
