//! Procedural deforming sequences with exact dense ground truth.
//!
//! A template point set is sampled once, start and end pose parameters are
//! drawn within amplitude bounds, the parameters are interpolated linearly
//! over the frames, and an analytic deformation is applied per frame. All
//! frames of a sequence are then normalised jointly into the unit cube.
//! Point `k` of every frame is the image of template point `k`.

mod dataset;
mod deform;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

pub(crate) use dataset::{frame_file, numbered_files};
pub use dataset::{
    list_sequence_dirs, load_sequence_dir, make_dataset, variant_name, windows_of, write_sequence_dir, DatasetRequest,
    LoadedSequence, SequenceManifest, WINDOW_FRAMES,
};
pub use deform::deform;

use crate::error::{Error, Result};
use crate::geometry::{CorrespondenceMap, Point3, PointCloud};
use crate::optim::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    RigidTranslate,
    RigidRotate,
    Bend,
    Twist,
    Breathe,
    TwoSegmentArm,
}

impl MotionKind {
    /// Length of the pose parameter vector.
    pub fn pose_len(self) -> usize {
        match self {
            MotionKind::RigidTranslate | MotionKind::RigidRotate => 3,
            _ => 1,
        }
    }

    /// Identity pose.
    pub fn rest_pose(self) -> Vec<f64> {
        match self {
            MotionKind::Breathe => vec![1.0],
            k => vec![0.0; k.pose_len()],
        }
    }

    /// Default half-width of the range each pose component is drawn from.
    pub fn default_amplitude(self) -> f64 {
        match self {
            MotionKind::RigidTranslate => 0.15,
            MotionKind::RigidRotate => 0.4,
            MotionKind::Bend => 1.5,
            MotionKind::Twist => 1.2,
            MotionKind::Breathe => 0.25,
            MotionKind::TwoSegmentArm => 0.6,
        }
    }

    pub fn is_rigid(self) -> bool {
        matches!(self, MotionKind::RigidTranslate | MotionKind::RigidRotate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    GridSlab,
    Cylinder,
    Sphere,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSpec {
    pub kind: MotionKind,
    pub template: Template,
    pub frames: usize,
    pub points: usize,
    /// Overrides [`MotionKind::default_amplitude`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Explicit start pose; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_pose: Option<Vec<f64>>,
    /// Explicit end pose; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_pose: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

impl MotionSpec {
    pub fn new(kind: MotionKind, template: Template, frames: usize, points: usize, seed: u64) -> Self {
        MotionSpec {
            kind,
            template,
            frames,
            points,
            amplitude: None,
            start_pose: None,
            end_pose: None,
            seed,
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude.unwrap_or_else(|| self.kind.default_amplitude())
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::Config(format!(
                "motion needs at least 2 frames, got {}",
                self.frames
            )));
        }
        if self.points == 0 {
            return Err(Error::Config("motion needs at least 1 point".into()));
        }
        if !self.amplitude().is_finite() || self.amplitude() < 0.0 {
            return Err(Error::Config(format!("invalid amplitude {}", self.amplitude())));
        }
        for pose in [&self.start_pose, &self.end_pose].into_iter().flatten() {
            if pose.len() != self.kind.pose_len() || pose.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!(
                    "{:?} pose needs {} finite values, got {pose:?}",
                    self.kind,
                    self.kind.pose_len()
                )));
            }
        }
        Ok(())
    }
}

/// Uniform rescaling that maps raw coordinates into the unit cube:
/// `normalized = (raw − center) · scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub center: Point3,
    pub scale: f64,
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization {
        center: [0.0; 3],
        scale: 1.0,
    };

    /// Fits the union of all `frames` into `[−0.5, 0.5]³`.
    pub fn fit(frames: &[PointCloud]) -> Normalization {
        let (lo, hi) = crate::geometry::cloud_bounds(frames.iter().flat_map(|f| f.points()));
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
        let extent = (0..3).map(|d| hi[d] - lo[d]).fold(0.0, f64::max);
        // Shrink by a few ulps so rounding never pushes a point past ±0.5.
        let scale = if extent > 0.0 {
            (1.0 - 8.0 * f64::EPSILON) / extent
        } else {
            1.0
        };
        Normalization { center, scale }
    }

    pub fn apply_point(&self, p: &Point3) -> Point3 {
        [
            (p[0] - self.center[0]) * self.scale,
            (p[1] - self.center[1]) * self.scale,
            (p[2] - self.center[2]) * self.scale,
        ]
    }

    pub fn invert_point(&self, p: &Point3) -> Point3 {
        [
            p[0] / self.scale + self.center[0],
            p[1] / self.scale + self.center[1],
            p[2] / self.scale + self.center[2],
        ]
    }

    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        let pts = cloud.points().iter().map(|p| self.apply_point(p)).collect();
        PointCloud::new(pts, cloud.frame_index()).expect("finite affine image")
    }

    pub fn invert(&self, cloud: &PointCloud) -> PointCloud {
        let pts = cloud.points().iter().map(|p| self.invert_point(p)).collect();
        PointCloud::new(pts, cloud.frame_index()).expect("finite affine image")
    }
}

/// Additive noise and per-frame subsampling applied after generation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSpec {
    /// Per-coordinate Gaussian standard deviation in normalised units (0 disables).
    #[serde(default)]
    pub noise_sigma: f64,
    /// Points kept per frame (0 disables).
    #[serde(default)]
    pub partial_count: usize,
    #[serde(default)]
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn is_identity(&self) -> bool {
        self.noise_sigma == 0.0 && self.partial_count == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSequence {
    /// Observed frames (possibly corrupted), normalised.
    pub frames: Vec<PointCloud>,
    /// For each observed point, the template index it was generated from.
    pub provenance: Vec<Vec<usize>>,
    /// Uncorrupted frames with every template point, normalised.
    pub reference: Vec<PointCloud>,
    /// Interpolated pose parameters, one vector per frame (empty when unknown).
    pub pose_params: Vec<Vec<f64>>,
    /// Template samples before deformation and normalisation.
    pub template: Option<PointCloud>,
    pub normalization: Normalization,
    pub spec: Option<MotionSpec>,
    pub corruption: Option<CorruptionSpec>,
}

impl GroundTruthSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Ground-truth map from frame `i` to frame `i + 1`, or `None` for source
    /// points whose counterpart was not retained in frame `i + 1`.
    pub fn correspondence(&self, i: usize) -> Vec<Option<usize>> {
        let mut position = vec![None; self.reference[i + 1].len()];
        for (j, &orig) in self.provenance[i + 1].iter().enumerate() {
            position[orig] = Some(j);
        }
        self.provenance[i].iter().map(|&orig| position[orig]).collect()
    }

    /// Ground-truth map for pairs where every counterpart is observed.
    pub fn correspondence_map(&self, i: usize) -> Result<CorrespondenceMap> {
        let matches = self
            .correspondence(i)
            .into_iter()
            .enumerate()
            .map(|(k, m)| {
                m.ok_or_else(|| {
                    Error::Protocol(format!("point {k} of frame {i} has no counterpart in frame {}", i + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CorrespondenceMap::new(i, i + 1, matches))
    }

    /// Where each point of frame `i` truly lands in frame `i + 1`: the observed
    /// counterpart when it was retained, otherwise its uncorrupted position.
    pub fn target_positions(&self, i: usize) -> Vec<Point3> {
        let target = &self.frames[i + 1];
        self.correspondence(i)
            .into_iter()
            .zip(&self.provenance[i])
            .map(|(m, &orig)| match m {
                Some(j) => target.points()[j],
                None => self.reference[i + 1].points()[orig],
            })
            .collect()
    }
}

/// Samples `n` template points.
pub fn sample_template(template: Template, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    (0..n)
        .map(|_| match template {
            Template::GridSlab => [
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.05..0.05),
            ],
            Template::Cylinder => {
                let x = rng.random_range(-0.5..0.5);
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                [x, 0.2 * a.cos(), 0.2 * a.sin()]
            }
            Template::Sphere => loop {
                let v: [f64; 3] = [
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                ];
                let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if r > 1e-9 {
                    break [0.5 * v[0] / r, 0.5 * v[1] / r, 0.5 * v[2] / r];
                }
            },
        })
        .collect()
}

fn draw_pose(kind: MotionKind, amplitude: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    kind.rest_pose()
        .into_iter()
        .map(|r| {
            if amplitude > 0.0 {
                r + rng.random_range(-amplitude..amplitude)
            } else {
                r
            }
        })
        .collect()
}

/// Linear interpolation of pose parameters over `frames` samples.
pub fn interpolate_poses(start: &[f64], end: &[f64], frames: usize) -> Vec<Vec<f64>> {
    (0..frames)
        .map(|i| {
            let t = i as f64 / (frames - 1) as f64;
            start.iter().zip(end).map(|(a, b)| a + t * (b - a)).collect()
        })
        .collect()
}

/// Raw (un-normalised) frames of a motion, plus template, poses and centroid.
pub(crate) struct RawMotion {
    pub template: Vec<Point3>,
    pub poses: Vec<Vec<f64>>,
    pub frames: Vec<Vec<Point3>>,
}

pub(crate) fn generate_raw(spec: &MotionSpec) -> Result<RawMotion> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let template = sample_template(spec.template, spec.points, &mut rng);
    let start = match &spec.start_pose {
        Some(p) => p.clone(),
        None => draw_pose(spec.kind, spec.amplitude(), &mut rng),
    };
    let end = match &spec.end_pose {
        Some(p) => p.clone(),
        None => draw_pose(spec.kind, spec.amplitude(), &mut rng),
    };
    let centroid = centroid(&template);
    let poses = interpolate_poses(&start, &end, spec.frames);
    let frames = poses
        .iter()
        .map(|pose| template.iter().map(|q| deform(spec.kind, pose, &centroid, q)).collect())
        .collect();
    Ok(RawMotion {
        template,
        poses,
        frames,
    })
}

pub fn centroid(points: &[Point3]) -> Point3 {
    let mut c = [0.0; 3];
    for p in points {
        for d in 0..3 {
            c[d] += p[d];
        }
    }
    let n = points.len() as f64;
    [c[0] / n, c[1] / n, c[2] / n]
}

/// Generates a normalised sequence with identity ground truth.
pub fn generate(spec: &MotionSpec) -> Result<GroundTruthSequence> {
    let raw = generate_raw(spec)?;
    let raw_frames = raw
        .frames
        .into_iter()
        .enumerate()
        .map(|(i, pts)| PointCloud::new(pts, i))
        .collect::<Result<Vec<_>>>()?;
    let normalization = Normalization::fit(&raw_frames);
    let frames: Vec<PointCloud> = raw_frames.iter().map(|f| normalization.apply(f)).collect();
    let n = spec.points;
    Ok(GroundTruthSequence {
        provenance: vec![(0..n).collect(); frames.len()],
        reference: frames.clone(),
        frames,
        pose_params: raw.poses,
        template: Some(PointCloud::new(raw.template, 0)?),
        normalization,
        spec: Some(spec.clone()),
        corruption: None,
    })
}

/// Adds noise and/or per-frame random subsets, keeping provenance exact.
pub fn corrupt(seq: &GroundTruthSequence, c: &CorruptionSpec) -> Result<GroundTruthSequence> {
    if !(c.noise_sigma.is_finite() && c.noise_sigma >= 0.0) {
        return Err(Error::Config(format!(
            "noise_sigma must be non-negative, got {}",
            c.noise_sigma
        )));
    }
    let mut out = seq.clone();
    out.corruption = Some(c.clone());
    if c.is_identity() {
        return Ok(out);
    }
    let noise = (c.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, c.noise_sigma).map_err(|e| Error::Config(e.to_string())))
        .transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(c.seed, seq.spec.as_ref().map_or(0, |s| s.seed)));
    for (i, frame) in seq.frames.iter().enumerate() {
        let n = frame.len();
        if c.partial_count > n {
            return Err(Error::Config(format!(
                "partial_count {} exceeds the {n} points of frame {i}",
                c.partial_count
            )));
        }
        let keep: Vec<usize> = if c.partial_count > 0 {
            let mut idx = sample(&mut rng, n, c.partial_count).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..n).collect()
        };
        let mut points: Vec<Point3> = keep.iter().map(|&k| frame.points()[k]).collect();
        if let Some(noise) = &noise {
            for p in &mut points {
                for v in p.iter_mut() {
                    *v += noise.sample(&mut rng);
                }
            }
        }
        out.provenance[i] = keep.iter().map(|&k| seq.provenance[i][k]).collect();
        out.frames[i] = PointCloud::new(points, frame.frame_index())?;
    }
    Ok(out)
}
