use std::path::Path;

use tcdtrack::geometry::PointCloud;
use tcdtrack::optim::{save_checkpoint, train, TrainConfig};
use tcdtrack::synmotion::{generate, MotionKind, MotionSpec, Template};

pub const LATENT: usize = 4;

pub fn frames(seed: u64, points: usize) -> Vec<PointCloud> {
    generate(&MotionSpec::new(
        MotionKind::RigidTranslate,
        Template::GridSlab,
        4,
        points,
        seed,
    ))
    .unwrap()
    .frames
}

/// A tiny model, enough to exercise the bindings.
pub fn write_model(path: &Path) {
    let config = TrainConfig {
        iterations: 5,
        latent_dim: LATENT,
        points_per_frame: 50,
        hidden: vec![8],
        ..TrainConfig::default()
    };
    let (model, _) = train(&[frames(1, 50)], &config).unwrap();
    save_checkpoint(path, &model).unwrap();
}
