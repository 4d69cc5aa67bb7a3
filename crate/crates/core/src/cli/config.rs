//! Config files (TOML, or JSON by `.json` extension) for each subcommand.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::default_thresholds;
use crate::infer::InferenceConfig;
use crate::optim::{derive_seed, TrainConfig};
use crate::synmotion::{CorruptionSpec, MotionKind, MotionSpec, Template};

/// Parses `path` into `T`; a missing path yields the defaults.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, path)
}

pub fn parse<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let at = |line: usize, msg: &str| Error::Config(format!("{}:{line}: {}", path.display(), msg.trim()));
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(text).map_err(|e| at(e.line(), &e.to_string()))
    } else {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            at(line, e.message())
        })
    }
}

/// One `[[motion]]` entry. Without `seed`, the sequence seed derives from the
/// run seed and the entry's position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionEntry {
    pub kind: MotionKind,
    #[serde(default = "default_template")]
    pub template: Template,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub start_pose: Option<Vec<f64>>,
    #[serde(default)]
    pub end_pose: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Number of sequences drawn from this entry with consecutive seeds.
    #[serde(default = "one")]
    pub count: usize,
}

fn default_template() -> Template {
    Template::GridSlab
}
fn default_frames() -> usize {
    6
}
fn default_points() -> usize {
    2000
}
fn one() -> usize {
    1
}

/// One `[[corruption]]` entry. Without `seed`, the run seed is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionEntry {
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub partial_count: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub seed: u64,
    pub windows: bool,
    pub motion: Vec<MotionEntry>,
    pub corruption: Vec<CorruptionEntry>,
}

impl Default for GenerateConfig {
    /// Bundled suite: two sequences of each motion kind, six frames of 2000
    /// points, plus the noisy and partial variants.
    fn default() -> Self {
        let kinds = [
            (MotionKind::RigidTranslate, Template::GridSlab),
            (MotionKind::RigidRotate, Template::Cylinder),
            (MotionKind::Bend, Template::GridSlab),
            (MotionKind::Twist, Template::Cylinder),
            (MotionKind::Breathe, Template::Sphere),
            (MotionKind::TwoSegmentArm, Template::GridSlab),
        ];
        GenerateConfig {
            seed: 0,
            windows: true,
            motion: kinds
                .into_iter()
                .map(|(kind, template)| MotionEntry {
                    kind,
                    template,
                    frames: default_frames(),
                    points: default_points(),
                    amplitude: None,
                    start_pose: None,
                    end_pose: None,
                    seed: None,
                    count: 2,
                })
                .collect(),
            corruption: [(0.02, 0), (0.04, 0), (0.0, 300)]
                .into_iter()
                .map(|(noise_sigma, partial_count)| CorruptionEntry {
                    noise_sigma,
                    partial_count,
                    seed: None,
                })
                .collect(),
        }
    }
}

impl GenerateConfig {
    /// Expands entries into concrete specs with resolved seeds.
    pub fn specs(&self) -> Vec<MotionSpec> {
        let mut out = Vec::new();
        for m in &self.motion {
            for c in 0..m.count {
                let id = out.len() as u64;
                let seed = match m.seed {
                    Some(s) => s.wrapping_add(c as u64),
                    None => derive_seed(self.seed, id),
                };
                out.push(MotionSpec {
                    kind: m.kind,
                    template: m.template,
                    frames: m.frames,
                    points: m.points,
                    amplitude: m.amplitude,
                    start_pose: m.start_pose.clone(),
                    end_pose: m.end_pose.clone(),
                    seed,
                });
            }
        }
        out
    }

    pub fn corruptions(&self) -> Vec<CorruptionSpec> {
        self.corruption
            .iter()
            .map(|c| CorruptionSpec {
                noise_sigma: c.noise_sigma,
                partial_count: c.partial_count,
                seed: c.seed.unwrap_or(self.seed),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.motion.is_empty() {
            return Err(Error::Config("no [[motion]] entries".into()));
        }
        for s in self.specs() {
            s.validate()?;
        }
        for c in self.corruptions() {
            if !(c.noise_sigma.is_finite() && c.noise_sigma >= 0.0) {
                return Err(Error::Config(format!(
                    "noise_sigma must be non-negative, got {}",
                    c.noise_sigma
                )));
            }
            if let Some(m) = self.motion.iter().find(|m| c.partial_count > m.points) {
                return Err(Error::Config(format!(
                    "partial_count {} exceeds the {} points of a {:?} motion",
                    c.partial_count, m.points, m.kind
                )));
            }
        }
        Ok(())
    }
}

/// `ablate` config: training settings shared by both models, and how they
/// are scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub train: TrainConfig,
    /// Latent refitting iterations before scoring (0 scores the trained states).
    pub refit_iterations: usize,
    pub refit_learning_rate: f64,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            train: TrainConfig::default(),
            refit_iterations: 0,
            refit_learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Ascending accuracy thresholds, in the ground truth's units.
    pub thresholds: Vec<f64>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            thresholds: default_thresholds(),
        }
    }
}

/// `track`/`forecast` config.
pub type InferConfig = InferenceConfig;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_errors_carry_line_and_field() {
        let err = parse::<TrainConfig>("iterations = 5\nbogus = 1\n", Path::new("t.toml")).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Config(_)));
        assert!(msg.contains("t.toml:2"), "{msg}");
        assert!(msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn json_configs_are_accepted() {
        let c: TrainConfig = parse("{\"iterations\": 7}", Path::new("t.json")).unwrap();
        assert_eq!(c.iterations, 7);
        assert_eq!(c.batch_size, 32);
    }

    #[test]
    fn defaults_echo_published_values() {
        let t: TrainConfig = load(None).unwrap();
        assert_eq!((t.learning_rate, t.batch_size, t.iterations), (1e-3, 32, 1000));
        assert_eq!((t.latent_dim, t.points_per_frame), (128, 2000));
        let g = GenerateConfig::default();
        let sigmas: Vec<f64> = g.corruption.iter().map(|c| c.noise_sigma).collect();
        assert_eq!(sigmas, vec![0.02, 0.04, 0.0]);
        assert_eq!(g.corruption[2].partial_count, 300);
        g.validate().unwrap();
        assert_eq!(g.specs().len(), 12);
    }

    #[test]
    fn entry_seeds_resolve() {
        let g: GenerateConfig = parse(
            "seed = 3\n[[motion]]\nkind = \"bend\"\ncount = 2\n[[motion]]\nkind = \"twist\"\nseed = 40\n",
            Path::new("g.toml"),
        )
        .unwrap();
        let specs = g.specs();
        assert_eq!(specs.len(), 3);
        assert_eq!(specs[0].seed, derive_seed(3, 0));
        assert_eq!(specs[1].seed, derive_seed(3, 1));
        assert_eq!(specs[2].seed, 40);
        // Omitted tables fall back to the bundled defaults; `corruption = []` opts out.
        assert_eq!(g.corruption.len(), 3);
        let bare: GenerateConfig =
            parse("corruption = []\n[[motion]]\nkind = \"bend\"\n", Path::new("g.toml")).unwrap();
        assert!(bare.corruptions().is_empty());
    }
}
