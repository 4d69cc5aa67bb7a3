//! Turning dataset directories into normalised, subsampled training units.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::optim::derive_seed;
use crate::synmotion::{
    list_sequence_dirs, load_sequence_dir, windows_of, GroundTruthSequence, LoadedSequence, Normalization,
};

/// Stream id mixed into the run seed for point subsampling.
const SUBSAMPLE_STREAM: u64 = 0x5_0b5a;

/// One input sequence after ingestion.
#[derive(Debug, Clone)]
pub struct IngestedSequence {
    pub dir: PathBuf,
    /// Maps the sequence's file coordinates into the unit cube.
    pub normalization: Normalization,
    /// Training windows, in order.
    pub units: Vec<GroundTruthSequence>,
    /// Whether the units carry real correspondence ground truth.
    pub has_ground_truth: bool,
}

/// Sequence directories under `root`. Whole sequences are preferred; window
/// directories are used only when nothing else is present.
pub fn find_sequences(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Error::MissingFrame {
            path: crate::synmotion::frame_file(root, "frame", 0, "xyz"),
        });
    }
    let dirs = list_sequence_dirs(root, false)?;
    let dirs = if dirs.is_empty() {
        list_sequence_dirs(root, true)?
    } else {
        dirs
    };
    if dirs.is_empty() {
        return Err(Error::MissingFrame {
            path: crate::synmotion::frame_file(root, "frame", 0, "xyz"),
        });
    }
    Ok(dirs)
}

/// Ground truth when available (see [`LoadedSequence::ground_truth`]);
/// otherwise each frame is its own provenance and only the frames are meaningful.
pub fn as_sequence(loaded: &LoadedSequence) -> (GroundTruthSequence, bool) {
    match loaded.ground_truth() {
        Ok(gt) => (gt, true),
        Err(_) => (
            GroundTruthSequence {
                frames: loaded.frames.clone(),
                provenance: loaded.frames.iter().map(|f| (0..f.len()).collect()).collect(),
                reference: loaded.frames.clone(),
                pose_params: Vec::new(),
                template: None,
                normalization: Normalization::IDENTITY,
                spec: None,
                corruption: None,
            },
            false,
        ),
    }
}

/// Fits the union of observed frames into the unit cube and maps frames and
/// references with the same transform.
pub fn normalize(seq: &GroundTruthSequence) -> (GroundTruthSequence, Normalization) {
    let n = Normalization::fit(&seq.frames);
    let mut out = seq.clone();
    out.frames = seq.frames.iter().map(|f| n.apply(f)).collect();
    out.reference = seq.reference.iter().map(|f| n.apply(f)).collect();
    (out, n)
}

/// Keeps a uniform random subset of at most `count` points per frame, in
/// original order, with provenance carried along.
pub fn subsample(seq: &GroundTruthSequence, count: usize, seed: u64) -> Result<GroundTruthSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = seq.clone();
    for (i, frame) in seq.frames.iter().enumerate() {
        if frame.len() <= count {
            continue;
        }
        let mut keep = sample(&mut rng, frame.len(), count).into_vec();
        keep.sort_unstable();
        out.frames[i] = frame.select(&keep)?;
        out.provenance[i] = keep.iter().map(|&k| seq.provenance[i][k]).collect();
    }
    Ok(out)
}

/// Splits into `window`-frame units; shorter sequences are kept whole.
pub fn window(seq: &GroundTruthSequence, window: usize, name: &str) -> Result<Vec<GroundTruthSequence>> {
    if seq.len() < 2 {
        return Err(Error::SequenceTooShort { frames: seq.len() });
    }
    if seq.len() < window {
        log::warn!(
            "{name}: {} frames, shorter than the {window}-frame window; used whole",
            seq.len()
        );
        return Ok(vec![seq.clone()]);
    }
    Ok(windows_of(seq, window))
}

/// Loads every sequence under `root` and prepares training units.
pub fn training_units(root: &Path, window_len: usize, points: usize, seed: u64) -> Result<Vec<IngestedSequence>> {
    find_sequences(root)?
        .into_iter()
        .enumerate()
        .map(|(s, dir)| {
            let loaded = load_sequence_dir(&dir)?;
            let (seq, has_ground_truth) = as_sequence(&loaded);
            let (seq, normalization) = normalize(&seq);
            let seq = subsample(&seq, points, derive_seed(seed ^ SUBSAMPLE_STREAM, s as u64))?;
            let units = window(&seq, window_len, &dir.display().to_string())?;
            Ok(IngestedSequence {
                dir,
                normalization,
                units,
                has_ground_truth,
            })
        })
        .collect()
}

/// Reads a single sequence for inference and normalises it.
pub fn inference_frames(dir: &Path) -> Result<(Vec<PointCloud>, Normalization)> {
    let loaded = load_sequence_dir(dir)?;
    let n = Normalization::fit(&loaded.frames);
    Ok((loaded.frames.iter().map(|f| n.apply(f)).collect(), n))
}
