//! On-disk dataset layout.
//!
//! ```text
//! <out>/<variant>/seq_0000/frame_0001.xyz ...   observed frames
//!                          gt_0001.corr ...      template index of every observed point
//!                          reference_0001.xyz    uncorrupted frames (corrupted variants only)
//!                          manifest.json
//! <out>/<variant>/windows/seq_0000_w0001/...     4-frame windows, same layout
//! ```
//!
//! `<variant>` is `clean`, `noisy_<sigma>`, `partial_<count>` or
//! `noisy_<sigma>_partial_<count>`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{corrupt, generate, CorruptionSpec, GroundTruthSequence, MotionSpec, Normalization};
use crate::error::{Error, Result};
use crate::geometry::io::{read_indices, read_xyz, write_indices, write_xyz};
use crate::geometry::PointCloud;

/// Frames per training window.
pub const WINDOW_FRAMES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    /// `"sequence"` or `"window"`.
    pub unit: String,
    pub name: String,
    pub frames: usize,
    pub points_per_frame: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<MotionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<CorruptionSpec>,
    pub normalization: Normalization,
    /// For windows: the parent sequence and the 1-based frame it starts at.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_start: Option<usize>,
}

/// What [`make_dataset`] writes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetRequest {
    pub specs: Vec<MotionSpec>,
    /// Extra corrupted variants written next to the clean tree.
    pub corruptions: Vec<CorruptionSpec>,
    pub windows: bool,
}

/// Directory name of a corruption variant.
pub fn variant_name(c: Option<&CorruptionSpec>) -> String {
    match c {
        None => "clean".into(),
        Some(c) if c.is_identity() => "clean".into(),
        Some(c) => {
            let mut parts = Vec::new();
            if c.noise_sigma > 0.0 {
                parts.push(format!("noisy_{}", c.noise_sigma));
            }
            if c.partial_count > 0 {
                parts.push(format!("partial_{}", c.partial_count));
            }
            parts.join("_")
        }
    }
}

/// Overlapping windows of `len` consecutive frames (`T − len + 1` of them).
pub fn windows_of(seq: &GroundTruthSequence, len: usize) -> Vec<GroundTruthSequence> {
    if seq.len() < len {
        return Vec::new();
    }
    (0..=seq.len() - len)
        .map(|start| {
            let r = start..start + len;
            let reindex = |f: &PointCloud, i: usize| f.clone().with_frame_index(i);
            GroundTruthSequence {
                frames: seq.frames[r.clone()]
                    .iter()
                    .enumerate()
                    .map(|(i, f)| reindex(f, i))
                    .collect(),
                provenance: seq.provenance[r.clone()].to_vec(),
                reference: seq.reference[r.clone()]
                    .iter()
                    .enumerate()
                    .map(|(i, f)| reindex(f, i))
                    .collect(),
                pose_params: seq.pose_params.get(r).map(<[_]>::to_vec).unwrap_or_default(),
                template: seq.template.clone(),
                normalization: seq.normalization,
                spec: seq.spec.clone(),
                corruption: seq.corruption.clone(),
            }
        })
        .collect()
}

pub(crate) fn frame_file(dir: &Path, prefix: &str, i: usize, ext: &str) -> PathBuf {
    dir.join(format!("{prefix}_{:04}.{ext}", i + 1))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes one sequence (or window) directory.
pub fn write_sequence_dir(dir: &Path, seq: &GroundTruthSequence, manifest: &SequenceManifest) -> Result<()> {
    create_dir(dir)?;
    let corrupted = seq.corruption.as_ref().is_some_and(|c| !c.is_identity());
    for (i, frame) in seq.frames.iter().enumerate() {
        write_xyz(&frame_file(dir, "frame", i, "xyz"), frame)?;
        write_indices(&frame_file(dir, "gt", i, "corr"), &seq.provenance[i])?;
        if corrupted {
            write_xyz(&frame_file(dir, "reference", i, "xyz"), &seq.reference[i])?;
        }
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serialises") + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn manifest_for(seq: &GroundTruthSequence, unit: &str, name: &str) -> SequenceManifest {
    SequenceManifest {
        unit: unit.into(),
        name: name.into(),
        frames: seq.len(),
        points_per_frame: seq.frames.iter().map(PointCloud::len).collect(),
        spec: seq.spec.clone(),
        corruption: seq.corruption.clone(),
        normalization: seq.normalization,
        parent: None,
        window_start: None,
    }
}

/// Generates every spec and writes the clean tree plus one tree per
/// corruption. Returns the sequence directories written (windows excluded).
pub fn make_dataset(request: &DatasetRequest, out: &Path) -> Result<Vec<PathBuf>> {
    if request.specs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut variants: Vec<Option<&CorruptionSpec>> = vec![None];
    variants.extend(request.corruptions.iter().filter(|c| !c.is_identity()).map(Some));
    let mut written = Vec::new();
    for (s, spec) in request.specs.iter().enumerate() {
        let clean = generate(spec)?;
        for variant in &variants {
            let seq = match variant {
                Some(c) => corrupt(&clean, c)?,
                None => clean.clone(),
            };
            let root = out.join(variant_name(*variant));
            let name = format!("seq_{s:04}");
            let dir = root.join(&name);
            write_sequence_dir(&dir, &seq, &manifest_for(&seq, "sequence", &name))?;
            written.push(dir);
            if request.windows {
                for (w, win) in windows_of(&seq, WINDOW_FRAMES).iter().enumerate() {
                    let wname = format!("{name}_w{:04}", w + 1);
                    let mut m = manifest_for(win, "window", &wname);
                    m.parent = Some(name.clone());
                    m.window_start = Some(w + 1);
                    write_sequence_dir(&root.join("windows").join(&wname), win, &m)?;
                }
            }
        }
    }
    Ok(written)
}

/// A sequence directory read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSequence {
    pub dir: PathBuf,
    pub frames: Vec<PointCloud>,
    pub provenance: Option<Vec<Vec<usize>>>,
    pub reference: Option<Vec<PointCloud>>,
    pub manifest: Option<SequenceManifest>,
}

/// Indices `1..=n` of files named `<prefix>_NNNN.<ext>`, checked contiguous.
pub(crate) fn numbered_files(dir: &Path, prefix: &str, ext: &str) -> Result<usize> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut numbers = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(stem) = name.strip_prefix(prefix).and_then(|s| s.strip_prefix('_')) else {
            continue;
        };
        let Some(num) = stem.strip_suffix(ext).and_then(|s| s.strip_suffix('.')) else {
            continue;
        };
        if let Ok(n) = num.parse::<usize>() {
            numbers.push(n);
        }
    }
    numbers.sort_unstable();
    for (i, n) in numbers.iter().enumerate() {
        if *n != i + 1 {
            return Err(Error::MissingFrame {
                path: frame_file(dir, prefix, i, ext),
            });
        }
    }
    Ok(numbers.len())
}

pub fn load_sequence_dir(dir: &Path) -> Result<LoadedSequence> {
    let count = numbered_files(dir, "frame", "xyz")?;
    if count == 0 {
        return Err(Error::MissingFrame {
            path: frame_file(dir, "frame", 0, "xyz"),
        });
    }
    let frames = (0..count)
        .map(|i| read_xyz(&frame_file(dir, "frame", i, "xyz"), i))
        .collect::<Result<Vec<_>>>()?;

    let gt_count = numbered_files(dir, "gt", "corr")?;
    let provenance = match gt_count {
        0 => None,
        n if n == count => Some(
            (0..count)
                .map(|i| {
                    let path = frame_file(dir, "gt", i, "corr");
                    let idx = read_indices(&path)?;
                    if idx.len() != frames[i].len() {
                        return Err(Error::format(
                            &path,
                            0,
                            format!("{} provenance entries for {} points", idx.len(), frames[i].len()),
                        ));
                    }
                    Ok(idx)
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        n => {
            return Err(Error::format(
                frame_file(dir, "gt", n.min(count), "corr"),
                0,
                format!("{n} ground-truth files for {count} frames"),
            ))
        }
    };

    let ref_count = numbered_files(dir, "reference", "xyz")?;
    let reference = match ref_count {
        0 => None,
        n if n == count => Some(
            (0..count)
                .map(|i| read_xyz(&frame_file(dir, "reference", i, "xyz"), i))
                .collect::<Result<Vec<_>>>()?,
        ),
        n => {
            return Err(Error::format(
                frame_file(dir, "reference", n.min(count), "xyz"),
                0,
                format!("{n} reference files for {count} frames"),
            ))
        }
    };

    let manifest_path = dir.join("manifest.json");
    let manifest = if manifest_path.exists() {
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        Some(serde_json::from_str(&text).map_err(|e| Error::format(&manifest_path, e.line(), e.to_string()))?)
    } else {
        None
    };

    Ok(LoadedSequence {
        dir: dir.to_path_buf(),
        frames,
        provenance,
        reference,
        manifest,
    })
}

impl LoadedSequence {
    pub fn is_window(&self) -> bool {
        self.manifest.as_ref().is_some_and(|m| m.unit == "window")
    }

    /// Ground truth for evaluation. Without provenance files, frames must
    /// share point order and size.
    pub fn ground_truth(&self) -> Result<GroundTruthSequence> {
        let provenance = match &self.provenance {
            Some(p) => p.clone(),
            None => {
                let n = self.frames[0].len();
                if self.frames.iter().any(|f| f.len() != n) {
                    return Err(Error::Protocol(format!(
                        "{}: frames differ in size and no gt_*.corr files are present",
                        self.dir.display()
                    )));
                }
                vec![(0..n).collect(); self.frames.len()]
            }
        };
        let reference = self.reference.clone().unwrap_or_else(|| self.frames.clone());
        for (i, (prov, r)) in provenance.iter().zip(&reference).enumerate() {
            if prov.iter().any(|&o| o >= r.len()) {
                return Err(Error::Protocol(format!(
                    "{}: provenance of frame {} points past the {} reference points",
                    self.dir.display(),
                    i + 1,
                    r.len()
                )));
            }
        }
        Ok(GroundTruthSequence {
            frames: self.frames.clone(),
            provenance,
            reference,
            pose_params: Vec::new(),
            template: None,
            normalization: self
                .manifest
                .as_ref()
                .map_or(Normalization::IDENTITY, |m| m.normalization),
            spec: self.manifest.as_ref().and_then(|m| m.spec.clone()),
            corruption: self.manifest.as_ref().and_then(|m| m.corruption.clone()),
        })
    }
}

/// Sequence directories under `root` (including `root` itself), sorted.
pub fn list_sequence_dirs(root: &Path, include_windows: bool) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if frame_file(&dir, "frame", 0, "xyz").is_file() {
            let is_window = {
                let m = dir.join("manifest.json");
                m.is_file()
                    && fs::read_to_string(&m)
                        .ok()
                        .and_then(|t| serde_json::from_str::<SequenceManifest>(&t).ok())
                        .is_some_and(|m| m.unit == "window")
            };
            if include_windows || !is_window {
                found.push(dir.clone());
            }
        }
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            if entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_dir() {
                if !include_windows && entry.file_name() == "windows" {
                    continue;
                }
                stack.push(entry.path());
            }
        }
    }
    found.sort();
    Ok(found)
}
