//! Plain-text formats: `.xyz` clouds, `.corr` maps and `.flow` fields.
//!
//! All three are LF-terminated, headerless, one record per line. Floats are
//! written with the shortest representation that round-trips exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::cloud::{Point3, PointCloud};
use super::correspondence::CorrespondenceMap;
use crate::error::{Error, Result};

pub fn format_triples(points: &[Point3]) -> String {
    let mut out = String::with_capacity(points.len() * 60);
    for p in points {
        let _ = writeln!(out, "{} {} {}", p[0], p[1], p[2]);
    }
    out
}

pub fn parse_triples(text: &str, path: &Path) -> Result<Vec<Point3>> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_ascii_whitespace();
        let mut p = [0.0; 3];
        for c in p.iter_mut() {
            let field = fields
                .next()
                .ok_or_else(|| Error::format(path, lineno + 1, "expected three values"))?;
            *c = field
                .parse::<f64>()
                .map_err(|e| Error::format(path, lineno + 1, format!("{field:?}: {e}")))?;
            if !c.is_finite() {
                return Err(Error::format(path, lineno + 1, "non-finite coordinate"));
            }
        }
        if fields.next().is_some() {
            return Err(Error::format(path, lineno + 1, "expected three values"));
        }
        points.push(p);
    }
    Ok(points)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_xyz(path: &Path, frame_index: usize) -> Result<PointCloud> {
    let points = parse_triples(&read_text(path)?, path)?;
    if points.is_empty() {
        return Err(Error::format(path, 0, "point cloud file has no points"));
    }
    PointCloud::new(points, frame_index)
}

pub fn write_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_text(path, &format_triples(cloud.points()))
}

pub fn read_flow(path: &Path) -> Result<Vec<Point3>> {
    parse_triples(&read_text(path)?, path)
}

pub fn write_flow(path: &Path, displacements: &[Point3]) -> Result<()> {
    write_text(path, &format_triples(displacements))
}

pub fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|e| Error::format(path, i + 1, format!("{:?}: {e}", l.trim())))
        })
        .collect()
}

pub fn write_indices(path: &Path, indices: &[usize]) -> Result<()> {
    let mut out = String::with_capacity(indices.len() * 6);
    for i in indices {
        let _ = writeln!(out, "{i}");
    }
    write_text(path, &out)
}

pub fn read_corr(path: &Path, source_frame: usize, target_frame: usize) -> Result<CorrespondenceMap> {
    Ok(CorrespondenceMap::new(source_frame, target_frame, read_indices(path)?))
}

pub fn write_corr(path: &Path, map: &CorrespondenceMap) -> Result<()> {
    write_indices(path, &map.matches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn writes_one_line_per_point() {
        let text = format_triples(&[[1.0, -0.5, 0.25], [0.1, 2.0, 3.0]]);
        assert_eq!(text, "1 -0.5 0.25\n0.1 2 3\n");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_triples("0 0 0\n1 2\n", Path::new("x.xyz")).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }), "{err}");
        let err = parse_triples("0 0 nan\n", Path::new("x.xyz")).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
        assert!(parse_triples("1 2 3 4\n", Path::new("x.xyz")).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = PointCloud::new(vec![[0.1, 0.2, 0.3], [1e-17, -4.0, 5.5]], 2).unwrap();
        let p = dir.path().join("a.xyz");
        write_xyz(&p, &cloud).unwrap();
        assert_eq!(read_xyz(&p, 2).unwrap(), cloud);

        let map = CorrespondenceMap::new(0, 1, vec![3, 0, 2]);
        let p = dir.path().join("a.corr");
        write_corr(&p, &map).unwrap();
        assert_eq!(read_corr(&p, 0, 1).unwrap(), map);
    }

    proptest! {
        #[test]
        fn triples_round_trip_exactly(pts in prop::collection::vec(prop::array::uniform3(-1e6f64..1e6), 1..50)) {
            let text = format_triples(&pts);
            prop_assert_eq!(parse_triples(&text, Path::new("p")).unwrap(), pts);
        }
    }
}
