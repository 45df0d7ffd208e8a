//! Directory layout helpers: frame sequences, pose lists and pair lists.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::binio::{read_file, write_file};
use crate::error::{Error, Result};
use crate::features::{read_frame_features, FrameFeatures};
use crate::geometry::Pose;

pub const POSES_FILE: &str = "poses.txt";
pub const LOOPS_FILE: &str = "loops.txt";
pub const ALIASES_FILE: &str = "aliases.txt";
pub const INTRINSICS_FILE: &str = "intrinsics.txt";

/// `.dxf` files of a directory, sorted by file name.
pub fn frame_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "dxf") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Every frame of a directory, ordered by frame id.
pub fn read_sequence(dir: impl AsRef<Path>) -> Result<Vec<FrameFeatures>> {
    let mut frames = frame_files(dir)?
        .iter()
        .map(read_frame_features)
        .collect::<Result<Vec<_>>>()?;
    frames.sort_by_key(|f| f.frame_id);
    if let Some(w) = frames.windows(2).find(|w| w[0].frame_id == w[1].frame_id) {
        return Err(Error::CorruptPayload(format!("frame id {} appears twice", w[0].frame_id)));
    }
    Ok(frames)
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

/// Parses `frame_id` followed by 12 row-major `[R | t]` values per line.
pub fn parse_poses(text: &str) -> Result<BTreeMap<u64, Pose>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let bad = || Error::CorruptPayload(format!("pose line {}: {raw:?}", n + 1));
        let mut fields = line.split_whitespace();
        let id: u64 = fields.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let mut m = [0.0f64; 12];
        for v in &mut m {
            *v = fields.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        }
        if fields.next().is_some() || !m.iter().all(|v| v.is_finite()) {
            return Err(bad());
        }
        let pose = Pose::from_row_major(&m);
        if pose.orthonormality_error() > 1e-6 {
            return Err(Error::InvariantViolation(format!("pose of frame {id} is not a rotation")));
        }
        if out.insert(id, pose).is_some() {
            return Err(Error::CorruptPayload(format!("frame {id} has two poses")));
        }
    }
    Ok(out)
}

pub fn format_poses<'a>(poses: impl IntoIterator<Item = (u64, &'a Pose)>) -> String {
    let mut s = String::new();
    for (id, pose) in poses {
        let _ = write!(s, "{id}");
        for v in pose.to_row_major() {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    s
}

pub fn read_poses(path: impl AsRef<Path>) -> Result<BTreeMap<u64, Pose>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::CorruptPayload(format!("{} is not UTF-8", path.display())))?;
    parse_poses(&text)
}

pub fn write_poses<'a>(path: impl AsRef<Path>, poses: impl IntoIterator<Item = (u64, &'a Pose)>) -> Result<()> {
    write_file(path.as_ref(), format_poses(poses).as_bytes())
}

/// Poses of a directory's `poses.txt`, or an empty map if there is none.
pub fn read_poses_if_present(dir: impl AsRef<Path>) -> Result<BTreeMap<u64, Pose>> {
    let path = dir.as_ref().join(POSES_FILE);
    if path.exists() {
        read_poses(path)
    } else {
        Ok(BTreeMap::new())
    }
}

/// Parses lines of two frame ids.
pub fn parse_pairs(text: &str) -> Result<Vec<(u64, u64)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let bad = || Error::CorruptPayload(format!("pair line {}: {raw:?}", n + 1));
        let mut fields = line.split_whitespace();
        let a = fields.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let b = fields.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if fields.next().is_some() {
            return Err(bad());
        }
        out.push((a, b));
    }
    Ok(out)
}

pub fn format_pairs(pairs: &[(u64, u64)]) -> String {
    pairs.iter().map(|(a, b)| format!("{a} {b}\n")).collect()
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<(u64, u64)>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::CorruptPayload(format!("{} is not UTF-8", path.display())))?;
    parse_pairs(&text)
}

pub fn write_pairs(path: impl AsRef<Path>, pairs: &[(u64, u64)]) -> Result<()> {
    write_file(path.as_ref(), format_pairs(pairs).as_bytes())
}
