//! Per-frame feature data model and the `.dxf` / `.dxdm` file formats.
//!
//! Frames are produced by an external extractor (or the synthetic generator)
//! and consist of scored keypoints, one local descriptor per keypoint, a
//! single L2-normalized global descriptor, and optionally depth-derived 3D
//! points in the camera frame.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;

use crate::binio::{count_u32, read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const FRAME_MAGIC: [u8; 4] = *b"DXFT";
pub const FRAME_VERSION: u32 = 1;
pub const DEPTH_MAGIC: [u8; 4] = *b"DXDM";

/// Size in bytes of the fixed `.dxf` header.
pub const FRAME_HEADER_BYTES: usize = 4 + 4 + 8 + 4 + 4 + 4 + 1;

/// Global descriptors whose norm is within this distance of one are kept as is.
pub const NORM_EXACT_TOL: f64 = 1e-6;
/// Global descriptors off by more than this are rejected on load.
pub const NORM_REJECT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    /// Image column in pixels.
    pub x: f32,
    /// Image row in pixels.
    pub y: f32,
    /// Detection confidence in `[0, 1]`.
    pub score: f32,
}

impl Keypoint {
    pub fn new(x: f32, y: f32, score: f32) -> Self {
        Self { x, y, score }
    }
}

/// A 3D point attached to a keypoint, in camera coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointPoint {
    pub keypoint: u32,
    pub position: [f32; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub frame_id: u64,
    pub keypoints: Vec<Keypoint>,
    /// Local descriptor length.
    pub local_dim: usize,
    /// Row-major `keypoints.len() x local_dim` matrix.
    pub local_descriptors: Vec<f32>,
    pub global_descriptor: Vec<f32>,
    pub points3d: Option<Vec<KeypointPoint>>,
}

/// Side information from decoding a frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReadReport {
    /// The global descriptor was slightly off unit norm and was rescaled.
    pub renormalized: bool,
}

impl FrameFeatures {
    pub fn num_keypoints(&self) -> usize {
        self.keypoints.len()
    }

    pub fn global_dim(&self) -> usize {
        self.global_descriptor.len()
    }

    /// Local descriptor of keypoint `i`.
    pub fn descriptor(&self, i: usize) -> &[f32] {
        &self.local_descriptors[i * self.local_dim..(i + 1) * self.local_dim]
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &[f32]> + '_ {
        // chunks_exact panics on a zero chunk size
        let dim = self.local_dim.max(1);
        self.local_descriptors.chunks_exact(dim)
    }

    /// Checks every invariant, allowing the global norm to be off by `norm_tol`.
    pub fn validate_with(&self, norm_tol: f64) -> Result<()> {
        let n = self.keypoints.len();
        if self.local_dim == 0 {
            return Err(Error::InvariantViolation("local descriptor dimension is 0".into()));
        }
        if self.local_descriptors.len() != n * self.local_dim {
            return Err(Error::InvariantViolation(format!(
                "{} descriptor values for {n} keypoints of dimension {}",
                self.local_descriptors.len(),
                self.local_dim
            )));
        }
        for (i, kp) in self.keypoints.iter().enumerate() {
            if !kp.x.is_finite() || !kp.y.is_finite() || kp.x < 0.0 || kp.y < 0.0 {
                return Err(Error::InvariantViolation(format!(
                    "keypoint {i} has invalid coordinates ({}, {})",
                    kp.x, kp.y
                )));
            }
            if !(0.0..=1.0).contains(&kp.score) {
                return Err(Error::InvariantViolation(format!(
                    "keypoint {i} score {} outside [0, 1]",
                    kp.score
                )));
            }
        }
        if let Some(i) = self.local_descriptors.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvariantViolation(format!(
                "non-finite local descriptor value at flat index {i}"
            )));
        }
        if self.global_descriptor.is_empty() {
            return Err(Error::InvariantViolation("global descriptor is empty".into()));
        }
        if self.global_descriptor.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvariantViolation("non-finite global descriptor value".into()));
        }
        let norm = global_norm(&self.global_descriptor);
        if (norm - 1.0).abs() > norm_tol {
            return Err(Error::InvariantViolation(format!(
                "global descriptor norm {norm} is not 1"
            )));
        }
        if let Some(points) = &self.points3d {
            for p in points {
                if p.keypoint as usize >= n {
                    return Err(Error::InvariantViolation(format!(
                        "3D point references keypoint {} of {n}",
                        p.keypoint
                    )));
                }
                if p.position.iter().any(|v| !v.is_finite()) || p.position[2] <= 0.0 {
                    return Err(Error::InvariantViolation(format!(
                        "3D point for keypoint {} has invalid position {:?}",
                        p.keypoint, p.position
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(NORM_EXACT_TOL)
    }

    /// Exact `.dxf` size in bytes for this frame.
    pub fn encoded_len(&self) -> usize {
        encoded_frame_len(
            self.keypoints.len(),
            self.local_dim,
            self.global_descriptor.len(),
            self.points3d.as_ref().map(Vec::len),
        )
    }

    /// Index from keypoint to its 3D point, when present.
    pub fn point_lookup(&self) -> Vec<Option<[f32; 3]>> {
        let mut out = vec![None; self.keypoints.len()];
        if let Some(points) = &self.points3d {
            for p in points {
                out[p.keypoint as usize] = Some(p.position);
            }
        }
        out
    }
}

fn global_norm(g: &[f32]) -> f64 {
    g.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt()
}

/// Closed-form `.dxf` size: header, keypoints, descriptors, global
/// descriptor, and the optional 3D point block.
pub fn encoded_frame_len(
    num_keypoints: usize,
    local_dim: usize,
    global_dim: usize,
    num_points: Option<usize>,
) -> usize {
    FRAME_HEADER_BYTES
        + num_keypoints * 12
        + num_keypoints * local_dim * 4
        + global_dim * 4
        + num_points.map_or(0, |p| 4 + 16 * p)
}

pub fn encode_frame_features(frame: &FrameFeatures) -> Result<Vec<u8>> {
    frame.validate_with(NORM_REJECT_TOL)?;
    let mut w = ByteWriter::with_capacity(frame.encoded_len());
    w.bytes(&FRAME_MAGIC);
    w.u32(FRAME_VERSION);
    w.u64(frame.frame_id);
    w.u32(count_u32(frame.keypoints.len(), "keypoint")?);
    w.u32(count_u32(frame.local_dim, "local dimension")?);
    w.u32(count_u32(frame.global_descriptor.len(), "global dimension")?);
    w.u8(frame.points3d.is_some() as u8);
    for kp in &frame.keypoints {
        w.f32(kp.x);
        w.f32(kp.y);
        w.f32(kp.score);
    }
    w.f32s(&frame.local_descriptors);
    w.f32s(&frame.global_descriptor);
    if let Some(points) = &frame.points3d {
        w.u32(count_u32(points.len(), "3D point")?);
        for p in points {
            w.u32(p.keypoint);
            w.f32s(&p.position);
        }
    }
    Ok(w.buf)
}

pub fn decode_frame_features(bytes: &[u8]) -> Result<(FrameFeatures, ReadReport)> {
    let mut r = ByteReader::new(bytes);
    r.magic(&FRAME_MAGIC)?;
    r.version(FRAME_VERSION)?;
    let frame_id = r.u64("frame id")?;
    let num_kp = r.u32("keypoint count")? as usize;
    let local_dim = r.u32("local dimension")? as usize;
    let global_dim = r.u32("global dimension")? as usize;
    let has_points = match r.u8("3D point flag")? {
        0 => false,
        1 => true,
        other => {
            return Err(Error::CorruptPayload(format!("3D point flag is {other}")));
        }
    };

    // Reject inconsistent counts before allocating anything.
    let fixed = (num_kp as u128) * (12 + 4 * local_dim as u128) + 4 * global_dim as u128;
    let min_needed = fixed + if has_points { 4 } else { 0 };
    if (r.remaining() as u128) < min_needed {
        return Err(Error::CorruptPayload(format!(
            "header declares {min_needed} payload bytes, file has {}",
            r.remaining()
        )));
    }

    let mut keypoints = Vec::with_capacity(num_kp);
    for _ in 0..num_kp {
        let x = r.f32("keypoint")?;
        let y = r.f32("keypoint")?;
        let score = r.f32("keypoint")?;
        keypoints.push(Keypoint { x, y, score });
    }
    let mut local_descriptors = Vec::new();
    r.f32_into(num_kp * local_dim, &mut local_descriptors, "local descriptors")?;
    let mut global_descriptor = Vec::new();
    r.f32_into(global_dim, &mut global_descriptor, "global descriptor")?;
    let points3d = if has_points {
        let n = r.u32("3D point count")? as usize;
        if r.remaining() as u128 != 16 * n as u128 {
            return Err(Error::CorruptPayload(format!(
                "{n} 3D points need {} bytes, {} left",
                16 * n as u128,
                r.remaining()
            )));
        }
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let keypoint = r.u32("3D point")?;
            let position = [r.f32("3D point")?, r.f32("3D point")?, r.f32("3D point")?];
            points.push(KeypointPoint { keypoint, position });
        }
        Some(points)
    } else {
        None
    };
    r.finish("frame")?;

    let mut frame = FrameFeatures {
        frame_id,
        keypoints,
        local_dim,
        local_descriptors,
        global_descriptor,
        points3d,
    };
    let mut report = ReadReport::default();
    if frame.global_descriptor.iter().all(|v| v.is_finite()) && !frame.global_descriptor.is_empty() {
        let norm = global_norm(&frame.global_descriptor);
        let off = (norm - 1.0).abs();
        if off > NORM_EXACT_TOL && off <= NORM_REJECT_TOL {
            for v in &mut frame.global_descriptor {
                *v = (*v as f64 / norm) as f32;
            }
            report.renormalized = true;
        }
    }
    frame.validate()?;
    Ok((frame, report))
}

/// Reads a `.dxf` file. A slightly denormalized global descriptor is
/// rescaled and logged.
pub fn read_frame_features(path: impl AsRef<Path>) -> Result<FrameFeatures> {
    let (frame, report) = read_frame_features_with_report(path.as_ref())?;
    if report.renormalized {
        warn!(
            "{}: global descriptor renormalized on load",
            path.as_ref().display()
        );
    }
    Ok(frame)
}

pub fn read_frame_features_with_report(path: impl AsRef<Path>) -> Result<(FrameFeatures, ReadReport)> {
    let bytes = read_file(path.as_ref())?;
    decode_frame_features(&bytes)
}

/// Writes a `.dxf` file. Nothing is written if the frame is invalid.
pub fn write_frame_features(frame: &FrameFeatures, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_frame_features(frame)?;
    write_file(path.as_ref(), &bytes)
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvariantViolation(format!("invalid intrinsics {self}")));
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }
}

impl fmt::Display for CameraIntrinsics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fx={} fy={} cx={} cy={}", self.fx, self.fy, self.cx, self.cy)
    }
}

impl FromStr for CameraIntrinsics {
    type Err = Error;

    /// Parses `fx= fy= cx= cy=` assignments separated by whitespace or
    /// newlines; spaces around `=` are allowed and `#` starts a comment.
    fn from_str(s: &str) -> Result<Self> {
        let mut vals = [None::<f64>; 4];
        let cleaned: String = s
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .collect::<Vec<_>>()
            .join(" ")
            .replace('=', " = ");
        let tokens: Vec<&str> = cleaned.split_whitespace().collect();
        let mut i = 0;
        while i < tokens.len() {
            if i + 2 >= tokens.len() || tokens[i + 1] != "=" {
                return Err(Error::Config(format!("malformed intrinsics near '{}'", tokens[i])));
            }
            let slot = match tokens[i] {
                "fx" => 0,
                "fy" => 1,
                "cx" => 2,
                "cy" => 3,
                other => return Err(Error::Config(format!("unknown intrinsics key '{other}'"))),
            };
            let v: f64 = tokens[i + 2]
                .parse()
                .map_err(|_| Error::Config(format!("bad value for {}: '{}'", tokens[i], tokens[i + 2])))?;
            vals[slot] = Some(v);
            i += 3;
        }
        let get = |slot: usize, name: &str| {
            vals[slot].ok_or_else(|| Error::Config(format!("intrinsics missing {name}")))
        };
        CameraIntrinsics::new(get(0, "fx")?, get(1, "fy")?, get(2, "cx")?, get(3, "cy")?)
    }
}

/// Single-channel depth raster in meters, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, depth: f32) -> Self {
        Self {
            width,
            height,
            data: vec![depth; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, depth: f32) {
        self.data[row * self.width + col] = depth;
    }

    /// 16-byte header: magic, width, height, and a reserved zero word.
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::with_capacity(16 + 4 * self.data.len());
        w.bytes(&DEPTH_MAGIC);
        w.u32(count_u32(self.width, "width")?);
        w.u32(count_u32(self.height, "height")?);
        w.u32(0);
        w.f32s(&self.data);
        Ok(w.buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(&DEPTH_MAGIC)?;
        let width = r.u32("width")? as usize;
        let height = r.u32("height")? as usize;
        let _reserved = r.u32("reserved")?;
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::CorruptPayload("depth raster size overflows".into()))?;
        if r.remaining() as u128 != 4 * n as u128 {
            return Err(Error::CorruptPayload(format!(
                "{width}x{height} raster needs {} bytes, {} present",
                4 * n as u128,
                r.remaining()
            )));
        }
        let mut data = Vec::new();
        r.f32_into(n, &mut data, "depth values")?;
        Ok(Self { width, height, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&read_file(path.as_ref())?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.encode()?)
    }
}

/// Back-projects one pixel with depth `z` through the pinhole model.
pub fn back_project(x: f64, y: f64, z: f64, k: &CameraIntrinsics) -> [f64; 3] {
    [z * (x - k.cx) / k.fx, z * (y - k.cy) / k.fy, z]
}

/// Attaches camera-frame 3D points to every keypoint whose nearest depth
/// pixel holds a finite positive depth. Existing points are replaced.
pub fn lift_keypoints(
    frame: &FrameFeatures,
    depth: &DepthMap,
    intrinsics: &CameraIntrinsics,
) -> Result<FrameFeatures> {
    let mut points = Vec::new();
    for (i, kp) in frame.keypoints.iter().enumerate() {
        let col = kp.x.round();
        let row = kp.y.round();
        if col < 0.0 || col as usize >= depth.width {
            return Err(Error::DimensionMismatch {
                expected: depth.width,
                found: col as usize,
            });
        }
        if row < 0.0 || row as usize >= depth.height {
            return Err(Error::DimensionMismatch {
                expected: depth.height,
                found: row as usize,
            });
        }
        let z = depth.get(col as usize, row as usize);
        if !z.is_finite() || z <= 0.0 {
            continue;
        }
        let p = back_project(kp.x as f64, kp.y as f64, z as f64, intrinsics);
        points.push(KeypointPoint {
            keypoint: i as u32,
            position: [p[0] as f32, p[1] as f32, p[2] as f32],
        });
    }
    let mut out = frame.clone();
    out.points3d = Some(points);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(n: usize, dim: usize) -> FrameFeatures {
        let keypoints = (0..n)
            .map(|i| Keypoint::new(i as f32 * 2.0, 3.0 + i as f32, (i % 10) as f32 / 10.0))
            .collect();
        let local_descriptors = (0..n * dim).map(|i| (i as f32 * 0.37).sin()).collect();
        let mut g: Vec<f32> = (0..16).map(|i| i as f32 + 1.0).collect();
        let norm = g.iter().map(|v| v * v).sum::<f32>().sqrt();
        g.iter_mut().for_each(|v| *v /= norm);
        FrameFeatures {
            frame_id: 42,
            keypoints,
            local_dim: dim,
            local_descriptors,
            global_descriptor: g,
            points3d: None,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut f = frame(7, 5);
        f.points3d = Some(vec![
            KeypointPoint { keypoint: 0, position: [0.1, -0.2, 1.5] },
            KeypointPoint { keypoint: 6, position: [1.0, 2.0, 3.0] },
        ]);
        let bytes = encode_frame_features(&f).unwrap();
        assert_eq!(bytes.len(), f.encoded_len());
        let (back, report) = decode_frame_features(&bytes).unwrap();
        assert_eq!(back, f);
        assert!(!report.renormalized);
        assert_eq!(encode_frame_features(&back).unwrap(), bytes);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = encode_frame_features(&frame(2, 4)).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_frame_features(&bytes), Err(Error::BadMagic { .. })));
        assert!(matches!(decode_frame_features(b"DX"), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut bytes = encode_frame_features(&frame(2, 4)).unwrap();
        bytes[4] = 2;
        assert!(matches!(
            decode_frame_features(&bytes),
            Err(Error::VersionMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn empty_frame_is_accepted() {
        let f = frame(0, 8);
        let (back, _) = decode_frame_features(&encode_frame_features(&f).unwrap()).unwrap();
        assert!(back.keypoints.is_empty());
        assert_eq!(back.global_dim(), 16);
    }

    #[test]
    fn nan_descriptor_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.dxf");
        let mut f = frame(3, 4);
        f.local_descriptors[5] = f32::NAN;
        assert!(matches!(write_frame_features(&f, &path), Err(Error::InvariantViolation(_))));
        assert!(!path.exists());
    }

    #[test]
    fn size_formula_for_default_dimensions() {
        // 29 header + 300*12 keypoints + 300*256*4 descriptors + 4096*4 global
        assert_eq!(encoded_frame_len(300, 256, 4096, None), 29 + 3600 + 307_200 + 16_384);
        let mut f = frame(300, 256);
        let mut g = vec![0.0f32; 4096];
        g[17] = 1.0;
        f.global_descriptor = g;
        assert_eq!(encode_frame_features(&f).unwrap().len(), 327_213);
    }

    #[test]
    fn slightly_denormalized_global_is_rescaled() {
        let mut f = frame(1, 4);
        let bytes_ok = encode_frame_features(&f).unwrap();
        f.global_descriptor.iter_mut().for_each(|v| *v *= 1.0 + 5e-5);
        let bytes = encode_frame_features(&f).unwrap();
        let (back, report) = decode_frame_features(&bytes).unwrap();
        assert!(report.renormalized);
        assert!((global_norm(&back.global_descriptor) - 1.0).abs() < 1e-6);
        assert!(!decode_frame_features(&bytes_ok).unwrap().1.renormalized);

        f.global_descriptor.iter_mut().for_each(|v| *v *= 1.01);
        assert!(encode_frame_features(&f).is_err());
    }

    #[test]
    fn grossly_denormalized_global_is_rejected_on_read() {
        let f = frame(1, 4);
        let mut bytes = encode_frame_features(&f).unwrap();
        let off = bytes.len() - 4;
        bytes[off..].copy_from_slice(&10.0f32.to_le_bytes());
        assert!(matches!(decode_frame_features(&bytes), Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn every_truncation_is_rejected() {
        let mut f = frame(4, 3);
        f.points3d = Some(vec![KeypointPoint { keypoint: 1, position: [0.0, 0.0, 2.0] }]);
        let bytes = encode_frame_features(&f).unwrap();
        for cut in 0..bytes.len() {
            assert!(decode_frame_features(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(decode_frame_features(&longer), Err(Error::CorruptPayload(_))));
    }

    #[test]
    fn intrinsics_parse_variants() {
        let k: CameraIntrinsics = "fx=500 fy=510 cx=320 cy=240".parse().unwrap();
        assert_eq!(k, CameraIntrinsics { fx: 500.0, fy: 510.0, cx: 320.0, cy: 240.0 });
        let k2: CameraIntrinsics = "# camera\nfx = 500\nfy = 510\ncx = 320\ncy = 240\n".parse().unwrap();
        assert_eq!(k, k2);
        assert!("fx=500 fy=510 cx=320".parse::<CameraIntrinsics>().is_err());
        assert!("fx=-1 fy=510 cx=320 cy=1".parse::<CameraIntrinsics>().is_err());
        assert_eq!(k.to_string().parse::<CameraIntrinsics>().unwrap(), k);
    }

    #[test]
    fn depth_map_round_trip_and_truncation() {
        let d = DepthMap::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bytes = d.encode().unwrap();
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(DepthMap::decode(&bytes).unwrap(), d);
        assert_eq!(d.get(2, 1), 6.0);
        for cut in 0..bytes.len() {
            assert!(DepthMap::decode(&bytes[..cut]).is_err());
        }
    }

    fn lift_setup() -> (FrameFeatures, CameraIntrinsics) {
        let mut f = frame(0, 4);
        f.keypoints = vec![
            Keypoint::new(20.0, 15.0, 1.0),
            Keypoint::new(30.0, 15.0, 1.0),
            Keypoint::new(5.0, 5.0, 1.0),
        ];
        f.local_descriptors = vec![0.0; 12];
        (f, CameraIntrinsics::new(10.0, 10.0, 20.0, 15.0).unwrap())
    }

    #[test]
    fn lift_principal_point_and_offset_ray() {
        let (f, k) = lift_setup();
        let mut depth = DepthMap::filled(40, 30, 1.0);
        depth.set(20, 15, 2.0);
        depth.set(5, 5, 0.0);
        let lifted = lift_keypoints(&f, &depth, &k).unwrap();
        let pts = lifted.points3d.unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0], KeypointPoint { keypoint: 0, position: [0.0, 0.0, 2.0] });
        // (cx + fx, cy) at depth 1 lies on the ray (1, 0, 1)
        assert_eq!(pts[1], KeypointPoint { keypoint: 1, position: [1.0, 0.0, 1.0] });
    }

    #[test]
    fn lift_rejects_out_of_bounds_keypoints() {
        let (f, k) = lift_setup();
        let depth = DepthMap::filled(25, 30, 1.0);
        assert!(matches!(lift_keypoints(&f, &depth, &k), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn lift_skips_non_finite_depth() {
        let (f, k) = lift_setup();
        let mut depth = DepthMap::filled(40, 30, f32::NAN);
        depth.set(30, 15, 4.0);
        let pts = lift_keypoints(&f, &depth, &k).unwrap().points3d.unwrap();
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].keypoint, 1);
    }
}
