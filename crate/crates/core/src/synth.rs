//! Synthetic datasets with planted structure.
//!
//! A camera moves along the x axis in front of a wall of landmarks. Every
//! landmark carries a descriptor drawn around one of a set of well separated
//! cluster centers; each observation adds fresh descriptor noise and pixel
//! noise. Global descriptors come from a smooth kernel over camera position,
//! so nearby cameras get nearby global descriptors.
//!
//! Planted structure:
//! * revisits `(i, j)`: frame `j` is taken from frame `i`'s pose plus a
//!   small offset and sees the same landmarks;
//! * aliases `(a, b)`: frame `b` repeats frame `a`'s keypoints with fresh
//!   descriptor noise, but its global descriptor is orthogonal to `a`'s.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::database::KeyframeDatabase;
use crate::dataset::{write_pairs, write_poses, ALIASES_FILE, INTRINSICS_FILE, LOOPS_FILE, POSES_FILE};
use crate::error::{Error, Result};
use crate::features::{back_project, write_frame_features, CameraIntrinsics, FrameFeatures, Keypoint, KeypointPoint};
use crate::geometry::{exp_so3, project, Pose};
use crate::binio::write_file;
use crate::vocabulary::synthetic_vocabulary;

pub const IMAGE_WIDTH: f64 = 640.0;
pub const IMAGE_HEIGHT: f64 = 480.0;

const FRAME_STEP_M: f64 = 3.0;
const WALL_NEAR: f64 = 4.0;
const WALL_FAR: f64 = 8.0;
const WALL_HALF_HEIGHT: f64 = 3.0;
const ANCHOR_SPACING_M: f64 = 1.0;
const ANCHOR_WIDTH_M: f64 = 2.0;
const REVISIT_OFFSET_M: f64 = 0.2;
const ROTATION_JITTER_RAD: f64 = 0.0175;

pub fn synthetic_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_frames: usize,
    /// Frames of the separate vocabulary-training sequence.
    pub train_frames: usize,
    /// Expected number of keypoints per frame.
    pub descriptors_per_frame: usize,
    pub num_clusters: usize,
    /// Minimum distance between cluster centers, in units of the
    /// within-cluster spread.
    pub cluster_separation: f64,
    /// Typical norm of a landmark's offset from its cluster center.
    pub within_cluster_sigma: f64,
    /// Norm of the per-observation descriptor noise as a fraction of the
    /// cluster separation distance.
    pub descriptor_noise: f64,
    pub local_dim: usize,
    pub global_dim: usize,
    /// Relative norm of the noise added to global descriptors.
    pub global_noise: f64,
    pub pixel_noise: f64,
    /// Planted loops as (source, target) frame indices. When empty,
    /// `num_revisits` pairs are placed automatically.
    pub revisit_pairs: Vec<(usize, usize)>,
    /// Planted aliases as (original, alias). When empty, `num_aliases`
    /// pairs are placed automatically.
    pub alias_pairs: Vec<(usize, usize)>,
    pub num_revisits: usize,
    pub num_aliases: usize,
    /// Minimum frame distance between the two frames of a planted pair.
    pub min_pair_gap: usize,
    /// Queries per re-localization family.
    pub num_queries: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_frames: 200,
            train_frames: 120,
            descriptors_per_frame: 100,
            num_clusters: 1000,
            cluster_separation: 10.0,
            within_cluster_sigma: 1.0,
            descriptor_noise: 0.05,
            local_dim: 32,
            global_dim: 128,
            global_noise: 0.05,
            pixel_noise: 0.5,
            revisit_pairs: Vec::new(),
            alias_pairs: Vec::new(),
            num_revisits: 20,
            num_aliases: 5,
            min_pair_gap: 40,
            num_queries: 20,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_frames", self.num_frames),
            ("descriptors_per_frame", self.descriptors_per_frame),
            ("num_clusters", self.num_clusters),
            ("local_dim", self.local_dim),
            ("global_dim", self.global_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.cluster_separation > 0.0 && self.within_cluster_sigma > 0.0) {
            return Err(Error::Config("cluster_separation and within_cluster_sigma must be positive".into()));
        }
        for (name, v) in [
            ("descriptor_noise", self.descriptor_noise),
            ("global_noise", self.global_noise),
            ("pixel_noise", self.pixel_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        for &(a, b) in self.revisit_pairs.iter().chain(&self.alias_pairs) {
            if a >= b || b >= self.num_frames {
                return Err(Error::Config(format!(
                    "pair ({a}, {b}) must satisfy first < second < num_frames"
                )));
            }
        }
        Ok(())
    }

    fn cluster_distance(&self) -> f64 {
        self.cluster_separation * self.within_cluster_sigma
    }

    fn noise_std(&self) -> f64 {
        self.descriptor_noise * self.cluster_distance() / (self.local_dim as f64).sqrt()
    }
}

/// A frame with its ground-truth pose.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFrame {
    pub frame: FrameFeatures,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub config: SynthConfig,
    pub intrinsics: CameraIntrinsics,
    pub train: Vec<LabeledFrame>,
    pub sequence: Vec<LabeledFrame>,
    /// Planted loops as (source frame id, revisiting frame id).
    pub loops: Vec<(u64, u64)>,
    pub aliases: Vec<(u64, u64)>,
    /// Copies of map frames.
    pub queries_exact: Vec<LabeledFrame>,
    /// Re-observations from offset viewpoints with fresh noise.
    pub queries_noisy: Vec<LabeledFrame>,
    /// Views of unrelated landmarks with unrelated global descriptors.
    pub queries_disjoint: Vec<LabeledFrame>,
}

fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect()
}

fn unit_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v = gaussian_vec(rng, n, 1.0);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn to_f32_unit(v: &[f64]) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / norm) as f32).collect()
}

/// Cluster centers pairwise at least `min_dist` apart.
fn sample_centers(rng: &mut ChaCha8Rng, count: usize, dim: usize, min_dist: f64) -> Result<Vec<Vec<f64>>> {
    let scale = 1.5 * min_dist / (2.0 * dim as f64).sqrt();
    let min_sq = min_dist * min_dist;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while centers.len() < count {
        attempts += 1;
        if attempts > 100 * count + 1000 {
            return Err(Error::Config(format!(
                "cannot place {count} clusters {min_dist} apart in {dim} dimensions"
            )));
        }
        let c = gaussian_vec(rng, dim, scale);
        let clear = centers
            .iter()
            .all(|o| o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() >= min_sq);
        if clear {
            centers.push(c);
        }
    }
    Ok(centers)
}

struct Landmark {
    position: Vector3<f64>,
    descriptor: Vec<f64>,
}

/// Expected visible landmarks per meter of wall at unit density.
fn visible_per_density(k: &CameraIntrinsics) -> f64 {
    let steps = 200;
    let dz = (WALL_FAR - WALL_NEAR) / steps as f64;
    let mut acc = 0.0;
    for s in 0..steps {
        let z = WALL_NEAR + (s as f64 + 0.5) * dz;
        let width = z * IMAGE_WIDTH / k.fx;
        let half_h = z * (IMAGE_HEIGHT / 2.0) / k.fy;
        acc += width * (half_h / WALL_HALF_HEIGHT).min(1.0);
    }
    acc / steps as f64
}

/// Landmarks on a wall spanning `[x0, x1]`, at depth sign `side`.
fn make_wall(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    centers: &[Vec<f64>],
    x0: f64,
    x1: f64,
    side: f64,
    k: &CameraIntrinsics,
) -> Vec<Landmark> {
    let density = cfg.descriptors_per_frame as f64 / visible_per_density(k);
    let count = ((x1 - x0) * density).round() as usize;
    let offset_std = cfg.within_cluster_sigma / (cfg.local_dim as f64).sqrt();
    (0..count)
        .map(|_| {
            let position = Vector3::new(
                rng.random_range(x0..x1),
                rng.random_range(-WALL_HALF_HEIGHT..WALL_HALF_HEIGHT),
                side * rng.random_range(WALL_NEAR..WALL_FAR),
            );
            let c = &centers[rng.random_range(0..centers.len())];
            let offset = gaussian_vec(rng, cfg.local_dim, offset_std);
            let descriptor = c.iter().zip(offset).map(|(a, b)| a + b).collect();
            Landmark { position, descriptor }
        })
        .collect()
}

/// Pose of a camera at `center` whose camera-to-world rotation is `r_cw`.
fn camera_pose(r_cw: nalgebra::Matrix3<f64>, center: Vector3<f64>) -> Pose {
    let rotation = r_cw.transpose();
    Pose { rotation, translation: -(rotation * center) }
}

fn jitter(rng: &mut ChaCha8Rng) -> nalgebra::Matrix3<f64> {
    let w = Vector3::new(
        rng.random_range(-ROTATION_JITTER_RAD..ROTATION_JITTER_RAD),
        rng.random_range(-ROTATION_JITTER_RAD..ROTATION_JITTER_RAD),
        rng.random_range(-ROTATION_JITTER_RAD..ROTATION_JITTER_RAD),
    );
    exp_so3(&w)
}

fn trajectory_pose(rng: &mut ChaCha8Rng, t: usize, r_base: nalgebra::Matrix3<f64>) -> Pose {
    camera_pose(r_base * jitter(rng), Vector3::new(FRAME_STEP_M * t as f64, 0.0, 0.0))
}

fn offset_pose(rng: &mut ChaCha8Rng, pose: &Pose) -> Pose {
    let dir = Vector3::from_vec(unit_vec(rng, 3));
    let r_cw = pose.rotation.transpose() * jitter(rng);
    camera_pose(r_cw, pose.center() + dir * REVISIT_OFFSET_M)
}

/// Observation of a landmark set: which landmark every keypoint shows.
struct Observation {
    frame: FrameFeatures,
    landmarks: Vec<usize>,
}

struct Observer<'a> {
    cfg: &'a SynthConfig,
    k: CameraIntrinsics,
}

impl Observer<'_> {
    fn noisy_descriptor(&self, rng: &mut ChaCha8Rng, base: &[f64]) -> Vec<f32> {
        let std = self.cfg.noise_std();
        base.iter()
            .map(|b| {
                let z: f64 = StandardNormal.sample(rng);
                (b + z * std) as f32
            })
            .collect()
    }

    fn observe(&self, rng: &mut ChaCha8Rng, frame_id: u64, pose: &Pose, world: &[Landmark], global: Vec<f32>) -> Observation {
        let mut keypoints = Vec::new();
        let mut descriptors = Vec::new();
        let mut points = Vec::new();
        let mut ids = Vec::new();
        let center_x = pose.center().x;
        for (li, lm) in world.iter().enumerate() {
            if (lm.position.x - center_x).abs() > 2.0 * WALL_FAR {
                continue;
            }
            let cam = pose.transform(&lm.position);
            if cam.z < 0.5 {
                continue;
            }
            let Ok(px) = project(&lm.position, pose, &self.k) else { continue };
            let nx: f64 = StandardNormal.sample(rng);
            let ny: f64 = StandardNormal.sample(rng);
            let noisy = px + Vector2::new(nx, ny) * self.cfg.pixel_noise;
            let (u, v) = (noisy.x as f32, noisy.y as f32);
            if !(u >= 0.0 && (u as f64) < IMAGE_WIDTH && v >= 0.0 && (v as f64) < IMAGE_HEIGHT) {
                continue;
            }
            let score = rng.random_range(0.05f32..1.0);
            let p = back_project(u as f64, v as f64, cam.z, &self.k);
            points.push(KeypointPoint {
                keypoint: keypoints.len() as u32,
                position: [p[0] as f32, p[1] as f32, p[2] as f32],
            });
            keypoints.push(Keypoint::new(u, v, score));
            descriptors.extend(self.noisy_descriptor(rng, &lm.descriptor));
            ids.push(li);
        }
        Observation {
            frame: FrameFeatures {
                frame_id,
                keypoints,
                local_dim: self.cfg.local_dim,
                local_descriptors: descriptors,
                global_descriptor: global,
                points3d: Some(points),
            },
            landmarks: ids,
        }
    }
}

/// Smooth place embedding: Gaussian-weighted sum of random unit vectors
/// anchored along the x axis.
struct PlaceEmbedding {
    x0: f64,
    anchors: Vec<Vec<f64>>,
    noise: f64,
}

impl PlaceEmbedding {
    fn new(rng: &mut ChaCha8Rng, x0: f64, x1: f64, dim: usize, noise: f64) -> Self {
        let n = ((x1 - x0) / ANCHOR_SPACING_M).ceil() as usize + 1;
        Self {
            x0,
            anchors: (0..n).map(|_| unit_vec(rng, dim)).collect(),
            noise,
        }
    }

    fn raw(&self, c: &Vector3<f64>) -> Vec<f64> {
        let dim = self.anchors[0].len();
        let mut g = vec![0.0; dim];
        let reach = (4.0 * ANCHOR_WIDTH_M / ANCHOR_SPACING_M).ceil() as isize;
        let center = ((c.x - self.x0) / ANCHOR_SPACING_M).round() as isize;
        for a in center - reach..=center + reach {
            if a < 0 || a as usize >= self.anchors.len() {
                continue;
            }
            let pos = Vector3::new(self.x0 + a as f64 * ANCHOR_SPACING_M, 0.0, 0.0);
            let w = (-(c - pos).norm_squared() / (2.0 * ANCHOR_WIDTH_M * ANCHOR_WIDTH_M)).exp();
            for (gi, ai) in g.iter_mut().zip(&self.anchors[a as usize]) {
                *gi += w * ai;
            }
        }
        g
    }

    fn sample(&self, rng: &mut ChaCha8Rng, c: &Vector3<f64>) -> Vec<f64> {
        let mut g = self.raw(c);
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let std = self.noise * norm / (g.len() as f64).sqrt();
        for gi in &mut g {
            let z: f64 = StandardNormal.sample(rng);
            *gi += z * std;
        }
        g
    }
}

/// `g` with its component along `against` removed, L2-normalized.
fn orthogonalize(g: &[f64], against: &[f32]) -> Vec<f32> {
    let a: Vec<f64> = against.iter().map(|v| *v as f64).collect();
    let an = a.iter().map(|x| x * x).sum::<f64>();
    let d = g.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>() / an;
    let r: Vec<f64> = g.iter().zip(&a).map(|(x, y)| x - d * y).collect();
    to_f32_unit(&r)
}

/// Automatic (source, target) placement: targets packed at the end of the
/// sequence three frames apart, sources spread over the part at least
/// `min_pair_gap` frames earlier.
fn place_pairs(rng: &mut ChaCha8Rng, cfg: &SynthConfig, count: usize) -> Result<Vec<(usize, usize)>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let n = cfg.num_frames;
    let span = 3 * (count - 1);
    if n < span + cfg.min_pair_gap + 2 {
        return Err(Error::Config(format!("{n} frames are too few for {count} planted pairs")));
    }
    let first_target = n - 1 - span;
    let last_source = first_target - cfg.min_pair_gap;
    let mut slots: Vec<usize> = (0..=last_source).step_by(3).collect();
    if slots.len() < count {
        return Err(Error::Config(format!("{n} frames are too few for {count} planted pairs")));
    }
    slots.shuffle(rng);
    let mut sources: Vec<usize> = slots[..count].to_vec();
    sources.sort_unstable();
    Ok(sources.into_iter().enumerate().map(|(m, s)| (s, first_target + 3 * m)).collect())
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let k = synthetic_intrinsics();
    let observer = Observer { cfg, k };

    let mut rng = sub_rng(cfg.seed, 1);
    // map clusters first, then a disjoint pool for the unrelated queries
    let all_centers = sample_centers(
        &mut rng,
        cfg.num_clusters + cfg.num_clusters.min(200),
        cfg.local_dim,
        cfg.cluster_distance(),
    )?;
    let (centers, foreign) = all_centers.split_at(cfg.num_clusters);

    // training environment: its own landmarks and trajectory
    let mut rng = sub_rng(cfg.seed, 2);
    let forward = nalgebra::Matrix3::identity();
    let train_len = FRAME_STEP_M * cfg.train_frames.saturating_sub(1) as f64;
    let train_world = make_wall(&mut rng, cfg, centers, -2.0 * WALL_FAR, train_len + 2.0 * WALL_FAR, 1.0, &k);
    let train: Vec<LabeledFrame> = (0..cfg.train_frames)
        .map(|t| {
            let pose = trajectory_pose(&mut rng, t, forward);
            let g = to_f32_unit(&unit_vec(&mut rng, cfg.global_dim));
            let obs = observer.observe(&mut rng, t as u64, &pose, &train_world, g);
            LabeledFrame { frame: obs.frame, pose }
        })
        .collect();

    // mapped environment
    let mut rng = sub_rng(cfg.seed, 3);
    let seq_len = FRAME_STEP_M * (cfg.num_frames - 1) as f64;
    let (x0, x1) = (-2.0 * WALL_FAR, seq_len + 2.0 * WALL_FAR);
    let world = make_wall(&mut rng, cfg, centers, x0, x1, 1.0, &k);
    let places = PlaceEmbedding::new(&mut rng, x0, x1, cfg.global_dim, cfg.global_noise);

    let mut revisits = cfg.revisit_pairs.clone();
    let mut aliases = cfg.alias_pairs.clone();
    if revisits.is_empty() && aliases.is_empty() {
        let mut pairs = place_pairs(&mut rng, cfg, cfg.num_revisits + cfg.num_aliases)?;
        let mut kinds: Vec<bool> = (0..pairs.len()).map(|i| i < cfg.num_aliases).collect();
        kinds.shuffle(&mut rng);
        for (pair, alias) in pairs.drain(..).zip(kinds) {
            if alias {
                aliases.push(pair);
            } else {
                revisits.push(pair);
            }
        }
    } else if revisits.is_empty() {
        revisits = place_pairs(&mut rng, cfg, cfg.num_revisits)?;
    } else if aliases.is_empty() {
        aliases = place_pairs(&mut rng, cfg, cfg.num_aliases)?;
    }
    let mut targets: Vec<usize> = revisits.iter().chain(&aliases).map(|p| p.1).collect();
    targets.sort_unstable();
    if targets.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("a frame is the target of two planted pairs".into()));
    }
    for &(s, _) in revisits.iter().chain(&aliases) {
        if targets.binary_search(&s).is_ok() {
            return Err(Error::Config(format!("frame {s} is both a pair source and a pair target")));
        }
    }

    let mut poses: Vec<Pose> = (0..cfg.num_frames).map(|t| trajectory_pose(&mut rng, t, forward)).collect();
    for &(i, j) in &revisits {
        poses[j] = offset_pose(&mut rng, &poses[i]);
    }
    let mut observations: Vec<Option<Observation>> = (0..cfg.num_frames).map(|_| None).collect();
    for t in 0..cfg.num_frames {
        if aliases.iter().any(|p| p.1 == t) {
            continue;
        }
        let g = to_f32_unit(&places.sample(&mut rng, &poses[t].center()));
        observations[t] = Some(observer.observe(&mut rng, t as u64, &poses[t], &world, g));
    }
    for &(a, b) in &aliases {
        let src = observations[a].as_ref().expect("alias sources are observed");
        let mut frame = src.frame.clone();
        frame.frame_id = b as u64;
        frame.local_descriptors.clear();
        for &li in &src.landmarks {
            let d = observer.noisy_descriptor(&mut rng, &world[li].descriptor);
            frame.local_descriptors.extend(d);
        }
        let own = places.sample(&mut rng, &poses[b].center());
        frame.global_descriptor = orthogonalize(&own, &src.frame.global_descriptor);
        observations[b] = Some(Observation { frame, landmarks: src.landmarks.clone() });
    }
    let sequence: Vec<LabeledFrame> = observations
        .into_iter()
        .zip(&poses)
        .map(|(o, p)| LabeledFrame { frame: o.expect("every frame observed").frame, pose: *p })
        .collect();

    // query families, sourced from frames that are not pair targets
    let mut rng = sub_rng(cfg.seed, 4);
    let normal: Vec<usize> = (0..cfg.num_frames).filter(|t| targets.binary_search(t).is_err()).collect();
    let picks: Vec<usize> = (0..cfg.num_queries.min(normal.len()))
        .map(|m| normal[m * normal.len() / cfg.num_queries.min(normal.len()).max(1)])
        .collect();
    let mut queries_exact = Vec::new();
    let mut queries_noisy = Vec::new();
    for (m, &t) in picks.iter().enumerate() {
        let mut frame = sequence[t].frame.clone();
        frame.frame_id = m as u64;
        queries_exact.push(LabeledFrame { frame, pose: sequence[t].pose });

        let pose = offset_pose(&mut rng, &sequence[t].pose);
        let g = to_f32_unit(&places.sample(&mut rng, &pose.center()));
        let obs = observer.observe(&mut rng, m as u64, &pose, &world, g);
        queries_noisy.push(LabeledFrame { frame: obs.frame, pose });
    }
    let back_world = make_wall(&mut rng, cfg, foreign, x0, x1, -1.0, &k);
    let turned = exp_so3(&Vector3::new(0.0, std::f64::consts::PI, 0.0));
    let mut queries_disjoint = Vec::new();
    for (m, &t) in picks.iter().enumerate() {
        let pose = camera_pose(turned * jitter(&mut rng), sequence[t].pose.center());
        let g = to_f32_unit(&unit_vec(&mut rng, cfg.global_dim));
        let obs = observer.observe(&mut rng, m as u64, &pose, &back_world, g);
        queries_disjoint.push(LabeledFrame { frame: obs.frame, pose });
    }

    let ids = |v: &[(usize, usize)]| {
        let mut out: Vec<(u64, u64)> = v.iter().map(|&(a, b)| (a as u64, b as u64)).collect();
        out.sort_unstable_by_key(|p| p.1);
        out
    };
    Ok(SyntheticDataset {
        config: cfg.clone(),
        intrinsics: k,
        train,
        sequence,
        loops: ids(&revisits),
        aliases: ids(&aliases),
        queries_exact,
        queries_noisy,
        queries_disjoint,
    })
}

fn write_family(dir: &Path, frames: &[LabeledFrame], k: &CameraIntrinsics) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in frames {
        write_frame_features(&f.frame, dir.join(crate::database::frame_file_name(f.frame.frame_id)))?;
    }
    write_poses(dir.join(POSES_FILE), frames.iter().map(|f| (f.frame.frame_id, &f.pose)))?;
    write_file(&dir.join(INTRINSICS_FILE), format!("{k}\n").as_bytes())
}

pub const TRAIN_DIR: &str = "train";
pub const SEQUENCE_DIR: &str = "seq";
pub const QUERIES_EXACT_DIR: &str = "queries_exact";
pub const QUERIES_NOISY_DIR: &str = "queries_noisy";
pub const QUERIES_DISJOINT_DIR: &str = "queries_disjoint";

impl SyntheticDataset {
    /// Writes every family into its own subdirectory of `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let k = &self.intrinsics;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join(INTRINSICS_FILE), format!("{k}\n").as_bytes())?;
        write_family(&dir.join(TRAIN_DIR), &self.train, k)?;
        let seq = dir.join(SEQUENCE_DIR);
        write_family(&seq, &self.sequence, k)?;
        write_pairs(seq.join(LOOPS_FILE), &self.loops)?;
        write_pairs(seq.join(ALIASES_FILE), &self.aliases)?;
        write_family(&dir.join(QUERIES_EXACT_DIR), &self.queries_exact, k)?;
        write_family(&dir.join(QUERIES_NOISY_DIR), &self.queries_noisy, k)?;
        write_family(&dir.join(QUERIES_DISJOINT_DIR), &self.queries_disjoint, k)
    }
}

pub fn generate_synthetic_to(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<SyntheticDataset> {
    let ds = generate_synthetic(cfg)?;
    ds.write(out_dir)?;
    Ok(ds)
}

/// Re-localization scene whose 2D-3D matches are split over two map
/// keyframes, plus distractor keyframes elsewhere.
#[derive(Debug, Clone)]
pub struct PlantedSplit {
    pub db: KeyframeDatabase,
    pub query: FrameFeatures,
    pub query_pose: Pose,
    pub intrinsics: CameraIntrinsics,
    /// Ids of the two keyframes that share the query's landmarks.
    pub split_keyframes: (u32, u32),
}

/// Builds a planted-split scene: the query sees `2 * half` landmarks, one
/// map keyframe holds 3D points for the first half, its id-neighbour for
/// the second.
pub fn planted_split_scene(seed: u64, half: usize) -> Result<PlantedSplit> {
    let cfg = SynthConfig { seed, ..SynthConfig::default() };
    let k = synthetic_intrinsics();
    let observer = Observer { cfg: &cfg, k };
    let mut rng = sub_rng(seed, 7);
    let n = 2 * half;
    let distractors = 8;
    let centers = sample_centers(&mut rng, n + distractors * n, cfg.local_dim, cfg.cluster_distance())?;
    let offset_std = cfg.within_cluster_sigma / (cfg.local_dim as f64).sqrt();
    let landmark = |rng: &mut ChaCha8Rng, c: &[f64], position: Vector3<f64>| Landmark {
        position,
        descriptor: c.iter().zip(gaussian_vec(rng, cfg.local_dim, offset_std)).map(|(a, b)| a + b).collect(),
    };

    let query_pose = camera_pose(jitter(&mut rng), Vector3::new(0.0, 0.0, 0.0));
    let world: Vec<Landmark> = (0..n)
        .map(|i| {
            let z = rng.random_range(WALL_NEAR..WALL_FAR);
            let u = rng.random_range(40.0..IMAGE_WIDTH - 40.0);
            let v = rng.random_range(40.0..IMAGE_HEIGHT - 40.0);
            let cam = Vector3::from(back_project(u, v, z, &k));
            landmark(&mut rng, &centers[i], query_pose.to_world(&cam))
        })
        .collect();
    let places = PlaceEmbedding::new(&mut rng, -10.0, 400.0, cfg.global_dim, cfg.global_noise);

    let vocab = Arc::new(synthetic_vocabulary(64, 4, cfg.local_dim, seed)?);
    let mut db = KeyframeDatabase::new(vocab);
    // distractors far along the x axis, ids spaced beyond any group gap
    let add_distractor = |db: &mut KeyframeDatabase, rng: &mut ChaCha8Rng, d: usize| -> Result<()> {
        let pose = camera_pose(jitter(rng), Vector3::new(30.0 + 40.0 * d as f64, 0.0, 0.0));
        let lms: Vec<Landmark> = (0..n)
            .map(|i| {
                let cam = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5), rng.random_range(WALL_NEAR..WALL_FAR));
                landmark(rng, &centers[n + d * n + i], pose.to_world(&cam))
            })
            .collect();
        let g = to_f32_unit(&places.sample(rng, &pose.center()));
        let obs = observer.observe(rng, 1000 + d as u64, &pose, &lms, g);
        db.add_keyframe(obs.frame, pose)?;
        Ok(())
    };
    for d in 0..distractors / 2 {
        add_distractor(&mut db, &mut rng, d)?;
    }
    let mut split_ids = Vec::new();
    for part in 0..2 {
        let pose = offset_pose(&mut rng, &query_pose);
        let g = to_f32_unit(&places.sample(&mut rng, &pose.center()));
        let mut obs = observer.observe(&mut rng, 500 + part as u64, &pose, &world, g);
        let keep: Vec<bool> = obs.landmarks.iter().map(|&li| (li < half) == (part == 0)).collect();
        if let Some(points) = obs.frame.points3d.as_mut() {
            points.retain(|p| keep[p.keypoint as usize]);
        }
        split_ids.push(db.add_keyframe(obs.frame, pose)?);
    }
    for d in distractors / 2..distractors {
        add_distractor(&mut db, &mut rng, d)?;
    }

    let g = to_f32_unit(&places.sample(&mut rng, &query_pose.center()));
    let query = observer.observe(&mut rng, 0, &query_pose, &world, g).frame;
    Ok(PlantedSplit {
        db,
        query,
        query_pose,
        intrinsics: k,
        split_keyframes: (split_ids[0], split_ids[1]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            num_frames: 80,
            train_frames: 20,
            num_revisits: 3,
            num_aliases: 2,
            min_pair_gap: 30,
            num_queries: 4,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_structured() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sequence.len(), 80);
        assert_eq!(a.loops.len(), 3);
        assert_eq!(a.aliases.len(), 2);
        let mean = a.sequence.iter().map(|f| f.frame.num_keypoints()).sum::<usize>() as f64 / 80.0;
        assert!((mean - 100.0).abs() < 25.0, "mean keypoints {mean}");
        for f in a.sequence.iter().chain(&a.queries_noisy).chain(&a.queries_disjoint) {
            f.frame.validate().unwrap();
        }
        for &(s, t) in &a.loops {
            assert!(t - s >= 30);
        }
    }

    #[test]
    fn points_reproject_to_keypoints() {
        let ds = generate_synthetic(&small()).unwrap();
        let f = &ds.sequence[10].frame;
        for p in f.points3d.as_ref().unwrap() {
            let cam = Vector3::new(p.position[0] as f64, p.position[1] as f64, p.position[2] as f64);
            let px = crate::geometry::project_camera(&cam, &ds.intrinsics).unwrap();
            let kp = f.keypoints[p.keypoint as usize];
            assert!((px - Vector2::new(kp.x as f64, kp.y as f64)).norm() < 1e-3);
        }
    }

    #[test]
    fn alias_globals_are_orthogonal() {
        let ds = generate_synthetic(&small()).unwrap();
        for &(a, b) in &ds.aliases {
            let d = crate::database::global_distance(
                &ds.sequence[a as usize].frame.global_descriptor,
                &ds.sequence[b as usize].frame.global_descriptor,
            )
            .unwrap();
            assert!((d - 1.0).abs() < 1e-5);
        }
        for &(i, j) in &ds.loops {
            let d = crate::database::global_distance(
                &ds.sequence[i as usize].frame.global_descriptor,
                &ds.sequence[j as usize].frame.global_descriptor,
            )
            .unwrap();
            assert!(d < 0.1, "revisit distance {d}");
        }
    }

    #[test]
    fn rejects_bad_pairs() {
        let cfg = SynthConfig { revisit_pairs: vec![(10, 5)], ..small() };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
        let cfg = SynthConfig { num_frames: 20, ..small() };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }
}
