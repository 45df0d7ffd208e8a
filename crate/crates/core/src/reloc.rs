//! Re-localization against a keyframe database.
//!
//! Candidates are retrieved by global descriptor, chained into groups of
//! nearby keyframe ids, and each group pools its 2D-3D matches before a
//! RANSAC pose estimate. The first group that yields a pose wins.

use std::fmt::Write as _;

use nalgebra::{Vector2, Vector3};

use crate::database::{global_distance, KeyframeDatabase};
use crate::error::{Error, Result};
use crate::features::{CameraIntrinsics, FrameFeatures};
use crate::geometry::{ransac_pnp, Correspondence, Pose, RansacParams};
use crate::matching::match_descriptors;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelocConfig {
    pub num_candidates: usize,
    /// Largest keyframe-id step allowed inside one group. Zero forces
    /// singleton groups for distinct ids.
    pub group_gap: u32,
    pub match_ratio: f32,
    pub ransac: RansacParams,
    pub min_group_matches: usize,
}

impl Default for RelocConfig {
    fn default() -> Self {
        Self {
            num_candidates: 5,
            group_gap: 10,
            match_ratio: 0.8,
            ransac: RansacParams::default(),
            min_group_matches: 20,
        }
    }
}

impl RelocConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_candidates == 0 {
            return Err(Error::Config("num_candidates must be at least 1".into()));
        }
        if !(self.match_ratio > 0.0 && self.match_ratio <= 1.0) {
            return Err(Error::Config("match_ratio must lie in (0, 1]".into()));
        }
        self.ransac.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGroup {
    /// Ascending keyframe ids.
    pub keyframe_ids: Vec<u32>,
    pub correspondences: Vec<Correspondence>,
}

/// What happened to one group during [`relocalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub keyframe_ids: Vec<u32>,
    pub best_distance: f64,
    pub matches: usize,
    pub inliers: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelocOutcome {
    pub pose: Option<Pose>,
    /// Correspondences of the winning group and the RANSAC inlier indices.
    pub correspondences: Vec<Correspondence>,
    pub inliers: Vec<usize>,
    /// Retrieved `(keyframe id, global distance)` in rank order.
    pub candidates: Vec<(u32, f64)>,
    pub groups: Vec<GroupReport>,
}

impl RelocOutcome {
    /// Plain-text report, one line per group in the order tried.
    pub fn report(&self) -> String {
        let mut s = String::new();
        for g in &self.groups {
            let ids: Vec<String> = g.keyframe_ids.iter().map(u32::to_string).collect();
            let _ = write!(
                s,
                "group ids={} matches={} inliers={} distance={:.6}",
                ids.join(","),
                g.matches,
                g.inliers.map_or("-".to_string(), |n| n.to_string()),
                g.best_distance
            );
            if let Some(e) = &g.error {
                let _ = write!(s, " error={e}");
            }
            s.push('\n');
        }
        s
    }
}

/// The `m` keyframes nearest to `g` in global distance, ascending, ties to
/// the lower id.
pub fn retrieve_candidates(db: &KeyframeDatabase, g: &[f32], m: usize) -> Result<Vec<(u32, f64)>> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let mut all = db
        .keyframes()
        .iter()
        .map(|kf| Ok((kf.keyframe_id, global_distance(g, &kf.frame.global_descriptor)?)))
        .collect::<Result<Vec<_>>>()?;
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(m);
    Ok(all)
}

/// Sorts ids and chains neighbours whose id step is at most `group_gap`.
pub fn form_groups(candidates: &[u32], group_gap: u32) -> Vec<CandidateGroup> {
    let mut ids = candidates.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut groups: Vec<CandidateGroup> = Vec::new();
    for id in ids {
        match groups.last_mut() {
            Some(g) if id - g.keyframe_ids.last().copied().unwrap_or(id) <= group_gap => g.keyframe_ids.push(id),
            _ => groups.push(CandidateGroup {
                keyframe_ids: vec![id],
                correspondences: Vec::new(),
            }),
        }
    }
    groups
}

/// Pooled 2D-3D correspondences between the query keypoints and the
/// 3D-bearing keypoints of every group member, one per query keypoint
/// (smallest descriptor distance wins), ordered by query keypoint.
pub fn match_to_group(
    query: &FrameFeatures,
    keyframe_ids: &[u32],
    db: &KeyframeDatabase,
    match_ratio: f32,
) -> Result<Vec<Correspondence>> {
    let dim = query.local_dim;
    let mut best: Vec<Option<(f32, Correspondence)>> = vec![None; query.num_keypoints()];
    let mut any_points = false;
    for &id in keyframe_ids {
        let kf = db
            .keyframe(id)
            .ok_or_else(|| Error::InvariantViolation(format!("unknown keyframe {id}")))?;
        if kf.frame.local_dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: kf.frame.local_dim,
            });
        }
        let lookup = kf.frame.point_lookup();
        let with_points: Vec<usize> = (0..lookup.len()).filter(|&i| lookup[i].is_some()).collect();
        if with_points.is_empty() {
            continue;
        }
        any_points = true;
        let mut train = Vec::with_capacity(with_points.len() * dim);
        for &i in &with_points {
            train.extend_from_slice(kf.frame.descriptor(i));
        }
        for m in match_descriptors(&query.local_descriptors, &train, dim, true, match_ratio) {
            let kp = with_points[m.train as usize];
            let p = lookup[kp].expect("filtered to keypoints with points");
            let cam = Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64);
            let q = &query.keypoints[m.query as usize];
            let corr = Correspondence {
                point3d: kf.pose.to_world(&cam),
                pixel: Vector2::new(q.x as f64, q.y as f64),
                source_keyframe: Some(id),
            };
            let slot = &mut best[m.query as usize];
            if slot.as_ref().is_none_or(|(d, _)| m.distance < *d) {
                *slot = Some((m.distance, corr));
            }
        }
    }
    if !any_points {
        if let Some(&first) = keyframe_ids.first() {
            return Err(Error::NoDepthPoints(first));
        }
    }
    Ok(best.into_iter().flatten().map(|(_, c)| c).collect())
}

pub fn relocalize(
    db: &KeyframeDatabase,
    query: &FrameFeatures,
    k: &CameraIntrinsics,
    cfg: &RelocConfig,
) -> RelocOutcome {
    let mut out = RelocOutcome {
        pose: None,
        correspondences: Vec::new(),
        inliers: Vec::new(),
        candidates: Vec::new(),
        groups: Vec::new(),
    };
    let Ok(candidates) = retrieve_candidates(db, &query.global_descriptor, cfg.num_candidates) else {
        return out;
    };
    let ids: Vec<u32> = candidates.iter().map(|c| c.0).collect();
    let distance_of = |id: u32| candidates.iter().find(|c| c.0 == id).map_or(f64::INFINITY, |c| c.1);
    let mut groups: Vec<(f64, CandidateGroup)> = form_groups(&ids, cfg.group_gap)
        .into_iter()
        .map(|g| {
            let best = g.keyframe_ids.iter().map(|&id| distance_of(id)).fold(f64::INFINITY, f64::min);
            (best, g)
        })
        .collect();
    groups.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.keyframe_ids[0].cmp(&b.1.keyframe_ids[0])));
    out.candidates = candidates;

    for (best_distance, group) in groups {
        let mut report = GroupReport {
            keyframe_ids: group.keyframe_ids.clone(),
            best_distance,
            matches: 0,
            inliers: None,
            error: None,
        };
        let corrs = match match_to_group(query, &group.keyframe_ids, db, cfg.match_ratio) {
            Ok(c) => c,
            Err(e) => {
                report.error = Some(e.to_string());
                out.groups.push(report);
                continue;
            }
        };
        report.matches = corrs.len();
        if corrs.len() < cfg.min_group_matches {
            report.error = Some(format!("{} matches below {}", corrs.len(), cfg.min_group_matches));
            out.groups.push(report);
            continue;
        }
        match ransac_pnp(&corrs, k, &cfg.ransac) {
            Ok(r) => {
                report.inliers = Some(r.inliers.len());
                out.groups.push(report);
                out.pose = Some(r.pose);
                out.inliers = r.inliers;
                out.correspondences = corrs;
                return out;
            }
            Err(e) => {
                if let Error::NoConsensus { inliers, .. } = e {
                    report.inliers = Some(inliers);
                }
                report.error = Some(e.to_string());
                out.groups.push(report);
            }
        }
    }
    out
}
