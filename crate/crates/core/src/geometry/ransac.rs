//! Hypothesize-and-verify pose estimation over P3P samples.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{p3p_solve, project, refine_pose, Correspondence, Pose};
use crate::error::{Error, Result};
use crate::features::CameraIntrinsics;

const REFINE_ITERATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub max_iterations: usize,
    pub inlier_threshold_px: f64,
    pub confidence: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            inlier_threshold_px: 3.0,
            confidence: 0.99,
            min_inliers: 15,
            seed: 0,
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if !(self.inlier_threshold_px > 0.0) {
            return Err(Error::Config("inlier_threshold_px must be positive".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Config("confidence must lie in (0, 1)".into()));
        }
        if self.min_inliers == 0 {
            return Err(Error::Config("min_inliers must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutcome {
    pub pose: Pose,
    /// Ascending indices into the correspondence slice.
    pub inliers: Vec<usize>,
    /// Hypotheses drawn before the adaptive cap stopped the loop.
    pub iterations: usize,
}

/// Indices whose reprojection lies within `threshold_px`, plus the summed
/// squared residual over them.
fn score(pose: &Pose, corrs: &[Correspondence], k: &CameraIntrinsics, threshold_px: f64) -> (Vec<usize>, f64) {
    let t2 = threshold_px * threshold_px;
    let mut inliers = Vec::new();
    let mut cost = 0.0;
    for (i, c) in corrs.iter().enumerate() {
        if let Ok(px) = project(&c.point3d, pose, k) {
            let r2 = (px - c.pixel).norm_squared();
            if r2 <= t2 {
                inliers.push(i);
                cost += r2;
            }
        }
    }
    (inliers, cost)
}

pub fn reprojection_inliers(
    pose: &Pose,
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    threshold_px: f64,
) -> Vec<usize> {
    score(pose, corrs, k, threshold_px).0
}

fn required_iterations(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let w3 = inlier_ratio.powi(3);
    if w3 >= 1.0 {
        return 0;
    }
    if w3 <= 0.0 {
        return cap;
    }
    let n = ((1.0 - confidence).ln() / (1.0 - w3).ln()).ceil();
    if n.is_finite() && n >= 0.0 {
        (n as usize).min(cap)
    } else {
        cap
    }
}

pub fn ransac_pnp(corrs: &[Correspondence], k: &CameraIntrinsics, params: &RansacParams) -> Result<RansacOutcome> {
    params.validate()?;
    let n = corrs.len();
    if n < 4 {
        return Err(Error::TooFewCorrespondences { needed: 4, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Pose, Vec<usize>, f64)> = None;
    let mut cap = params.max_iterations;
    let mut drawn = 0;

    while drawn < cap {
        drawn += 1;
        let idx = sample(&mut rng, n, 4).into_vec();
        let Ok(candidates) = p3p_solve(&corrs[idx[0]], &corrs[idx[1]], &corrs[idx[2]], k) else {
            continue;
        };
        let held = &corrs[idx[3]];
        // pick among the P3P roots by inlier count, then by the held-out point
        let mut chosen: Option<(Pose, Vec<usize>, f64, f64)> = None;
        for pose in candidates {
            let (inl, cost) = score(&pose, corrs, k, params.inlier_threshold_px);
            let held_cost = project(&held.point3d, &pose, k)
                .map(|px| (px - held.pixel).norm_squared())
                .unwrap_or(f64::INFINITY);
            let better = match &chosen {
                None => true,
                Some((_, ci, _, ch)) => inl.len() > ci.len() || (inl.len() == ci.len() && held_cost < *ch),
            };
            if better {
                chosen = Some((pose, inl, cost, held_cost));
            }
        }
        let Some((pose, inl, cost, _)) = chosen else { continue };
        let better = match &best {
            None => true,
            Some((_, bi, bc)) => inl.len() > bi.len() || (inl.len() == bi.len() && cost < *bc),
        };
        if better {
            let ratio = inl.len() as f64 / n as f64;
            best = Some((pose, inl, cost));
            cap = required_iterations(ratio, params.confidence, params.max_iterations).max(drawn);
        }
    }

    let Some((mut pose, mut inliers, _)) = best else {
        return Err(Error::NoConsensus { inliers: 0, needed: params.min_inliers });
    };
    for _ in 0..2 {
        if inliers.len() < 4 {
            break;
        }
        let subset: Vec<Correspondence> = inliers.iter().map(|&i| corrs[i]).collect();
        let Ok(refined) = refine_pose(&pose, &subset, k, REFINE_ITERATIONS) else { break };
        let (inl, _) = score(&refined, corrs, k, params.inlier_threshold_px);
        if inl.len() < inliers.len() {
            break;
        }
        pose = refined;
        inliers = inl;
    }
    if inliers.len() < params.min_inliers {
        return Err(Error::NoConsensus { inliers: inliers.len(), needed: params.min_inliers });
    }
    Ok(RansacOutcome { pose, inliers, iterations: drawn })
}
