//! Brute-force L2 descriptor matching with mutual and ratio checks.

use crate::error::{Error, Result};
use crate::features::FrameFeatures;
use crate::kernels::squared_l2;

/// Parameters for matching adjacent training frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    /// Upper bound on pairs kept per frame pair, ranked by keypoint score.
    pub max_pairs_kept: usize,
    pub mutual_check: bool,
    /// Lowe ratio: nearest distance must be below `ratio * second nearest`.
    pub ratio_threshold: f32,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            max_pairs_kept: 300,
            mutual_check: true,
            ratio_threshold: 0.8,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_pairs_kept == 0 {
            return Err(Error::Config("max_pairs_kept must be at least 1".into()));
        }
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "ratio_threshold {} outside (0, 1]",
                self.ratio_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorMatch {
    /// Row in the first descriptor set.
    pub query: u32,
    /// Row in the second descriptor set.
    pub train: u32,
    /// Euclidean distance between the two descriptors.
    pub distance: f32,
}

/// Exhaustive nearest-neighbor matching of the rows of `query` against the
/// rows of `train` (both row-major with `dim` columns).
///
/// Each query row keeps its nearest train row (ties to the lower index) if
/// it passes the ratio test and, when `mutual` is set, the train row's own
/// nearest query row is the same one. Output is ordered by query row.
pub fn match_descriptors(
    query: &[f32],
    train: &[f32],
    dim: usize,
    mutual: bool,
    ratio: f32,
) -> Vec<DescriptorMatch> {
    if dim == 0 || query.is_empty() || train.is_empty() {
        return Vec::new();
    }
    let nq = query.len() / dim;
    let nt = train.len() / dim;
    let mut dist = vec![0.0f32; nq * nt];
    for (i, q) in query.chunks_exact(dim).enumerate() {
        let row = &mut dist[i * nt..(i + 1) * nt];
        for (j, t) in train.chunks_exact(dim).enumerate() {
            row[j] = squared_l2(q, t);
        }
    }

    let mut best_query_for_train = vec![(usize::MAX, f32::INFINITY); nt];
    if mutual {
        for i in 0..nq {
            for j in 0..nt {
                let d = dist[i * nt + j];
                if d < best_query_for_train[j].1 {
                    best_query_for_train[j] = (i, d);
                }
            }
        }
    }

    let ratio_sq = ratio * ratio;
    let mut out = Vec::new();
    for i in 0..nq {
        let row = &dist[i * nt..(i + 1) * nt];
        let mut best = (0usize, f32::INFINITY);
        let mut second = f32::INFINITY;
        for (j, &d) in row.iter().enumerate() {
            if d < best.1 {
                second = best.1;
                best = (j, d);
            } else if d < second {
                second = d;
            }
        }
        if !best.1.is_finite() {
            continue;
        }
        if second.is_finite() && !(best.1 < ratio_sq * second) {
            continue;
        }
        if mutual && best_query_for_train[best.0].0 != i {
            continue;
        }
        out.push(DescriptorMatch {
            query: i as u32,
            train: best.0 as u32,
            distance: best.1.sqrt(),
        });
    }
    out
}

/// Matches the descriptors of two adjacent frames and keeps at most
/// `max_pairs_kept` pairs, ranked by the smaller of the two keypoint scores
/// (descending, ties by `(query, train)` ascending). The result is in rank
/// order.
pub fn match_adjacent(
    a: &FrameFeatures,
    b: &FrameFeatures,
    params: &MatchParams,
) -> Result<Vec<DescriptorMatch>> {
    if a.local_dim != b.local_dim {
        return Err(Error::DimensionMismatch {
            expected: a.local_dim,
            found: b.local_dim,
        });
    }
    let mut matches = match_descriptors(
        &a.local_descriptors,
        &b.local_descriptors,
        a.local_dim,
        params.mutual_check,
        params.ratio_threshold,
    );
    let rank = |m: &DescriptorMatch| {
        a.keypoints[m.query as usize]
            .score
            .min(b.keypoints[m.train as usize].score)
    };
    matches.sort_by(|x, y| {
        rank(y)
            .total_cmp(&rank(x))
            .then(x.query.cmp(&y.query))
            .then(x.train.cmp(&y.train))
    });
    matches.truncate(params.max_pairs_kept);
    Ok(matches)
}
