//! Hierarchical k-means over a fixed set of leaf words.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{VisualWord, VocabNode, Vocabulary, NO_NODE};
use crate::error::{Error, Result};
use crate::kernels::squared_l2;

const KMEANS_MAX_ITERS: usize = 50;
const KMEANS_MIN_SHIFT: f32 = 1e-6;

enum Pending {
    Leaf(usize),
    Internal { centroid: Vec<f32>, children: Vec<Pending> },
}

struct Builder<'a> {
    points: &'a [f32],
    dim: usize,
    k: usize,
    max_levels: usize,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn point(&self, i: usize) -> &[f32] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn mean(&self, members: &[usize]) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.dim];
        for &m in members {
            for (a, v) in acc.iter_mut().zip(self.point(m)) {
                *a += *v as f64;
            }
        }
        let n = members.len() as f64;
        acc.into_iter().map(|a| (a / n) as f32).collect()
    }

    /// Children of a node at `depth` holding `members`.
    fn expand(&mut self, members: &[usize], depth: usize) -> Vec<Pending> {
        let leaves = |m: &[usize]| m.iter().map(|&i| Pending::Leaf(i)).collect();
        if members.len() <= self.k || depth + 1 >= self.max_levels {
            return leaves(members);
        }
        let clusters = self.kmeans(members);
        if clusters.len() <= 1 {
            // every point coincides; further splitting cannot make progress
            return leaves(members);
        }
        clusters
            .into_iter()
            .map(|c| {
                if c.len() == 1 {
                    Pending::Leaf(c[0])
                } else {
                    let centroid = self.mean(&c);
                    let children = self.expand(&c, depth + 1);
                    Pending::Internal { centroid, children }
                }
            })
            .collect()
    }

    /// k-means++ seeding (several candidates per pick) followed by Lloyd
    /// iterations. Returns the non-empty clusters in center order.
    fn kmeans(&mut self, members: &[usize]) -> Vec<Vec<usize>> {
        let dim = self.dim;
        let n = members.len();
        let trials = 2 + (self.k as f64).ln().floor() as usize;

        let first = members[self.rng.random_range(0..n)];
        let mut centers: Vec<f32> = self.point(first).to_vec();
        let mut closest: Vec<f32> = members
            .iter()
            .map(|&m| squared_l2(self.point(m), self.point(first)))
            .collect();
        while centers.len() / dim < self.k {
            let potential: f64 = closest.iter().map(|&d| d as f64).sum();
            if potential <= 0.0 {
                break;
            }
            let mut best: Option<(f64, usize, Vec<f32>)> = None;
            for _ in 0..trials {
                let target = self.rng.random::<f64>() * potential;
                let mut acc = 0.0;
                let mut pick = n - 1;
                for (i, &d) in closest.iter().enumerate() {
                    acc += d as f64;
                    if acc > target && d > 0.0 {
                        pick = i;
                        break;
                    }
                }
                let cand = self.point(members[pick]);
                let updated: Vec<f32> = members
                    .iter()
                    .zip(&closest)
                    .map(|(&m, &c)| c.min(squared_l2(self.point(m), cand)))
                    .collect();
                let pot: f64 = updated.iter().map(|&d| d as f64).sum();
                if best.as_ref().is_none_or(|b| pot < b.0) {
                    best = Some((pot, pick, updated));
                }
            }
            let (_, pick, updated) = best.expect("at least one trial");
            centers.extend_from_slice(self.point(members[pick]));
            closest = updated;
        }

        let kc = centers.len() / dim;
        let mut assign = vec![0usize; n];
        for iter in 0..KMEANS_MAX_ITERS {
            let mut changed = false;
            for (slot, &m) in members.iter().enumerate() {
                let p = self.point(m);
                let mut best = (0usize, f32::INFINITY);
                for c in 0..kc {
                    let d = squared_l2(p, &centers[c * dim..(c + 1) * dim]);
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                if assign[slot] != best.0 {
                    assign[slot] = best.0;
                    changed = true;
                }
            }
            if iter > 0 && !changed {
                break;
            }
            let mut sums = vec![0.0f64; kc * dim];
            let mut counts = vec![0usize; kc];
            for (slot, &m) in members.iter().enumerate() {
                let c = assign[slot];
                counts[c] += 1;
                for (s, v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(self.point(m)) {
                    *s += *v as f64;
                }
            }
            let mut max_shift = 0.0f32;
            for c in 0..kc {
                if counts[c] == 0 {
                    continue;
                }
                let new: Vec<f32> = sums[c * dim..(c + 1) * dim]
                    .iter()
                    .map(|s| (s / counts[c] as f64) as f32)
                    .collect();
                let old = &mut centers[c * dim..(c + 1) * dim];
                max_shift = max_shift.max(squared_l2(old, &new).sqrt());
                old.copy_from_slice(&new);
            }
            if max_shift < KMEANS_MIN_SHIFT {
                break;
            }
        }

        let mut clusters = vec![Vec::new(); kc];
        for (slot, &m) in members.iter().enumerate() {
            clusters[assign[slot]].push(m);
        }
        clusters.retain(|c| !c.is_empty());
        clusters
    }
}

/// Lays a pending tree out breadth-first. Returns the vocabulary and the
/// input index of each word id.
fn flatten(
    dim: usize,
    branching: u32,
    root_centroid: Vec<f32>,
    root_children: Vec<Pending>,
    points: &[f32],
    idfs: &[f32],
) -> Result<(Vocabulary, Vec<usize>)> {
    let mut nodes = vec![VocabNode {
        parent: NO_NODE,
        first_child: NO_NODE,
        num_children: 0,
        is_leaf: false,
        idf: 0.0,
    }];
    let mut centroids = root_centroid;
    let mut mapping = Vec::new();
    let mut queue: VecDeque<(u32, Vec<Pending>)> = VecDeque::new();
    queue.push_back((0, root_children));
    while let Some((parent, children)) = queue.pop_front() {
        nodes[parent as usize].first_child = nodes.len() as u32;
        nodes[parent as usize].num_children = children.len() as u32;
        for child in children {
            let index = nodes.len() as u32;
            match child {
                Pending::Leaf(i) => {
                    nodes.push(VocabNode {
                        parent,
                        first_child: NO_NODE,
                        num_children: 0,
                        is_leaf: true,
                        idf: idfs[i],
                    });
                    centroids.extend_from_slice(&points[i * dim..(i + 1) * dim]);
                    mapping.push(i);
                }
                Pending::Internal { centroid, children } => {
                    nodes.push(VocabNode {
                        parent,
                        first_child: NO_NODE,
                        num_children: 0,
                        is_leaf: false,
                        idf: 0.0,
                    });
                    centroids.extend_from_slice(&centroid);
                    queue.push_back((index, children));
                }
            }
        }
    }
    let vocab = Vocabulary::from_parts(dim, branching, nodes, centroids)?;
    Ok((vocab, mapping))
}

/// Organizes trained words into a vocabulary tree by top-down k-means.
/// Leaves are kept as given; word ids are renumbered breadth-first.
pub fn build_tree(words: &[VisualWord], k: usize, max_levels: usize, seed: u64) -> Result<Vocabulary> {
    build_tree_with_mapping(words, k, max_levels, seed).map(|(v, _)| v)
}

/// Like [`build_tree`], also returning for each new word id the index of
/// the input word it came from.
pub fn build_tree_with_mapping(
    words: &[VisualWord],
    k: usize,
    max_levels: usize,
    seed: u64,
) -> Result<(Vocabulary, Vec<usize>)> {
    if words.is_empty() {
        return Err(Error::NoWords);
    }
    if k < 2 {
        return Err(Error::Config(format!("branching factor {k} must be at least 2")));
    }
    if max_levels < 1 {
        return Err(Error::Config("max_levels must be at least 1".into()));
    }
    let dim = words[0].centroid.len();
    if let Some(w) = words.iter().find(|w| w.centroid.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: w.centroid.len(),
        });
    }
    let points: Vec<f32> = words.iter().flat_map(|w| w.centroid.iter().copied()).collect();
    let idfs: Vec<f32> = words.iter().map(|w| w.idf).collect();
    let mut builder = Builder {
        points: &points,
        dim,
        k,
        max_levels,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let all: Vec<usize> = (0..words.len()).collect();
    let root_centroid = builder.mean(&all);
    let children = builder.expand(&all, 0);
    flatten(dim, k as u32, root_centroid, children, &points, &idfs)
}

/// A complete `k`-ary vocabulary over `num_leaves` random words, built
/// without clustering. Used for load-time and throughput benchmarks.
pub fn synthetic_vocabulary(num_leaves: usize, k: usize, dim: usize, seed: u64) -> Result<Vocabulary> {
    if num_leaves == 0 {
        return Err(Error::NoWords);
    }
    if k < 2 || dim == 0 {
        return Err(Error::Config("synthetic vocabulary needs k >= 2 and dim >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (dim as f32).sqrt();
    let points: Vec<f32> = (0..num_leaves * dim)
        .map(|_| rng.sample::<f32, _>(StandardNormal) * scale)
        .collect();
    let idfs: Vec<f32> = (0..num_leaves).map(|_| rng.random_range(0.1f32..5.0)).collect();

    // Group bottom-up; each level's node keeps the running sums of its leaves.
    let mut level: Vec<(Pending, Vec<f64>, usize)> = (0..num_leaves)
        .map(|i| {
            let sums = points[i * dim..(i + 1) * dim].iter().map(|&v| v as f64).collect();
            (Pending::Leaf(i), sums, 1)
        })
        .collect();
    while level.len() > k {
        let mut next = Vec::with_capacity(level.len().div_ceil(k));
        let mut iter = level.into_iter().peekable();
        while iter.peek().is_some() {
            let group: Vec<_> = iter.by_ref().take(k).collect();
            let mut sums = vec![0.0f64; dim];
            let mut count = 0;
            let mut children = Vec::with_capacity(group.len());
            for (node, s, c) in group {
                sums.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
                count += c;
                children.push(node);
            }
            let centroid = sums.iter().map(|s| (s / count as f64) as f32).collect();
            next.push((Pending::Internal { centroid, children }, sums, count));
        }
        level = next;
    }
    let mut root_sums = vec![0.0f64; dim];
    for (_, s, _) in &level {
        root_sums.iter_mut().zip(s).for_each(|(a, b)| *a += b);
    }
    let root_centroid = root_sums.iter().map(|s| (s / num_leaves as f64) as f32).collect();
    let children = level.into_iter().map(|(n, _, _)| n).collect();
    flatten(dim, k as u32, root_centroid, children, &points, &idfs).map(|(v, _)| v)
}

/// A complete `k`-ary tree of depth `levels` with planted hierarchical
/// structure. Sibling offsets are centered, so every internal centroid is the
/// mean of its leaves; the closest pair of sibling leaves is exactly
/// `leaf_separation` apart and each level up is `level_ratio` times wider.
pub fn planted_vocabulary(
    k: usize,
    levels: usize,
    dim: usize,
    leaf_separation: f64,
    level_ratio: f64,
    seed: u64,
) -> Result<Vocabulary> {
    if k < 2 || levels == 0 || dim == 0 {
        return Err(Error::Config("planted vocabulary needs k >= 2, levels >= 1 and dim >= 1".into()));
    }
    if !(leaf_separation > 0.0 && level_ratio >= 1.0) {
        return Err(Error::Config("leaf_separation must be positive and level_ratio at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = vec![VocabNode { parent: NO_NODE, first_child: 1, num_children: k as u32, is_leaf: false, idf: 0.0 }];
    let mut centroids: Vec<f64> = vec![0.0; dim];
    let mut level_start = 0usize;
    let mut level_len = 1usize;
    for level in 1..=levels {
        let separation = leaf_separation * level_ratio.powi((levels - level) as i32);
        let next_start = level_start + level_len;
        for p in level_start..next_start {
            let mut offsets: Vec<Vec<f64>> =
                (0..k).map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
            for d in 0..dim {
                let mean = offsets.iter().map(|o| o[d]).sum::<f64>() / k as f64;
                offsets.iter_mut().for_each(|o| o[d] -= mean);
            }
            let mut closest = f64::INFINITY;
            for i in 0..k {
                for j in i + 1..k {
                    let d2: f64 = offsets[i].iter().zip(&offsets[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    closest = closest.min(d2.sqrt());
                }
            }
            let scale = separation / closest;
            let parent: Vec<f64> = centroids[p * dim..(p + 1) * dim].to_vec();
            for o in offsets {
                centroids.extend(parent.iter().zip(o).map(|(c, v)| c + v * scale));
                let leaf = level == levels;
                let idx = nodes.len();
                let first_child = next_start + level_len * k + (idx - next_start) * k;
                nodes.push(VocabNode {
                    parent: p as u32,
                    first_child: if leaf { NO_NODE } else { first_child as u32 },
                    num_children: if leaf { 0 } else { k as u32 },
                    is_leaf: leaf,
                    idf: if leaf { 1.0 } else { 0.0 },
                });
            }
        }
        level_start = next_start;
        level_len *= k;
    }
    let centroids = centroids.into_iter().map(|v| v as f32).collect();
    Vocabulary::from_parts(dim, k as u32, nodes, centroids)
}
