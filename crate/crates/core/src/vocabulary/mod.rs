//! Visual vocabulary: a k-ary tree of descriptor centroids whose leaves are
//! the visual words.
//!
//! The tree is stored flat in breadth-first order. Every internal node owns a
//! contiguous run of children, so quantization is a greedy descent that only
//! touches `branching * depth` centroids. Word ids number the leaves in the
//! order they appear in that array.

mod io;
mod train;
mod tree;
mod vector;

use crate::error::{Error, Result};
use crate::features::FrameFeatures;
use crate::kernels::squared_l2;

pub use io::{decode_vocabulary, encode_vocabulary, load_vocab, save_vocab, VOCAB_MAGIC, VOCAB_VERSION};
pub use train::{train_incremental, train_incremental_detailed, TrainParams, TrainingOutcome, TreeParams};
pub use tree::{build_tree, build_tree_with_mapping, planted_vocabulary, synthetic_vocabulary};
pub use vector::{similarity, VisualVector};

pub(crate) use vector::shared_term;

/// Sentinel index for "no node".
pub const NO_NODE: u32 = u32::MAX;

/// A word as produced by training, before it is placed in a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualWord {
    pub word_id: u32,
    pub centroid: Vec<f32>,
    pub idf: f32,
    /// Number of training descriptors merged into this word.
    pub member_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VocabNode {
    pub parent: u32,
    pub first_child: u32,
    pub num_children: u32,
    pub is_leaf: bool,
    /// Word weight; zero on internal nodes.
    pub idf: f32,
}

/// Provenance of a trained vocabulary. Held in memory only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub params_hash: u64,
}

/// How word occurrences are turned into vector weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Term frequency times learned idf.
    #[default]
    TfIdf,
    /// Raw normalized histogram.
    TermFrequency,
}

/// One step of a traced quantization: the node expanded, the child chosen
/// and the squared distances to all of its children.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentStep {
    pub node: u32,
    pub chosen: u32,
    pub child_distances: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    dim: usize,
    branching: u32,
    nodes: Vec<VocabNode>,
    centroids: Vec<f32>,
    word_nodes: Vec<u32>,
    node_words: Vec<u32>,
    meta: Option<TrainingMeta>,
}

impl Vocabulary {
    /// Assembles a vocabulary from a breadth-first node array, checking the
    /// layout invariants.
    pub fn from_parts(
        dim: usize,
        branching: u32,
        nodes: Vec<VocabNode>,
        centroids: Vec<f32>,
    ) -> Result<Self> {
        let (word_nodes, node_words) = check_layout(dim, &nodes, &centroids)?;
        Ok(Self {
            dim,
            branching,
            nodes,
            centroids,
            word_nodes,
            node_words,
            meta: None,
        })
    }

    pub fn with_meta(mut self, meta: TrainingMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn meta(&self) -> Option<TrainingMeta> {
        self.meta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn branching(&self) -> u32 {
        self.branching
    }

    pub fn num_words(&self) -> usize {
        self.word_nodes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[VocabNode] {
        &self.nodes
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn node_centroid(&self, node: u32) -> &[f32] {
        let i = node as usize;
        &self.centroids[i * self.dim..(i + 1) * self.dim]
    }

    pub fn word_node(&self, word: u32) -> u32 {
        self.word_nodes[word as usize]
    }

    pub fn word_centroid(&self, word: u32) -> &[f32] {
        self.node_centroid(self.word_node(word))
    }

    pub fn idf(&self, word: u32) -> f32 {
        self.nodes[self.word_node(word) as usize].idf
    }

    /// Number of levels below the root on the deepest path.
    pub fn levels(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for i in 1..self.nodes.len() {
            depth[i] = depth[self.nodes[i].parent as usize] + 1;
            max = max.max(depth[i]);
        }
        max
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }

    fn descend(&self, descriptor: &[f32], mut trace: Option<&mut Vec<DescentStep>>) -> Result<u32> {
        self.check_dim(descriptor.len())?;
        if self.word_nodes.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut node = 0u32;
        loop {
            let n = &self.nodes[node as usize];
            if n.is_leaf {
                return Ok(self.node_words[node as usize]);
            }
            let mut best = (n.first_child, f32::INFINITY);
            let mut dists = trace.as_ref().map(|_| Vec::with_capacity(n.num_children as usize));
            for c in n.first_child..n.first_child + n.num_children {
                let d = squared_l2(descriptor, self.node_centroid(c));
                if d < best.1 {
                    best = (c, d);
                }
                if let Some(ds) = dists.as_mut() {
                    ds.push(d);
                }
            }
            if let (Some(t), Some(ds)) = (trace.as_mut(), dists) {
                t.push(DescentStep {
                    node,
                    chosen: best.0,
                    child_distances: ds,
                });
            }
            node = best.0;
        }
    }

    /// Greedy root-to-leaf descent, picking the closest child at every node
    /// (ties to the lowest child index).
    pub fn quantize(&self, descriptor: &[f32]) -> Result<u32> {
        self.descend(descriptor, None)
    }

    /// Like [`Vocabulary::quantize`], also returning every descent step.
    pub fn quantize_traced(&self, descriptor: &[f32]) -> Result<(u32, Vec<DescentStep>)> {
        let mut trace = Vec::new();
        let w = self.descend(descriptor, Some(&mut trace))?;
        Ok((w, trace))
    }

    /// Word id of every keypoint descriptor of `frame`.
    pub fn quantize_frame(&self, frame: &FrameFeatures) -> Result<Vec<u32>> {
        self.check_dim(frame.local_dim)?;
        frame.descriptors().map(|d| self.quantize(d)).collect()
    }

    /// Weighted, L1-normalized word histogram of a set of quantized
    /// descriptors.
    pub fn vector_from_words(&self, words: &[u32], weighting: Weighting) -> VisualVector {
        if words.is_empty() {
            return VisualVector::empty();
        }
        let mut counts: Vec<(u32, u32)> = Vec::new();
        let mut sorted = words.to_vec();
        sorted.sort_unstable();
        for w in sorted {
            match counts.last_mut() {
                Some(last) if last.0 == w => last.1 += 1,
                _ => counts.push((w, 1)),
            }
        }
        let total = words.len() as f64;
        let weights = counts.into_iter().map(|(w, c)| {
            let tf = c as f64 / total;
            let weight = match weighting {
                Weighting::TfIdf => tf * self.idf(w) as f64,
                Weighting::TermFrequency => tf,
            };
            (w, weight)
        });
        VisualVector::from_weights(weights).expect("tf and idf weights are finite and non-negative")
    }

    /// tf-idf visual vector of a frame.
    pub fn compute_visual_vector(&self, frame: &FrameFeatures) -> Result<VisualVector> {
        self.compute_visual_vector_with(frame, Weighting::TfIdf)
    }

    pub fn compute_visual_vector_with(
        &self,
        frame: &FrameFeatures,
        weighting: Weighting,
    ) -> Result<VisualVector> {
        let words = self.quantize_frame(frame)?;
        Ok(self.vector_from_words(&words, weighting))
    }

    /// Structural equality, ignoring in-memory training metadata.
    pub fn same_structure(&self, other: &Vocabulary) -> bool {
        self.dim == other.dim
            && self.branching == other.branching
            && self.nodes == other.nodes
            && self.centroids.len() == other.centroids.len()
            && self
                .centroids
                .iter()
                .zip(&other.centroids)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Validates the breadth-first layout and returns the word/node maps.
fn check_layout(dim: usize, nodes: &[VocabNode], centroids: &[f32]) -> Result<(Vec<u32>, Vec<u32>)> {
    let bad = |msg: String| Err(Error::CorruptPayload(msg));
    if dim == 0 {
        return bad("descriptor dimension is 0".into());
    }
    if nodes.is_empty() {
        return bad("vocabulary has no root".into());
    }
    if centroids.len() != nodes.len() * dim {
        return bad(format!(
            "{} centroid values for {} nodes of dimension {dim}",
            centroids.len(),
            nodes.len()
        ));
    }
    if centroids.iter().any(|v| !v.is_finite()) {
        return bad("non-finite centroid value".into());
    }
    let root = &nodes[0];
    if root.parent != NO_NODE || root.is_leaf {
        return bad("root must be an internal node without parent".into());
    }
    let mut next_child = 1u64;
    let mut word_nodes = Vec::new();
    let mut node_words = vec![NO_NODE; nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        if i > 0 && (n.parent as usize >= i || nodes[n.parent as usize].is_leaf) {
            return bad(format!("node {i} has invalid parent {}", n.parent));
        }
        if n.is_leaf {
            if n.num_children != 0 || n.first_child != NO_NODE {
                return bad(format!("leaf {i} has children"));
            }
            if !n.idf.is_finite() || n.idf < 0.0 {
                return bad(format!("leaf {i} has invalid idf {}", n.idf));
            }
            node_words[i] = word_nodes.len() as u32;
            word_nodes.push(i as u32);
            continue;
        }
        if n.num_children == 0 {
            if i == 0 && nodes.len() == 1 {
                continue;
            }
            return bad(format!("internal node {i} has no children"));
        }
        if n.first_child as u64 != next_child {
            return bad(format!(
                "node {i} children start at {}, expected {next_child}",
                n.first_child
            ));
        }
        let end = next_child + n.num_children as u64;
        if end > nodes.len() as u64 {
            return bad(format!("node {i} children run past the node array"));
        }
        for c in next_child..end {
            if nodes[c as usize].parent as usize != i {
                return bad(format!("node {c} does not point back to parent {i}"));
            }
        }
        next_child = end;
    }
    if next_child != nodes.len() as u64 {
        return bad(format!(
            "{} nodes are unreachable from the root",
            nodes.len() as u64 - next_child
        ));
    }
    Ok((word_nodes, node_words))
}
