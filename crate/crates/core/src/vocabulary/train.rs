//! Incremental vocabulary training over an ordered image sequence.
//!
//! Adjacent frames are matched; a matched descriptor joins the word of its
//! partner in the previous frame, everything unmatched starts a new word.
//! Word centroids are running means of their members. The resulting leaf
//! set is then organized into a tree with [`build_tree`](super::build_tree).

use super::tree::build_tree_with_mapping;
use super::{TrainingMeta, VisualWord, Vocabulary};
use crate::error::{Error, Result};
use crate::features::FrameFeatures;
use crate::kernels::squared_l2;
use crate::matching::{match_adjacent, MatchParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub branching: usize,
    pub max_levels: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            branching: 10,
            max_levels: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainParams {
    pub matching: MatchParams,
    pub tree: TreeParams,
    pub seed: u64,
    /// Merge words whose centroids are closer than this after the pass.
    pub merge_epsilon: Option<f32>,
}

impl TrainParams {
    /// FNV-1a over the parameter values.
    pub fn params_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(&(self.matching.max_pairs_kept as u64).to_le_bytes());
        eat(&[self.matching.mutual_check as u8]);
        eat(&self.matching.ratio_threshold.to_le_bytes());
        eat(&(self.tree.branching as u64).to_le_bytes());
        eat(&(self.tree.max_levels as u64).to_le_bytes());
        eat(&self.merge_epsilon.unwrap_or(-1.0).to_le_bytes());
        h
    }
}

/// Training result with the per-word bookkeeping, indexed by final word id.
#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub vocab: Vocabulary,
    pub words: Vec<VisualWord>,
    /// `(frame index in the sequence, keypoint index)` of every member.
    pub members: Vec<Vec<(u32, u32)>>,
}

struct WordAccum {
    sum: Vec<f64>,
    frames: Vec<u32>,
    members: Vec<(u32, u32)>,
}

struct Trainer<'a> {
    seq: &'a [FrameFeatures],
    dim: usize,
    words: Vec<WordAccum>,
}

impl Trainer<'_> {
    fn create(&mut self, frame: usize, kp: usize) -> u32 {
        let id = self.words.len() as u32;
        self.words.push(WordAccum {
            sum: vec![0.0; self.dim],
            frames: Vec::new(),
            members: Vec::new(),
        });
        self.join(id, frame, kp);
        id
    }

    fn join(&mut self, word: u32, frame: usize, kp: usize) {
        let desc = self.seq[frame].descriptor(kp);
        let w = &mut self.words[word as usize];
        for (s, v) in w.sum.iter_mut().zip(desc) {
            *s += *v as f64;
        }
        if w.frames.last() != Some(&(frame as u32)) {
            w.frames.push(frame as u32);
        }
        w.members.push((frame as u32, kp as u32));
    }

    fn centroid(&self, word: usize) -> Vec<f32> {
        let w = &self.words[word];
        let n = w.members.len() as f64;
        w.sum.iter().map(|s| (s / n) as f32).collect()
    }
}

/// Greedy merge of words closer than `eps`, in word order; a word absorbs
/// every later word within `eps` of its pre-merge centroid.
fn merge_close_words(trainer: &mut Trainer<'_>, eps: f32) {
    let n = trainer.words.len();
    let centroids: Vec<Vec<f32>> = (0..n).map(|i| trainer.centroid(i)).collect();
    let eps_sq = eps * eps;
    let mut alive = vec![true; n];
    for i in 0..n {
        if !alive[i] {
            continue;
        }
        for j in i + 1..n {
            if alive[j] && squared_l2(&centroids[i], &centroids[j]) < eps_sq {
                alive[j] = false;
                let absorbed = std::mem::replace(
                    &mut trainer.words[j],
                    WordAccum { sum: Vec::new(), frames: Vec::new(), members: Vec::new() },
                );
                let target = &mut trainer.words[i];
                target.sum.iter_mut().zip(&absorbed.sum).for_each(|(a, b)| *a += b);
                target.members.extend(absorbed.members);
                target.frames.extend(absorbed.frames);
                target.frames.sort_unstable();
                target.frames.dedup();
            }
        }
    }
    let mut idx = 0;
    trainer.words.retain(|_| {
        idx += 1;
        alive[idx - 1]
    });
}

pub fn train_incremental(seq: &[FrameFeatures], params: &TrainParams) -> Result<Vocabulary> {
    train_incremental_detailed(seq, params).map(|o| o.vocab)
}

pub fn train_incremental_detailed(seq: &[FrameFeatures], params: &TrainParams) -> Result<TrainingOutcome> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    params.matching.validate()?;
    let dim = seq[0].local_dim;
    if let Some(f) = seq.iter().find(|f| f.local_dim != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: f.local_dim,
        });
    }

    let mut trainer = Trainer {
        seq,
        dim,
        words: Vec::new(),
    };
    let mut prev: Vec<Option<u32>> = vec![None; seq[0].num_keypoints()];
    if seq.len() == 1 {
        for kp in 0..seq[0].num_keypoints() {
            trainer.create(0, kp);
        }
    }
    for t in 1..seq.len() {
        let matches = match_adjacent(&seq[t - 1], &seq[t], &params.matching)?;
        let mut cur: Vec<Option<u32>> = vec![None; seq[t].num_keypoints()];
        for m in &matches {
            let (a, b) = (m.query as usize, m.train as usize);
            if cur[b].is_some() {
                continue;
            }
            let w = match prev[a] {
                Some(w) => w,
                None => {
                    let w = trainer.create(t - 1, a);
                    prev[a] = Some(w);
                    w
                }
            };
            trainer.join(w, t, b);
            cur[b] = Some(w);
        }
        for (a, slot) in prev.iter().enumerate() {
            if slot.is_none() {
                trainer.create(t - 1, a);
            }
        }
        for (b, slot) in cur.iter_mut().enumerate() {
            if slot.is_none() {
                *slot = Some(trainer.create(t, b));
            }
        }
        prev = cur;
    }

    if let Some(eps) = params.merge_epsilon {
        merge_close_words(&mut trainer, eps);
    }

    let num_frames = seq.len() as f64;
    let words: Vec<VisualWord> = (0..trainer.words.len())
        .map(|i| {
            let w = &trainer.words[i];
            let idf = (num_frames / (1.0 + w.frames.len() as f64)).ln().max(0.0);
            VisualWord {
                word_id: i as u32,
                centroid: trainer.centroid(i),
                idf: idf as f32,
                member_count: w.members.len() as u32,
            }
        })
        .collect();

    let (vocab, mapping) = build_tree_with_mapping(
        &words,
        params.tree.branching,
        params.tree.max_levels,
        params.seed,
    )?;
    let vocab = vocab.with_meta(TrainingMeta {
        seed: params.seed,
        params_hash: params.params_hash(),
    });
    let mut final_words = Vec::with_capacity(mapping.len());
    let mut members = Vec::with_capacity(mapping.len());
    for (new_id, &old) in mapping.iter().enumerate() {
        let mut w = words[old].clone();
        w.word_id = new_id as u32;
        final_words.push(w);
        members.push(std::mem::take(&mut trainer.words[old].members));
    }
    Ok(TrainingOutcome {
        vocab,
        words: final_words,
        members,
    })
}
