//! Keyframe storage, inverted-index retrieval and two-phase loop detection.
//!
//! Phase one ranks keyframes by bag-of-words similarity, phase two accepts
//! the candidate whose global descriptor is closest to the query, provided
//! that distance is below a threshold.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::binio::{count_u32, read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::features::{read_frame_features, write_frame_features, FrameFeatures};
use crate::geometry::Pose;
use crate::kernels::dot_f64;
use crate::vocabulary::shared_term;
use crate::vocabulary::{load_vocab, save_vocab, VisualVector, Vocabulary, Weighting};

pub const INDEX_MAGIC: [u8; 4] = *b"DXDB";
pub const INDEX_VERSION: u32 = 1;
pub const INDEX_FILE: &str = "db.dxi";
pub const VOCAB_FILE: &str = "vocab.dxv";

/// File name of a stored frame inside a database directory.
pub fn frame_file_name(frame_id: u64) -> String {
    format!("{frame_id:010}.dxf")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub keyframe_id: u32,
    pub frame: FrameFeatures,
    pub visual_vector: VisualVector,
    pub pose: Pose,
    /// Keypoint indices quantized to each word.
    pub word_to_keypoints: BTreeMap<u32, Vec<u32>>,
}

impl Keyframe {
    pub fn frame_id(&self) -> u64 {
        self.frame.frame_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcdConfig {
    pub top_k: usize,
    pub global_dist_threshold: f64,
    /// Keyframes whose frame ids differ from the query by less than this are
    /// never loop candidates.
    pub min_temporal_gap: u64,
    /// Also exclude keyframes with a larger frame id than the query.
    pub causal: bool,
}

impl Default for LcdConfig {
    fn default() -> Self {
        Self {
            top_k: 10,
            global_dist_threshold: 0.3,
            min_temporal_gap: 30,
            causal: true,
        }
    }
}

impl LcdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.global_dist_threshold) {
            return Err(Error::Config("global_dist_threshold must lie in [0, 2]".into()));
        }
        Ok(())
    }

    /// Whether a stored frame may be reported as a loop for the query frame.
    pub fn admits(&self, query_frame: u64, candidate_frame: u64) -> bool {
        if self.causal && candidate_frame > query_frame {
            return false;
        }
        candidate_frame != query_frame && query_frame.abs_diff(candidate_frame) >= self.min_temporal_gap
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopClosure {
    pub query_id: u64,
    pub matched_keyframe_id: u32,
    pub matched_frame_id: u64,
    pub bow_score: f64,
    pub global_distance: f64,
}

/// Phase-one candidate together with its phase-two distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopCandidate {
    pub keyframe_id: u32,
    pub bow_score: f64,
    pub global_distance: f64,
}

/// `1 - <g1, g2>` for L2-normalized descriptors, clamped to `[0, 2]`.
pub fn global_distance(g1: &[f32], g2: &[f32]) -> Result<f64> {
    if g1.len() != g2.len() {
        return Err(Error::DimensionMismatch {
            expected: g1.len(),
            found: g2.len(),
        });
    }
    Ok((1.0 - dot_f64(g1, g2)).clamp(0.0, 2.0))
}

#[derive(Debug, Clone)]
pub struct KeyframeDatabase {
    vocab: Arc<Vocabulary>,
    weighting: Weighting,
    keyframes: Vec<Keyframe>,
    inverted: Vec<Vec<(u32, f64)>>,
}

impl KeyframeDatabase {
    pub fn new(vocab: Arc<Vocabulary>) -> Self {
        Self::with_weighting(vocab, Weighting::TfIdf)
    }

    pub fn with_weighting(vocab: Arc<Vocabulary>, weighting: Weighting) -> Self {
        let words = vocab.num_words();
        Self {
            vocab,
            weighting,
            keyframes: Vec::new(),
            inverted: vec![Vec::new(); words],
        }
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn len(&self) -> usize {
        self.keyframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keyframes.is_empty()
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn keyframe(&self, id: u32) -> Option<&Keyframe> {
        self.keyframes.get(id as usize)
    }

    pub fn postings(&self, word: u32) -> &[(u32, f64)] {
        self.inverted.get(word as usize).map_or(&[], |p| p.as_slice())
    }

    /// Quantizes a frame into a keyframe without storing it. The id is the
    /// one it would receive if added next.
    pub fn prepare_keyframe(&self, frame: FrameFeatures, pose: Pose) -> Result<Keyframe> {
        let words = self.vocab.quantize_frame(&frame)?;
        let visual_vector = self.vocab.vector_from_words(&words, self.weighting);
        let mut word_to_keypoints: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for (kp, w) in words.iter().enumerate() {
            word_to_keypoints.entry(*w).or_default().push(kp as u32);
        }
        Ok(Keyframe {
            keyframe_id: self.keyframes.len() as u32,
            frame,
            visual_vector,
            pose,
            word_to_keypoints,
        })
    }

    pub fn add_keyframe(&mut self, frame: FrameFeatures, pose: Pose) -> Result<u32> {
        if let Some(first) = self.keyframes.first() {
            if first.frame.global_dim() != frame.global_dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.frame.global_dim(),
                    found: frame.global_dim(),
                });
            }
        }
        let kf = self.prepare_keyframe(frame, pose)?;
        Ok(self.insert(kf))
    }

    fn insert(&mut self, mut kf: Keyframe) -> u32 {
        let id = self.keyframes.len() as u32;
        kf.keyframe_id = id;
        for &(w, weight) in kf.visual_vector.entries() {
            self.inverted[w as usize].push((id, weight));
        }
        self.keyframes.push(kf);
        id
    }

    /// Inverted index rebuilt from the stored vectors.
    pub fn rebuild_index(&self) -> Vec<Vec<(u32, f64)>> {
        let mut inv = vec![Vec::new(); self.vocab.num_words()];
        for kf in &self.keyframes {
            for &(w, weight) in kf.visual_vector.entries() {
                inv[w as usize].push((kf.keyframe_id, weight));
            }
        }
        inv
    }

    pub fn index_is_consistent(&self) -> bool {
        self.rebuild_index() == self.inverted
    }

    /// Top-`k` keyframes by similarity to `v`, descending, ties to the lower
    /// id. Keyframes with empty vectors never appear; neither do those for
    /// which `keep` returns false.
    pub fn query_topk_filtered(
        &self,
        v: &VisualVector,
        k: usize,
        keep: impl Fn(&Keyframe) -> bool,
    ) -> Vec<(u32, f64)> {
        if v.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut scores = vec![0.0f64; self.keyframes.len()];
        // words are visited in ascending order, so every keyframe sums its
        // shared terms in the same order as the dense merge
        for &(w, a) in v.entries() {
            for &(kf, b) in self.postings(w) {
                scores[kf as usize] += shared_term(a, b);
            }
        }
        let mut ranked: Vec<(u32, f64)> = self
            .keyframes
            .iter()
            .filter(|kf| !kf.visual_vector.is_empty() && keep(kf))
            .map(|kf| (kf.keyframe_id, scores[kf.keyframe_id as usize]))
            .collect();
        let order = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if ranked.len() > k {
            ranked.select_nth_unstable_by(k - 1, order);
            ranked.truncate(k);
        }
        ranked.sort_by(order);
        ranked
    }

    /// Top-`k` query omitting keyframe ids in `exclude`.
    pub fn query_topk(&self, v: &VisualVector, k: usize, exclude: std::ops::Range<u32>) -> Vec<(u32, f64)> {
        self.query_topk_filtered(v, k, |kf| !exclude.contains(&kf.keyframe_id))
    }

    /// Phase-one candidates admitted by `cfg` with their global distances,
    /// in BoW rank order.
    pub fn loop_candidates(&self, query: &Keyframe, cfg: &LcdConfig) -> Result<Vec<LoopCandidate>> {
        let qf = query.frame_id();
        let ranked = self.query_topk_filtered(&query.visual_vector, cfg.top_k, |kf| cfg.admits(qf, kf.frame_id()));
        ranked
            .into_iter()
            .map(|(id, score)| {
                let g = &self.keyframes[id as usize].frame.global_descriptor;
                Ok(LoopCandidate {
                    keyframe_id: id,
                    bow_score: score,
                    global_distance: global_distance(&query.frame.global_descriptor, g)?,
                })
            })
            .collect()
    }

    /// Closest admitted candidate in global-descriptor distance, if that
    /// distance is below the threshold. Ties keep the better BoW rank.
    pub fn detect_loop(&self, query: &Keyframe, cfg: &LcdConfig) -> Result<Option<LoopClosure>> {
        let candidates = self.loop_candidates(query, cfg)?;
        let best = candidates
            .iter()
            .fold(None::<&LoopCandidate>, |best, c| match best {
                Some(b) if b.global_distance <= c.global_distance => Some(b),
                _ => Some(c),
            });
        Ok(best
            .filter(|c| c.global_distance < cfg.global_dist_threshold)
            .map(|c| LoopClosure {
                query_id: query.frame_id(),
                matched_keyframe_id: c.keyframe_id,
                matched_frame_id: self.keyframes[c.keyframe_id as usize].frame_id(),
                bow_score: c.bow_score,
                global_distance: c.global_distance,
            }))
    }

    /// Writes the index file, one frame file per keyframe and a copy of the
    /// vocabulary into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for kf in &self.keyframes {
            write_frame_features(&kf.frame, dir.join(frame_file_name(kf.frame_id())))?;
        }
        save_vocab(&self.vocab, dir.join(VOCAB_FILE))?;
        write_file(&dir.join(INDEX_FILE), &self.encode_index()?)
    }

    pub fn encode_index(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::with_capacity(12 + self.keyframes.len() * 128);
        w.bytes(&INDEX_MAGIC);
        w.u32(INDEX_VERSION);
        w.u32(count_u32(self.keyframes.len(), "keyframe count")?);
        for kf in &self.keyframes {
            w.u64(kf.frame_id());
            for v in kf.pose.to_row_major() {
                w.f64(v);
            }
            w.u32(count_u32(kf.visual_vector.len(), "vector entries")?);
            for &(word, weight) in kf.visual_vector.entries() {
                w.u32(word);
                w.f32(weight as f32);
            }
        }
        Ok(w.buf)
    }

    /// Loads a database directory using its own vocabulary copy.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let vocab = Arc::new(load_vocab(dir.join(VOCAB_FILE))?);
        Self::load_with_vocab(dir, vocab)
    }

    /// Loads a database directory. Stored weights are renormalized and the
    /// inverted index is rebuilt.
    pub fn load_with_vocab(dir: impl AsRef<Path>, vocab: Arc<Vocabulary>) -> Result<Self> {
        let dir = dir.as_ref();
        let bytes = read_file(&dir.join(INDEX_FILE))?;
        let records = decode_index(&bytes)?;
        let mut db = Self::new(vocab);
        for rec in records {
            if let Some(w) = rec.vector.max_word() {
                if w as usize >= db.vocab.num_words() {
                    return Err(Error::CorruptPayload(format!(
                        "word {w} outside a vocabulary of {} words",
                        db.vocab.num_words()
                    )));
                }
            }
            let path: PathBuf = dir.join(frame_file_name(rec.frame_id));
            let frame = read_frame_features(&path)?;
            if frame.frame_id != rec.frame_id {
                return Err(Error::CorruptPayload(format!(
                    "{} holds frame {} instead of {}",
                    path.display(),
                    frame.frame_id,
                    rec.frame_id
                )));
            }
            let mut kf = db.prepare_keyframe(frame, rec.pose)?;
            kf.visual_vector = rec.vector;
            db.insert(kf);
        }
        Ok(db)
    }
}

/// One keyframe record of the index file.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexRecord {
    pub frame_id: u64,
    pub pose: Pose,
    pub vector: VisualVector,
}

pub fn decode_index(bytes: &[u8]) -> Result<Vec<IndexRecord>> {
    let mut r = ByteReader::new(bytes);
    r.magic(&INDEX_MAGIC)?;
    r.version(INDEX_VERSION)?;
    let n = r.u32("keyframe count")? as usize;
    // every record is at least 8 + 96 + 4 bytes
    if n > r.remaining() / 108 {
        return Err(Error::CorruptPayload(format!("{n} keyframes cannot fit in {} bytes", r.remaining())));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let frame_id = r.u64("frame id")?;
        let mut m = [0.0f64; 12];
        for v in &mut m {
            *v = r.f64("pose")?;
        }
        let pose = Pose::from_row_major(&m);
        if !m.iter().all(|v| v.is_finite()) || pose.orthonormality_error() > 1e-6 {
            return Err(Error::CorruptPayload(format!("frame {frame_id} has an invalid pose")));
        }
        let entries = r.u32("vector entries")? as usize;
        if entries > r.remaining() / 8 {
            return Err(Error::CorruptPayload(format!("{entries} vector entries do not fit")));
        }
        let mut weights = Vec::with_capacity(entries);
        let mut last: Option<u32> = None;
        for _ in 0..entries {
            let word = r.u32("word id")?;
            let weight = r.f32("weight")?;
            if last.is_some_and(|l| l >= word) || !(weight > 0.0) || !weight.is_finite() {
                return Err(Error::CorruptPayload(format!("frame {frame_id} has a malformed visual vector")));
            }
            last = Some(word);
            weights.push((word, weight as f64));
        }
        out.push(IndexRecord {
            frame_id,
            pose: Pose::new(pose.rotation, pose.translation),
            vector: VisualVector::from_weights(weights)?,
        });
    }
    r.finish("index")?;
    Ok(out)
}
