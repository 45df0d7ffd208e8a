//! Flat `key = value` configuration text.
//!
//! One namespace covers every tunable of the toolkit. Lines starting with
//! `#` are comments, values may be quoted, lists are comma separated with
//! optional brackets, and pairs are written `a:b`.

use std::path::Path;
use std::str::FromStr;

use crate::binio::read_file;
use crate::error::{Error, Result};
use crate::eval::{BenchConfig, LcdEvalConfig};
use crate::reloc::RelocConfig;
use crate::synth::SynthConfig;
use crate::vocabulary::TrainParams;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Settings {
    pub lcd: LcdEvalConfig,
    pub reloc: RelocConfig,
    pub synth: SynthConfig,
    pub train: TrainParams,
    pub bench: BenchConfig,
}

/// Every key understood by [`Settings::apply`].
pub const KEYS: &[&str] = &[
    "top_k",
    "global_dist_threshold",
    "min_temporal_gap",
    "causal",
    "gt_tolerance",
    "global_thresholds",
    "score_thresholds",
    "num_candidates",
    "group_gap",
    "match_ratio",
    "min_group_matches",
    "ransac_max_iterations",
    "inlier_threshold_px",
    "ransac_confidence",
    "min_inliers",
    "ransac_seed",
    "num_frames",
    "train_frames",
    "descriptors_per_frame",
    "num_clusters",
    "cluster_separation",
    "within_cluster_sigma",
    "descriptor_noise",
    "local_dim",
    "global_dim",
    "global_noise",
    "pixel_noise",
    "revisit_pairs",
    "alias_pairs",
    "num_revisits",
    "num_aliases",
    "min_pair_gap",
    "num_queries",
    "seed",
    "k",
    "levels",
    "top_matches",
    "train_ratio",
    "mutual_check",
    "train_seed",
    "merge_epsilon",
    "bench_warmup",
    "bench_iterations",
    "vocab_loads",
];

/// Splits text into `(line number, key, value)` entries.
pub fn parse_entries(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        let value = strip_trailing_comment(value.trim());
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        out.push((n + 1, key.to_string(), value.to_string()));
    }
    Ok(out)
}

fn strip_trailing_comment(v: &str) -> &str {
    if let Some(rest) = v.strip_prefix('"') {
        if let Some(end) = rest.find('"') {
            return &v[..end + 2];
        }
    }
    v.split(" #").next().unwrap_or("").trim()
}

fn scalar<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, found {v:?}"))),
    }
}

fn items(v: &str) -> impl Iterator<Item = &str> {
    let v = v.trim();
    let v = v.strip_prefix('[').and_then(|v| v.strip_suffix(']')).unwrap_or(v);
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    items(v).map(|s| scalar(key, s)).collect()
}

fn pairs(key: &str, v: &str) -> Result<Vec<(usize, usize)>> {
    items(v)
        .map(|s| {
            let (a, b) = s
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("{key}: expected a:b, found {s:?}")))?;
            Ok((scalar(key, a)?, scalar(key, b)?))
        })
        .collect()
}

impl Settings {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for (line, key, value) in parse_entries(text)? {
            s.apply(&key, &value)
                .map_err(|e| Error::Config(format!("line {line}: {e}")))?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.lcd.lcd.validate()?;
        self.reloc.validate()?;
        self.synth.validate()?;
        self.train.matching.validate()?;
        if self.train.tree.branching < 2 || self.train.tree.max_levels == 0 {
            return Err(Error::Config("k must be at least 2 and levels at least 1".into()));
        }
        Ok(())
    }

    /// Sets one key. Unknown keys are an error.
    pub fn apply(&mut self, key: &str, v: &str) -> Result<()> {
        let ransac = &mut self.reloc.ransac;
        let synth = &mut self.synth;
        match key {
            "top_k" => self.lcd.lcd.top_k = scalar(key, v)?,
            "global_dist_threshold" => self.lcd.lcd.global_dist_threshold = scalar(key, v)?,
            "min_temporal_gap" => self.lcd.lcd.min_temporal_gap = scalar(key, v)?,
            "causal" => self.lcd.lcd.causal = boolean(key, v)?,
            "gt_tolerance" => self.lcd.gt_tolerance = scalar(key, v)?,
            "global_thresholds" => self.lcd.global_thresholds = list(key, v)?,
            "score_thresholds" => self.lcd.score_thresholds = list(key, v)?,
            "num_candidates" => self.reloc.num_candidates = scalar(key, v)?,
            "group_gap" => self.reloc.group_gap = scalar(key, v)?,
            "match_ratio" => self.reloc.match_ratio = scalar(key, v)?,
            "min_group_matches" => self.reloc.min_group_matches = scalar(key, v)?,
            "ransac_max_iterations" => ransac.max_iterations = scalar(key, v)?,
            "inlier_threshold_px" => ransac.inlier_threshold_px = scalar(key, v)?,
            "ransac_confidence" => ransac.confidence = scalar(key, v)?,
            "min_inliers" => ransac.min_inliers = scalar(key, v)?,
            "ransac_seed" => ransac.seed = scalar(key, v)?,
            "num_frames" => synth.num_frames = scalar(key, v)?,
            "train_frames" => synth.train_frames = scalar(key, v)?,
            "descriptors_per_frame" => synth.descriptors_per_frame = scalar(key, v)?,
            "num_clusters" => synth.num_clusters = scalar(key, v)?,
            "cluster_separation" => synth.cluster_separation = scalar(key, v)?,
            "within_cluster_sigma" => synth.within_cluster_sigma = scalar(key, v)?,
            "descriptor_noise" => synth.descriptor_noise = scalar(key, v)?,
            "local_dim" => synth.local_dim = scalar(key, v)?,
            "global_dim" => synth.global_dim = scalar(key, v)?,
            "global_noise" => synth.global_noise = scalar(key, v)?,
            "pixel_noise" => synth.pixel_noise = scalar(key, v)?,
            "revisit_pairs" => synth.revisit_pairs = pairs(key, v)?,
            "alias_pairs" => synth.alias_pairs = pairs(key, v)?,
            "num_revisits" => synth.num_revisits = scalar(key, v)?,
            "num_aliases" => synth.num_aliases = scalar(key, v)?,
            "min_pair_gap" => synth.min_pair_gap = scalar(key, v)?,
            "num_queries" => synth.num_queries = scalar(key, v)?,
            "seed" => synth.seed = scalar(key, v)?,
            "k" => self.train.tree.branching = scalar(key, v)?,
            "levels" => self.train.tree.max_levels = scalar(key, v)?,
            "top_matches" => self.train.matching.max_pairs_kept = scalar(key, v)?,
            "train_ratio" => self.train.matching.ratio_threshold = scalar(key, v)?,
            "mutual_check" => self.train.matching.mutual_check = boolean(key, v)?,
            "train_seed" => self.train.seed = scalar(key, v)?,
            "merge_epsilon" => {
                self.train.merge_epsilon = match v.trim() {
                    "" | "none" => None,
                    s => Some(scalar(key, s)?),
                }
            }
            "bench_warmup" => self.bench.warmup = scalar(key, v)?,
            "bench_iterations" => self.bench.iterations = scalar(key, v)?,
            "vocab_loads" => self.bench.vocab_loads = scalar(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }
}
