//! Loop-closure and re-localization evaluation, and stage timings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::database::{KeyframeDatabase, LcdConfig, LoopCandidate};
use crate::error::{Error, Result};
use crate::features::{CameraIntrinsics, FrameFeatures};
use crate::geometry::Pose;
use crate::reloc::{relocalize, RelocConfig};
use crate::vocabulary::{load_vocab, Weighting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LcdMode {
    /// BoW candidates verified by global-descriptor distance.
    TwoPhase,
    /// Top BoW candidate, tf-idf weights.
    Phase1,
    /// Top BoW candidate, raw term frequencies.
    Phase1Tf,
}

impl LcdMode {
    pub const ALL: [LcdMode; 3] = [LcdMode::TwoPhase, LcdMode::Phase1, LcdMode::Phase1Tf];

    pub fn name(self) -> &'static str {
        match self {
            LcdMode::TwoPhase => "two_phase",
            LcdMode::Phase1 => "phase1_top1",
            LcdMode::Phase1Tf => "phase1_tf",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcdEvalConfig {
    pub lcd: LcdConfig,
    /// A detection is correct if it lands within this many frames of a
    /// planted source.
    pub gt_tolerance: u64,
    /// Global-distance thresholds swept in two-phase mode.
    pub global_thresholds: Vec<f64>,
    /// BoW score thresholds swept in the phase-one modes.
    pub score_thresholds: Vec<f64>,
}

impl Default for LcdEvalConfig {
    fn default() -> Self {
        Self {
            lcd: LcdConfig::default(),
            gt_tolerance: 2,
            global_thresholds: (0..=20).map(|i| i as f64 * 0.05).collect(),
            score_thresholds: (0..=20).map(|i| i as f64 * 0.1).collect(),
        }
    }
}

/// Best candidate of one query in one mode: matched frame id and the value
/// thresholded in that mode (global distance or BoW score).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub matched_frame: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub query_frame: u64,
    pub two_phase: Option<Detection>,
    pub phase1: Option<Detection>,
    pub phase1_tf: Option<Detection>,
}

impl QueryOutcome {
    pub fn get(&self, mode: LcdMode) -> Option<Detection> {
        match mode {
            LcdMode::TwoPhase => self.two_phase,
            LcdMode::Phase1 => self.phase1,
            LcdMode::Phase1Tf => self.phase1_tf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub mode: LcdMode,
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl PrPoint {
    /// `None` when there are no detections.
    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `None` when there are no planted loops.
    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }
}

/// Runs every keyframe of `db` as a query against the others in the three
/// modes.
pub fn lcd_outcomes(db: &KeyframeDatabase, cfg: &LcdConfig) -> Result<Vec<QueryOutcome>> {
    let frames: Vec<FrameFeatures> = db.keyframes().iter().map(|kf| kf.frame.clone()).collect();
    lcd_outcomes_for(db, &frames, cfg)
}

/// Runs each query frame against `db` in the three modes. Weights for the
/// raw-frequency mode are recomputed from the stored frames.
pub fn lcd_outcomes_for(db: &KeyframeDatabase, queries: &[FrameFeatures], cfg: &LcdConfig) -> Result<Vec<QueryOutcome>> {
    cfg.validate()?;
    let mut tf_db = KeyframeDatabase::with_weighting(Arc::clone(db.vocabulary()), Weighting::TermFrequency);
    for kf in db.keyframes() {
        tf_db.add_keyframe(kf.frame.clone(), kf.pose)?;
    }
    let frame_of = |id: u32| db.keyframes()[id as usize].frame_id();
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        let kf = db.prepare_keyframe(q.clone(), Pose::identity())?;
        let candidates = db.loop_candidates(&kf, cfg)?;
        let two_phase = candidates
            .iter()
            .fold(None::<&LoopCandidate>, |best, c| match best {
                Some(b) if b.global_distance <= c.global_distance => Some(b),
                _ => Some(c),
            })
            .map(|c| Detection { matched_frame: frame_of(c.keyframe_id), value: c.global_distance });
        let phase1 = candidates
            .first()
            .map(|c| Detection { matched_frame: frame_of(c.keyframe_id), value: c.bow_score });
        let qf = q.frame_id;
        let tf_vector = tf_db.vocabulary().compute_visual_vector_with(q, Weighting::TermFrequency)?;
        let phase1_tf = tf_db
            .query_topk_filtered(&tf_vector, 1, |c| cfg.admits(qf, c.frame_id()))
            .first()
            .map(|&(id, s)| Detection { matched_frame: frame_of(id), value: s });
        out.push(QueryOutcome { query_frame: qf, two_phase, phase1, phase1_tf });
    }
    Ok(out)
}

/// Precision/recall points for every mode and threshold. A two-phase
/// detection fires when its distance is below the threshold, a phase-one
/// detection when its score reaches it.
pub fn pr_sweep(outcomes: &[QueryOutcome], loops: &[(u64, u64)], cfg: &LcdEvalConfig) -> Vec<PrPoint> {
    let mut sources: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for &(s, t) in loops {
        sources.entry(t).or_default().push(s);
    }
    let loop_queries = outcomes.iter().filter(|o| sources.contains_key(&o.query_frame)).count();
    let mut points = Vec::new();
    for mode in LcdMode::ALL {
        let thresholds = match mode {
            LcdMode::TwoPhase => &cfg.global_thresholds,
            _ => &cfg.score_thresholds,
        };
        for &threshold in thresholds {
            let (mut tp, mut fp) = (0, 0);
            for o in outcomes {
                let Some(d) = o.get(mode) else { continue };
                let fires = match mode {
                    LcdMode::TwoPhase => d.value < threshold,
                    _ => d.value >= threshold,
                };
                if !fires {
                    continue;
                }
                let correct = sources
                    .get(&o.query_frame)
                    .is_some_and(|s| s.iter().any(|&s| s.abs_diff(d.matched_frame) <= cfg.gt_tolerance));
                if correct {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
            points.push(PrPoint { mode, threshold, tp, fp, fn_: loop_queries - tp });
        }
    }
    points
}

pub fn run_lcd_eval(db: &KeyframeDatabase, loops: &[(u64, u64)], cfg: &LcdEvalConfig) -> Result<Vec<PrPoint>> {
    let outcomes = lcd_outcomes(db, &cfg.lcd)?;
    Ok(pr_sweep(&outcomes, loops, cfg))
}

pub const PR_HEADER: &str = "mode,threshold,tp,fp,fn,precision,recall";

pub fn pr_csv(points: &[PrPoint]) -> String {
    let mut s = String::from(PR_HEADER);
    s.push('\n');
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6}"));
    for p in points {
        let _ = writeln!(
            s,
            "{},{:.4},{},{},{},{},{}",
            p.mode.name(),
            p.threshold,
            p.tp,
            p.fp,
            p.fn_,
            opt(p.precision()),
            opt(p.recall())
        );
    }
    s
}

/// Highest precision among points of `mode` with recall at least `recall`.
pub fn best_precision_at_recall(points: &[PrPoint], mode: LcdMode, recall: f64) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.mode == mode && p.recall().is_some_and(|r| r >= recall))
        .filter_map(|p| p.precision())
        .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelocRecord {
    pub query_id: u64,
    pub success: bool,
    pub rotation_error_deg: Option<f64>,
    pub translation_error_m: Option<f64>,
    pub inliers: usize,
    pub time_ms: f64,
}

/// Relocalizes every query and compares against its ground-truth pose.
pub fn run_reloc_eval(
    db: &KeyframeDatabase,
    queries: &[FrameFeatures],
    truth: &BTreeMap<u64, Pose>,
    k: &CameraIntrinsics,
    cfg: &RelocConfig,
) -> Result<Vec<RelocRecord>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        let gt = truth
            .get(&q.frame_id)
            .ok_or_else(|| Error::MissingGroundTruth(format!("no pose for query frame {}", q.frame_id)))?;
        let start = Instant::now();
        let r = relocalize(db, q, k, cfg);
        let time_ms = start.elapsed().as_secs_f64() * 1e3;
        out.push(RelocRecord {
            query_id: q.frame_id,
            success: r.pose.is_some(),
            rotation_error_deg: r.pose.map(|p| p.rotation_error(gt).to_degrees()),
            translation_error_m: r.pose.map(|p| p.center_error(gt)),
            inliers: r.inliers.len(),
            time_ms,
        });
    }
    Ok(out)
}

pub fn success_rate(records: &[RelocRecord]) -> Option<f64> {
    (!records.is_empty()).then(|| records.iter().filter(|r| r.success).count() as f64 / records.len() as f64)
}

pub const RELOC_HEADER: &str = "query_id,success,rotation_error_deg,translation_error_m,inliers,time_ms";

/// Per-query rows followed by a summary row holding the success rate and
/// the mean errors over successful queries.
pub fn reloc_csv(records: &[RelocRecord]) -> String {
    let mut s = String::from(RELOC_HEADER);
    s.push('\n');
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.9}"));
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:.3}",
            r.query_id,
            r.success as u8,
            opt(r.rotation_error_deg),
            opt(r.translation_error_m),
            r.inliers,
            r.time_ms
        );
    }
    let ok: Vec<&RelocRecord> = records.iter().filter(|r| r.success).collect();
    let mean = |f: fn(&RelocRecord) -> Option<f64>| {
        (!ok.is_empty()).then(|| ok.iter().filter_map(|r| f(r)).sum::<f64>() / ok.len() as f64)
    };
    let total_ms: f64 = records.iter().map(|r| r.time_ms).sum();
    let mean_ms = if records.is_empty() { 0.0 } else { total_ms / records.len() as f64 };
    let _ = writeln!(
        s,
        "summary,{},{},{},{},{:.3}",
        success_rate(records).map_or(String::new(), |v| format!("{v:.6}")),
        opt(mean(|r| r.rotation_error_deg)),
        opt(mean(|r| r.translation_error_m)),
        ok.iter().map(|r| r.inliers).sum::<usize>(),
        mean_ms
    );
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub stage: &'static str,
    pub iterations: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

pub const BENCH_HEADER: &str = "stage,iterations,mean_ms,p95_ms";

fn summarize(stage: &'static str, mut samples: Vec<f64>) -> BenchRow {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let mean = if n == 0 { 0.0 } else { samples.iter().sum::<f64>() / n as f64 };
    let p95 = if n == 0 { 0.0 } else { samples[((n as f64 * 0.95).ceil() as usize).clamp(1, n) - 1] };
    BenchRow { stage, iterations: n, mean_ms: mean, p95_ms: p95 }
}

fn time_ms(f: impl FnOnce()) -> f64 {
    let start = Instant::now();
    f();
    start.elapsed().as_secs_f64() * 1e3
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub warmup: usize,
    pub iterations: usize,
    pub vocab_loads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { warmup: 3, iterations: 50, vocab_loads: 3 }
    }
}

/// Times the toolkit's per-frame stages, cycling through the database's
/// own frames as queries. Rows always come in the same order.
pub fn run_benchmark(
    vocab_path: impl AsRef<Path>,
    db: &KeyframeDatabase,
    k: &CameraIntrinsics,
    lcd: &LcdConfig,
    reloc: &RelocConfig,
    bench: &BenchConfig,
) -> Result<Vec<BenchRow>> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let vocab_path = vocab_path.as_ref();
    let mut load = Vec::new();
    for _ in 0..bench.vocab_loads.max(1) {
        let start = Instant::now();
        let v = load_vocab(vocab_path)?;
        load.push(start.elapsed().as_secs_f64() * 1e3);
        drop(v);
    }

    let vocab = db.vocabulary();
    let n = db.len();
    let frame = |i: usize| &db.keyframes()[i % n];
    let mut quant = Vec::new();
    let mut topk = Vec::new();
    let mut detect = Vec::new();
    let mut reloc_t = Vec::new();
    for i in 0..bench.warmup + bench.iterations {
        let kf = frame(i * 7919);
        let mut vector = None;
        let tq = time_ms(|| vector = Some(vocab.compute_visual_vector_with(&kf.frame, db.weighting())));
        let vector = vector.expect("timed closure ran")?;
        let tt = time_ms(|| {
            std::hint::black_box(db.query_topk(&vector, lcd.top_k, 0..0));
        });
        let mut detected = Ok(None);
        let td = time_ms(|| detected = db.detect_loop(kf, lcd));
        detected?;
        let tr = time_ms(|| {
            std::hint::black_box(relocalize(db, &kf.frame, k, reloc));
        });
        if i >= bench.warmup {
            quant.push(tq);
            topk.push(tt);
            detect.push(td);
            reloc_t.push(tr);
        }
    }
    Ok(vec![
        summarize("vocab_load", load),
        summarize("quantize_vector", quant),
        summarize("query_topk", topk),
        summarize("detect_loop", detect),
        summarize("relocalize", reloc_t),
    ])
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(BENCH_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{:.4},{:.4}", r.stage, r.iterations, r.mean_ms, r.p95_ms);
    }
    s
}
